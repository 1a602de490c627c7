#pragma once

// Command implementations behind the `canm` executable. Each command writes
// its machine-readable output to `out` and diagnostics (progress, timing) to
// `err`, and returns the process exit code.
//
// Exit codes:
//   0  success (infer: a direction was decided)
//   1  failed verification claim or other error
//   2  pair file could not be parsed
//   3  infer: Undecided
//   4  infer: model training failed

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "canm/common.hpp"
#include "canm/model.hpp"

namespace canm::cli {

enum ExitCode : int { ok = 0, failure = 1, parse_error = 2, undecided = 3, training_failure = 4 };

class ParseError : public DataError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct PairFile {
  std::string path;
  std::string name;  // file stem
  std::vector<double> x;
  std::vector<double> y;
  std::size_t dropped = 0;  // rows containing NaN or Inf
  bool had_header = false;
};

/// Two whitespace-separated numeric columns; blank lines are ignored and one
/// leading header line with non-numeric tokens is skipped.
PairFile parse_pair(std::istream& in, const std::string& path = "<input>");
PairFile parse_pair_file(const std::string& path);

enum class Method { canm, anm_statistic, anm_significance };

std::string to_string(Method m);
Method method_from_string(const std::string& s);  // also accepts "anm" for anm_statistic

/// Worker count from CANM_THREADS, else hardware concurrency (at least 1).
std::size_t thread_budget();

struct InferOptions {
  std::string pair_path;
  Method method = Method::canm;
  double delta = 0.01;
  std::size_t k_max = 1;
  std::uint64_t seed = 0;
  vae::TrainConfig train;
  std::size_t permutations = 200;
  double alpha = 0.01;
  std::size_t threads = 1;
  std::string out_path;  // optional JSON copy
};

int cmd_infer(const InferOptions& opt, std::ostream& out, std::ostream& err);

struct BenchConfig {
  std::vector<std::size_t> depths{0, 3};
  std::vector<std::size_t> sizes{1000};
  std::size_t pairs_per_cell = 50;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::canm, Method::anm_statistic, Method::anm_significance};
  double delta = 0.01;
  std::size_t k_max = 1;
  vae::TrainConfig train;
  std::size_t permutations = 200;
  double alpha = 0.01;
  std::size_t threads = 1;

  void validate() const;
};

struct PairRow {
  Method method = Method::canm;
  std::size_t depth = 0;
  std::size_t m = 0;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Verdict verdict = Verdict::undecided;
  double l_xy = 0.0;
  double l_yx = 0.0;
  bool failed = false;
  std::string error;

  bool correct() const noexcept { return !failed && verdict == Verdict::forward; }
  double margin() const noexcept { return l_xy - l_yx; }
};

struct CellSummary {
  Method method = Method::canm;
  std::size_t depth = 0;
  std::size_t m = 0;
  std::size_t pairs = 0;
  std::size_t correct = 0;
  std::size_t undecided = 0;
  std::size_t failures = 0;
  double mean_margin = 0.0;  // over pairs that did not fail

  double accuracy() const noexcept { return pairs ? static_cast<double>(correct) / static_cast<double>(pairs) : 0.0; }
  double undecided_rate() const noexcept {
    return pairs ? static_cast<double>(undecided) / static_cast<double>(pairs) : 0.0;
  }
};

struct BenchResult {
  std::vector<PairRow> rows;       // sorted by (method, depth, m, index)
  std::vector<CellSummary> cells;  // sorted by (method, depth, m)
};

/// Seed of pair `index` in cell (depth, m).
std::uint64_t pair_seed(std::uint64_t root, std::size_t depth, std::size_t m, std::size_t index);

/// Ground truth is always x -> y. Per-pair failures are recorded, never thrown.
BenchResult run_bench(const BenchConfig& cfg, std::ostream* progress = nullptr);

/// Cell summaries recomputed from per-pair rows.
std::vector<CellSummary> summarize(const std::vector<PairRow>& rows);

void write_rows_csv(std::ostream& os, const std::vector<PairRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells);
nlohmann::json bench_to_json(const BenchConfig& cfg, const BenchResult& r);

/// Writes pairs.csv, summary.csv and bench.json into out_dir (when non-empty)
/// and the summary CSV to `out`.
int cmd_bench(const BenchConfig& cfg, const std::string& out_dir, std::ostream& out, std::ostream& err);

struct GenOptions {
  std::size_t m = 1000;
  std::size_t depth = 0;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

/// Writes pair.txt, sample.csv and spec.json into out_dir.
int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err);

struct VerifyOptions {
  double a = 1.0;
  double b = 1.0;
  std::size_t m = 2000;
  std::uint64_t seed = 0;
  std::size_t permutations = 200;
  vae::TrainConfig train;
  std::size_t threads = 1;
};

int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace canm::cli
