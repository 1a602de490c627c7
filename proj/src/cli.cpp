#include "canm/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "canm/anm.hpp"
#include "canm/direction.hpp"
#include "canm/kernels.hpp"
#include "canm/synthgen.hpp"
#include "canm/theory.hpp"

namespace canm::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',' || ch == ';') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool parse_number(const std::string& tok, double& v) {
  const char* first = tok.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch == '\n' ? ' ' : ch;
  }
  return q + "\"";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw Error("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

direction::DirectionConfig direction_config(const vae::TrainConfig& train, std::uint64_t seed, std::size_t k_max,
                                            double delta, std::size_t threads) {
  direction::DirectionConfig cfg;
  cfg.train = train;
  cfg.train.seed = seed;
  cfg.k_max = k_max;
  cfg.delta = delta;
  cfg.threads = threads;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------- parsing

PairFile parse_pair(std::istream& in, const std::string& path) {
  PairFile pf;
  pf.path = path;
  pf.name = fs::path(path).stem().string();
  std::string line;
  std::size_t lineno = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    std::vector<double> vals(toks.size());
    bool numeric = true;
    for (std::size_t i = 0; i < toks.size(); ++i) numeric = numeric && parse_number(toks[i], vals[i]);
    if (!numeric) {
      if (!seen_content) {
        pf.had_header = true;
        seen_content = true;
        continue;
      }
      throw ParseError(path, lineno, "non-numeric value in data row");
    }
    seen_content = true;
    if (toks.size() != 2)
      throw ParseError(path, lineno, "expected 2 columns, found " + std::to_string(toks.size()));
    if (!std::isfinite(vals[0]) || !std::isfinite(vals[1])) {
      ++pf.dropped;
      continue;
    }
    pf.x.push_back(vals[0]);
    pf.y.push_back(vals[1]);
  }
  if (pf.x.size() < 2)
    throw ParseError(path, lineno, "need at least 2 valid rows, found " + std::to_string(pf.x.size()));
  return pf;
}

PairFile parse_pair_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError(path, 0, "cannot open file");
  return parse_pair(f, path);
}

// ---------------------------------------------------------------- misc

std::string to_string(Method m) {
  switch (m) {
    case Method::canm: return "canm";
    case Method::anm_statistic: return "anm_statistic";
    case Method::anm_significance: return "anm_significance";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "canm") return Method::canm;
  if (s == "anm" || s == "anm_statistic") return Method::anm_statistic;
  if (s == "anm_significance") return Method::anm_significance;
  throw Error("unknown method '" + s + "' (expected canm, anm_statistic or anm_significance)");
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("CANM_THREADS")) {
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), n);
    if (ec == std::errc() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------- infer

int cmd_infer(const InferOptions& opt, std::ostream& out, std::ostream& err) {
  PairFile pf;
  std::optional<vae::PairDataset> parsed;
  try {
    pf = parse_pair_file(opt.pair_path);
    parsed = vae::PairDataset::standardize(pf.x, pf.y);
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return parse_error;
  }
  const vae::PairDataset& data = *parsed;
  if (pf.dropped) err << "dropped " << pf.dropped << " rows with NaN or Inf\n";

  nlohmann::json report;
  Verdict verdict = Verdict::undecided;
  try {
    if (opt.method == Method::canm) {
      const auto r = direction::infer(data, direction_config(opt.train, opt.seed, opt.k_max, opt.delta, opt.threads));
      err << "runtime " << r.runtime_seconds << " s\n";
      verdict = r.verdict;
      report = direction::report_to_json(r);
    } else {
      anm::AnmConfig cfg;
      cfg.permutations = opt.permutations;
      cfg.alpha = opt.alpha;
      cfg.seed = opt.seed;
      const auto mode = opt.method == Method::anm_statistic ? anm::Mode::statistic : anm::Mode::significance;
      const auto r = anm::anm_direction(data, cfg);
      verdict = r.verdict(mode);
      report = anm::anm_report_json(r, mode, cfg, data.size());
    }
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return training_failure;
  } catch (const NumericError& e) {
    err << "training failed: " << e.what() << "\n";
    return training_failure;
  }
  report["pair"] = pf.name;
  report["dropped_rows"] = pf.dropped;

  out << "verdict: " << canm::to_string(verdict) << " (L_xy=" << num(report["l_xy"].get<double>())
      << ", L_yx=" << num(report["l_yx"].get<double>()) << ")\n";
  out << report.dump(2) << "\n";
  if (!opt.out_path.empty()) write_file(opt.out_path, report.dump(2) + "\n");
  return verdict == Verdict::undecided ? undecided : ok;
}

// ---------------------------------------------------------------- bench

void BenchConfig::validate() const {
  if (depths.empty() || sizes.empty() || methods.empty()) throw Error("bench: depths, sizes and methods must be non-empty");
  if (pairs_per_cell < 1) throw Error("bench: pairs per cell must be >= 1");
  for (auto m : sizes)
    if (m < 20) throw Error("bench: sample sizes must be >= 20");
  if (threads < 1) throw Error("bench: need at least one thread");
  train.validate();
}

std::uint64_t pair_seed(std::uint64_t root, std::size_t depth, std::size_t m, std::size_t index) {
  return derive_seed(root, {stream::bench, depth, m, index});
}

namespace {

struct TaskOutput {
  std::vector<PairRow> rows;
  double seconds = 0.0;
};

TaskOutput run_task(const BenchConfig& cfg, std::size_t depth, std::size_t m, std::size_t index) {
  const auto t0 = std::chrono::steady_clock::now();
  TaskOutput out;
  const std::uint64_t seed = pair_seed(cfg.seed, depth, m, index);
  auto base = [&](Method meth) {
    PairRow r;
    r.method = meth;
    r.depth = depth;
    r.m = m;
    r.index = index;
    r.seed = seed;
    return r;
  };
  auto fail_all = [&](const std::string& what) {
    for (Method meth : cfg.methods) {
      PairRow r = base(meth);
      r.failed = true;
      r.error = what;
      out.rows.push_back(r);
    }
  };

  std::optional<vae::PairDataset> data;
  try {
    const auto c = synthgen::generate(m, depth, seed);
    data = vae::PairDataset::standardize(c.sample.x, c.sample.y);
  } catch (const std::exception& e) {
    fail_all(e.what());
    return out;
  }

  std::optional<anm::AnmResult> anm_result;
  std::string anm_error;
  for (Method meth : cfg.methods) {
    PairRow r = base(meth);
    try {
      if (meth == Method::canm) {
        const auto rep = direction::infer(*data, direction_config(cfg.train, seed, cfg.k_max, cfg.delta, 1));
        r.verdict = rep.verdict;
        r.l_xy = rep.l_xy;
        r.l_yx = rep.l_yx;
      } else {
        if (!anm_result && anm_error.empty()) {
          try {
            anm::AnmConfig ac;
            ac.permutations = cfg.permutations;
            ac.alpha = cfg.alpha;
            ac.seed = seed;
            anm_result = anm::anm_direction(*data, ac);
          } catch (const std::exception& e) {
            anm_error = e.what();
          }
        }
        if (!anm_result) throw Error(anm_error);
        const auto mode = meth == Method::anm_statistic ? anm::Mode::statistic : anm::Mode::significance;
        r.verdict = anm_result->verdict(mode);
        r.l_xy = -anm_result->forward.statistic;
        r.l_yx = -anm_result->backward.statistic;
      }
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      r.verdict = Verdict::undecided;
    }
    out.rows.push_back(r);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

auto row_key(const PairRow& r) { return std::tuple(static_cast<int>(r.method), r.depth, r.m, r.index); }

}  // namespace

BenchResult run_bench(const BenchConfig& cfg, std::ostream* progress) {
  cfg.validate();
  struct Task {
    std::size_t depth, m, index;
  };
  std::vector<Task> tasks;
  for (auto d : cfg.depths)
    for (auto m : cfg.sizes)
      for (std::size_t i = 0; i < cfg.pairs_per_cell; ++i) tasks.push_back({d, m, i});

  std::vector<TaskOutput> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const std::size_t workers = std::min(cfg.threads, tasks.size());
  auto worker = [&] {
    if (workers > 1) kernels::limit_threads(1);
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      results[t] = run_task(cfg, tasks[t].depth, tasks[t].m, tasks[t].index);
      if (progress) {
        std::lock_guard lock(log_mutex);
        *progress << "pair depth=" << tasks[t].depth << " m=" << tasks[t].m << " index=" << tasks[t].index;
        for (const auto& r : results[t].rows)
          *progress << " " << to_string(r.method) << "=" << (r.failed ? "failed" : canm::to_string(r.verdict));
        *progress << " (" << results[t].seconds << " s)\n";
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BenchResult res;
  for (auto& t : results)
    for (auto& r : t.rows) res.rows.push_back(std::move(r));
  std::sort(res.rows.begin(), res.rows.end(), [](const PairRow& a, const PairRow& b) { return row_key(a) < row_key(b); });
  res.cells = summarize(res.rows);
  if (progress) {
    std::map<std::pair<std::size_t, std::size_t>, double> cell_seconds;
    for (std::size_t t = 0; t < tasks.size(); ++t) cell_seconds[{tasks[t].depth, tasks[t].m}] += results[t].seconds;
    for (const auto& [key, s] : cell_seconds)
      *progress << "cell depth=" << key.first << " m=" << key.second << " wall " << s << " s (summed over pairs)\n";
  }
  return res;
}

std::vector<CellSummary> summarize(const std::vector<PairRow>& rows) {
  std::map<std::tuple<int, std::size_t, std::size_t>, CellSummary> cells;
  std::map<std::tuple<int, std::size_t, std::size_t>, std::size_t> margin_count;
  for (const auto& r : rows) {
    const auto key = std::tuple(static_cast<int>(r.method), r.depth, r.m);
    auto& c = cells[key];
    c.method = r.method;
    c.depth = r.depth;
    c.m = r.m;
    ++c.pairs;
    if (r.correct()) ++c.correct;
    if (r.failed) {
      ++c.failures;
    } else {
      if (r.verdict == Verdict::undecided) ++c.undecided;
      c.mean_margin += r.margin();
      ++margin_count[key];
    }
  }
  std::vector<CellSummary> out;
  for (auto& [key, c] : cells) {
    if (margin_count[key]) c.mean_margin /= static_cast<double>(margin_count[key]);
    out.push_back(c);
  }
  return out;
}

void write_rows_csv(std::ostream& os, const std::vector<PairRow>& rows) {
  os << "method,depth,m,index,seed,verdict,l_xy,l_yx,margin,correct,error\n";
  for (const auto& r : rows) {
    os << to_string(r.method) << ',' << r.depth << ',' << r.m << ',' << r.index << ',' << r.seed << ','
       << (r.failed ? "Failed" : canm::to_string(r.verdict)) << ',';
    if (r.failed)
      os << ",,";
    else
      os << num(r.l_xy) << ',' << num(r.l_yx) << ',' << num(r.margin());
    os << ',' << (r.correct() ? 1 : 0) << ',' << csv_field(r.error) << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells) {
  os << "method,depth,m,pairs,correct,accuracy,undecided_rate,failures,mean_margin\n";
  for (const auto& c : cells)
    os << to_string(c.method) << ',' << c.depth << ',' << c.m << ',' << c.pairs << ',' << c.correct << ','
       << num(c.accuracy()) << ',' << num(c.undecided_rate()) << ',' << c.failures << ',' << num(c.mean_margin)
       << '\n';
}

nlohmann::json bench_to_json(const BenchConfig& cfg, const BenchResult& r) {
  nlohmann::json methods = nlohmann::json::array();
  for (auto m : cfg.methods) methods.push_back(to_string(m));
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells)
    cells.push_back({{"method", to_string(c.method)},
                     {"depth", c.depth},
                     {"m", c.m},
                     {"pairs", c.pairs},
                     {"correct", c.correct},
                     {"accuracy", c.accuracy()},
                     {"undecided_rate", c.undecided_rate()},
                     {"failures", c.failures},
                     {"mean_margin", c.mean_margin}});
  return {{"config",
           {{"depths", cfg.depths},
            {"sizes", cfg.sizes},
            {"pairs_per_cell", cfg.pairs_per_cell},
            {"seed", cfg.seed},
            {"methods", methods},
            {"delta", cfg.delta},
            {"k_max", cfg.k_max},
            {"epochs", cfg.train.epochs},
            {"lr", cfg.train.lr},
            {"mc_samples", cfg.train.mc_samples},
            {"permutations", cfg.permutations},
            {"alpha", cfg.alpha}}},
          {"cells", cells}};
}

int cmd_bench(const BenchConfig& cfg, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  const BenchResult r = run_bench(cfg, &err);
  std::ostringstream rows, summary;
  write_rows_csv(rows, r.rows);
  write_summary_csv(summary, r.cells);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_file(fs::path(out_dir) / "pairs.csv", rows.str());
    write_file(fs::path(out_dir) / "summary.csv", summary.str());
    write_file(fs::path(out_dir) / "bench.json", bench_to_json(cfg, r).dump(2) + "\n");
  }
  out << summary.str();
  err << "total wall time " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
      << " s\n";
  return ok;
}

// ---------------------------------------------------------------- gen

int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream&) {
  const auto c = synthgen::generate(opt.m, opt.depth, opt.seed);
  ensure_dir(opt.out_dir);
  std::ostringstream pair, sample;
  synthgen::write_pair_file(pair, c.sample.x, c.sample.y);
  synthgen::write_sample_csv(sample, c.sample);
  const fs::path dir(opt.out_dir);
  write_file(dir / "pair.txt", pair.str());
  write_file(dir / "sample.csv", sample.str());
  write_file(dir / "spec.json", synthgen::spec_to_json(c.spec).dump(2) + "\n");
  out << "wrote pair.txt sample.csv spec.json (m=" << opt.m << ", depth=" << opt.depth << ", seed=" << opt.seed
      << ")\n";
  return ok;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  using theory::Claim;
  const theory::LinearGaussianSpec spec{opt.a, opt.b};
  const std::size_t m = opt.m;
  const bool low_power = m < 500;
  const std::string power_note = low_power ? "reduced power at this sample size; tolerance widened" : "";
  std::vector<Claim> claims;

  {
    const std::size_t k0_m = std::clamp<std::size_t>(m, 50, 1000);
    const auto c = synthgen::generate(k0_m, 0, derive_seed(opt.seed, {stream::theory, 3}));
    const auto data = vae::PairDataset::standardize(c.sample.x, c.sample.y);
    vae::TrainConfig tc = opt.train;
    tc.seed = opt.seed;
    const double dev = theory::k0_equivalence(data, tc);
    claims.push_back({"k0_equals_additive_noise_likelihood", dev, 1e-10, dev < 1e-10, ""});
  }

  const auto bw = theory::backward_coeffs(spec);
  const double s = opt.a * opt.a + opt.b * opt.b + 1.0;
  const double cons = theory::consistent_noise_variance(spec);
  {
    const double resid = std::abs(bw.c * bw.c * s + bw.d * bw.d + cons - 1.0);
    std::string note;
    if (opt.a != 0.0)
      note = "with unit noise variance the backward model would give var(X) = " + brief(bw.c * bw.c * s + bw.d * bw.d + 1.0) +
             "; the consistent noise variance is " + brief(cons);
    claims.push_back({"backward_variance_identity", resid, 1e-12, resid < 1e-12, note});
  }

  const auto chk = theory::verify_backward(spec, m, opt.seed, opt.permutations);
  if (opt.a == 0.0) {
    const double tol = (low_power ? 4.0 : 3.0) / std::sqrt(static_cast<double>(m));
    claims.push_back({"degenerate_case_independence", std::abs(chk.corr_xy), tol, std::abs(chk.corr_xy) < tol,
                      "a = 0: backward model is X = noise"});
  }
  claims.push_back({"noise_independent_of_effect", chk.p_eps_y, 0.01, chk.p_eps_y > 0.01, power_note});
  claims.push_back({"noise_independent_of_hidden", chk.p_eps_nhat, 0.01, chk.p_eps_nhat > 0.01,
                    chk.realizable ? power_note : "no unit-variance hidden noise exists when a^2 > b^2 + 1"});
  {
    const double sd = std::max(cons, 1e-3) * std::sqrt(2.0 / static_cast<double>(m - 1));
    const double tol = (low_power ? 6.0 : 5.0) * sd;
    const double dev = std::abs(chk.eps_variance - cons);
    claims.push_back({"noise_variance", dev, tol, chk.realizable && dev < tol,
                      "sample variance " + brief(chk.eps_variance) + ", expected " + brief(cons) + ", stated " +
                          brief(chk.claimed_variance)});
  }
  {
    const double tol = 0.05 * std::max(1.0, std::sqrt(1000.0 / static_cast<double>(m)));
    const double gap =
        theory::nonidentifiability_gap(spec, m, direction_config(opt.train, opt.seed, 1, 0.01, opt.threads));
    claims.push_back({"nonidentifiable_score_gap", gap, tol, gap < tol, m < 1000 ? power_note : ""});
  }

  nlohmann::json report = {{"a", opt.a}, {"b", opt.b}, {"m", m}, {"seed", opt.seed}};
  report["coefficients"] = {{"c", bw.c}, {"d", bw.d}};
  nlohmann::json arr = nlohmann::json::array();
  bool all = true;
  for (const auto& c : claims) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name << " statistic=" << brief(c.statistic) << " threshold=" << brief(c.threshold);
    if (!c.note.empty()) out << " (" << c.note << ")";
    out << "\n";
    arr.push_back(theory::claim_to_json(c));
    if (!c.pass) {
      all = false;
      err << "failed claim: " << c.name << "\n";
    }
  }
  report["claims"] = arr;
  report["pass"] = all;
  out << report.dump(2) << "\n";
  return all ? ok : failure;
}

}  // namespace canm::cli
