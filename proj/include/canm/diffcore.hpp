#pragma once

// Small reverse-mode differentiation engine over dense row-major matrices.
//
// A Tape records every operation applied to Vars created from it; calling
// Tape::backward on a 1x1 node walks the records in reverse creation order and
// accumulates gradients into the ParamStore blocks that fed the graph. Tapes
// are single-use and single-threaded.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "canm/common.hpp"
#include "canm/rng.hpp"

namespace canm::diffcore {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tensor2 = Matrix;

/// Named parameter blocks, each paired with a gradient block of the same shape.
class ParamStore {
 public:
  struct Block {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  std::size_t add(std::string name, Matrix init);
  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  Matrix& value(std::string_view name) { return blocks_[index(name)].value; }
  const Matrix& value(std::string_view name) const { return blocks_[index(name)].value; }
  Matrix& grad(std::string_view name) { return blocks_[index(name)].grad; }
  const Matrix& grad(std::string_view name) const { return blocks_[index(name)].grad; }

  Block& block(std::size_t i) { return blocks_[i]; }
  const Block& block(std::size_t i) const { return blocks_[i]; }
  std::size_t size() const noexcept { return blocks_.size(); }
  std::size_t scalar_count() const noexcept;

  void zero_grad();

  auto begin() { return blocks_.begin(); }
  auto end() { return blocks_.end(); }
  auto begin() const { return blocks_.begin(); }
  auto end() const { return blocks_.end(); }

 private:
  std::vector<Block> blocks_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the Tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant_scalar(double value);
  /// Leaf bound to a parameter block; backward() writes its gradient there.
  Var param(ParamStore& store, std::string_view name);

  /// Reverse pass from a 1x1 node. Overwrites the gradient of every parameter
  /// block referenced through param(); blocks not reached get zeros.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;
  Var record(Matrix value, BackwardFn backward);
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad_of(std::size_t id) const;
  void accumulate(std::size_t id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::size_t block = 0;
  };
  std::vector<Node> nodes_;
  std::vector<ParamStore*> stores_;
};

// Differentiable operations. Binary elementwise ops accept equal shapes or a
// 1x1 operand broadcast against the other.
Var matmul(Var a, Var b);
Var add_bias(Var a, Var bias);  // bias is 1 x a.cols(), added to every row
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var square(Var a);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Stacks `times` copies of `a` vertically: row r of the result is row r % a.rows().
Var repeat_rows(Var a, Eigen::Index times);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);

/// Elementwise -0.5*(log 2pi + log_var + (x-mean)^2 / exp(log_var)).
Var gaussian_logpdf(Var x, Var mean, Var log_var);
/// Per-row KL(N(mu, exp(log_var)) || N(0, I)) as a column vector.
Var gaussian_kl_rows(Var mu, Var log_var);
/// mu + exp(0.5*log_var) .* u, with u a constant (no gradient).
Var reparameterize(Var mu, Var log_var, const Matrix& u);

enum class Activation { tanh, relu };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  Activation activation = Activation::tanh;

  std::size_t layer_count() const noexcept { return hidden_dims.size() + 1; }
  void validate() const;
};

std::string layer_weight_name(std::string_view prefix, std::size_t layer);
std::string layer_bias_name(std::string_view prefix, std::size_t layer);

/// Adds `prefix.w{i}` / `prefix.b{i}` blocks with uniform Glorot weights and zero biases.
void init_mlp(const MlpSpec& spec, ParamStore& params, std::string_view prefix, Rng& rng);

/// Forward pass through every layer, recording onto input's tape.
/// Throws DimensionError naming the offending layer on shape mismatch.
Var mlp_forward(const MlpSpec& spec, ParamStore& params, std::string_view prefix, Var input);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState(const ParamStore& params, AdamConfig config = {});

  /// One bias-corrected Adam update from the gradients currently in `params`.
  /// Throws NumericError naming the block if any gradient entry is NaN.
  void step(ParamStore& params);

  std::size_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr);

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace canm::diffcore
