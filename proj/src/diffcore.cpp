#include "canm/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace canm::diffcore {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// Output shape of a broadcasting elementwise op over `inputs`.
std::pair<Eigen::Index, Eigen::Index> broadcast_shape(std::string_view op,
                                                      std::initializer_list<const Matrix*> inputs) {
  Eigen::Index r = 1, c = 1;
  for (const Matrix* m : inputs) {
    if (is_scalar(*m)) continue;
    if (r == 1 && c == 1) {
      r = m->rows();
      c = m->cols();
    } else if (m->rows() != r || m->cols() != c) {
      throw DimensionError(std::string(op) + ": incompatible shapes " + std::to_string(r) + "x" +
                           std::to_string(c) + " and " + shape_str(*m));
    }
  }
  return {r, c};
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

Matrix reduce_like(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  return Matrix::Constant(1, 1, g.sum());
}

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error("operands recorded on different tapes");
  return a.tape();
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

std::size_t ParamStore::add(std::string name, Matrix init) {
  if (lookup_.count(name)) throw Error("duplicate parameter block '" + name + "'");
  const std::size_t i = blocks_.size();
  Matrix grad = Matrix::Zero(init.rows(), init.cols());
  lookup_.emplace(name, i);
  blocks_.push_back(Block{std::move(name), std::move(init), std::move(grad)});
  return i;
}

bool ParamStore::contains(std::string_view name) const { return lookup_.count(std::string(name)) > 0; }

std::size_t ParamStore::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw Error("unknown parameter block '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& b : blocks_) b.grad.setZero(b.value.rows(), b.value.cols());
}

// ---------------------------------------------------------------- Var / Tape

const Matrix& Var::value() const { return tape_->value_of(id_); }
const Matrix& Var::grad() const { return tape_->grad_of(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (!is_scalar(v)) throw DimensionError("scalar(): node is " + shape_str(v));
  return v(0, 0);
}

Var Tape::record(Matrix value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), nullptr, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record(std::move(value), nullptr); }

Var Tape::constant_scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::param(ParamStore& store, std::string_view name) {
  const std::size_t block = store.index(name);
  Var v = record(store.block(block).value, nullptr);
  nodes_.back().store = &store;
  nodes_.back().block = block;
  if (std::find(stores_.begin(), stores_.end(), &store) == stores_.end()) stores_.push_back(&store);
  return v;
}

const Matrix& Tape::grad_of(std::size_t id) const {
  static const Matrix empty;
  return nodes_[id].grad.size() ? nodes_[id].grad : empty;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw Error("backward: loss belongs to another tape");
  if (!is_scalar(value_of(loss.id())))
    throw DimensionError("backward: loss must be 1x1, got " + shape_str(value_of(loss.id())));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  for (ParamStore* s : stores_) s->zero_grad();
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.store) n.store->block(n.block).grad += n.grad;
    if (n.backward) {
      // The closure may append to other nodes' grads but never to this one.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }
}

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_str(a.value()) + " times " + shape_str(b.value()));
  Matrix out = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g * tp.value_of(ib).transpose());
    tp.accumulate(ib, tp.value_of(ia).transpose() * g);
  });
}

Var add_bias(Var a, Var bias) {
  Tape& t = same_tape(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw DimensionError("add_bias: bias " + shape_str(bias.value()) + " for input " + shape_str(a.value()));
  Matrix out = a.value().rowwise() + bias.value().row(0);
  const auto ia = a.id(), ib = bias.id();
  return t.record(std::move(out), [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  auto [r, c] = broadcast_shape("add", {&a.value(), &b.value()});
  Matrix out = expand(a.value(), r, c) + expand(b.value(), r, c);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, reduce_like(g, tp.value_of(ia)));
    tp.accumulate(ib, reduce_like(g, tp.value_of(ib)));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  auto [r, c] = broadcast_shape("sub", {&a.value(), &b.value()});
  Matrix out = expand(a.value(), r, c) - expand(b.value(), r, c);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, reduce_like(g, tp.value_of(ia)));
    tp.accumulate(ib, reduce_like(Matrix(-g), tp.value_of(ib)));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  auto [r, c] = broadcast_shape("mul", {&a.value(), &b.value()});
  Matrix ea = expand(a.value(), r, c);
  Matrix eb = expand(b.value(), r, c);
  Matrix out = ea.cwiseProduct(eb);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), [ia, ib, ea = std::move(ea), eb = std::move(eb)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, reduce_like(Matrix(g.cwiseProduct(eb)), tp.value_of(ia)));
    tp.accumulate(ib, reduce_like(Matrix(g.cwiseProduct(ea)), tp.value_of(ib)));
  });
}

Var scale(Var a, double s) {
  const auto ia = a.id();
  return a.tape().record(a.value() * s, [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  Matrix slope = (1.0 - out.array().square()).matrix();
  const auto ia = a.id();
  return a.tape().record(std::move(out), [ia, slope = std::move(slope)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(slope));
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  const auto ia = a.id();
  return a.tape().record(std::move(out), [ia](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value_of(ia);
    tp.accumulate(ia, (g.array() * (x.array() > 0.0).cast<double>()).matrix());
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  Matrix saved = out;
  const auto ia = a.id();
  return a.tape().record(std::move(out), [ia, saved = std::move(saved)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(saved));
  });
}

Var square(Var a) {
  Matrix out = a.value().array().square().matrix();
  const auto ia = a.id();
  return a.tape().record(std::move(out), [ia](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, 2.0 * g.cwiseProduct(tp.value_of(ia)));
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.rows() != b.rows())
    throw DimensionError("concat_cols: " + shape_str(a.value()) + " and " + shape_str(b.value()));
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const auto ia = a.id(), ib = b.id();
  const auto ca = a.cols(), cb = b.cols();
  return t.record(std::move(out), [ia, ib, ca, cb](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.leftCols(ca));
    tp.accumulate(ib, g.rightCols(cb));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of " + shape_str(a.value()));
  Matrix out = a.value().middleCols(start, count);
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape().record(std::move(out), [ia, start, count, rows, cols](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleCols(start, count) = g;
    tp.accumulate(ia, full);
  });
}

Var repeat_rows(Var a, Eigen::Index times) {
  if (times < 1) throw DimensionError("repeat_rows: times must be >= 1");
  const auto rows = a.rows();
  Matrix out(rows * times, a.cols());
  for (Eigen::Index k = 0; k < times; ++k) out.middleRows(k * rows, rows) = a.value();
  const auto ia = a.id();
  return a.tape().record(std::move(out), [ia, rows, times](Tape& tp, const Matrix& g) {
    Matrix acc = g.topRows(rows);
    for (Eigen::Index k = 1; k < times; ++k) acc += g.middleRows(k * rows, rows);
    tp.accumulate(ia, acc);
  });
}

Var sum(Var a) {
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), [ia, rows, cols](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  const auto ia = a.id();
  const auto cols = a.cols();
  Matrix out = a.value().rowwise().sum();
  return a.tape().record(std::move(out), [ia, cols](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.replicate(1, cols));
  });
}

Var gaussian_logpdf(Var x, Var mu, Var log_var) {
  Tape& t = same_tape(x, mu);
  same_tape(x, log_var);
  auto [r, c] = broadcast_shape("gaussian_logpdf", {&x.value(), &mu.value(), &log_var.value()});
  const Matrix diff = expand(x.value(), r, c) - expand(mu.value(), r, c);
  const Matrix lv = expand(log_var.value(), r, c);
  const Matrix inv_var = (-lv.array()).exp().matrix();
  Matrix out = (-0.5 * (kLog2Pi + lv.array() + diff.array().square() * inv_var.array())).matrix();
  const auto ix = x.id(), im = mu.id(), il = log_var.id();
  return t.record(std::move(out), [ix, im, il, diff, inv_var](Tape& tp, const Matrix& g) {
    const Matrix dz = (g.array() * diff.array() * inv_var.array()).matrix();  // d/dmean
    tp.accumulate(ix, reduce_like(Matrix(-dz), tp.value_of(ix)));
    tp.accumulate(im, reduce_like(dz, tp.value_of(im)));
    const Matrix dl = (g.array() * (-0.5 + 0.5 * diff.array().square() * inv_var.array())).matrix();
    tp.accumulate(il, reduce_like(dl, tp.value_of(il)));
  });
}

Var gaussian_kl_rows(Var mu, Var log_var) {
  Tape& t = same_tape(mu, log_var);
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols())
    throw DimensionError("gaussian_kl_rows: " + shape_str(mu.value()) + " vs " + shape_str(log_var.value()));
  const Matrix var = log_var.value().array().exp().matrix();
  Matrix terms = (-0.5 * (1.0 + log_var.value().array() - mu.value().array().square() - var.array())).matrix();
  Matrix out = terms.rowwise().sum();
  const auto im = mu.id(), il = log_var.id();
  const auto cols = mu.cols();
  return t.record(std::move(out), [im, il, cols, var](Tape& tp, const Matrix& g) {
    const Matrix gg = g.replicate(1, cols);
    tp.accumulate(im, gg.cwiseProduct(tp.value_of(im)));
    tp.accumulate(il, (0.5 * gg.array() * (var.array() - 1.0)).matrix());
  });
}

Var reparameterize(Var mu, Var log_var, const Matrix& u) {
  Tape& t = same_tape(mu, log_var);
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() || u.rows() != mu.rows() || u.cols() != mu.cols())
    throw DimensionError("reparameterize: mu " + shape_str(mu.value()) + ", log_var " + shape_str(log_var.value()) +
                         ", u " + shape_str(u));
  const Matrix sigma_u = ((0.5 * log_var.value().array()).exp() * u.array()).matrix();
  Matrix out = mu.value() + sigma_u;
  const auto im = mu.id(), il = log_var.id();
  return t.record(std::move(out), [im, il, sigma_u](Tape& tp, const Matrix& g) {
    tp.accumulate(im, g);
    tp.accumulate(il, 0.5 * g.cwiseProduct(sigma_u));
  });
}

// ---------------------------------------------------------------- MLP

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw DimensionError("MlpSpec: input and output dims must be >= 1");
  for (std::size_t h : hidden_dims)
    if (h < 1) throw DimensionError("MlpSpec: hidden dims must be >= 1");
}

std::string layer_weight_name(std::string_view prefix, std::size_t layer) {
  return std::string(prefix) + ".w" + std::to_string(layer);
}

std::string layer_bias_name(std::string_view prefix, std::size_t layer) {
  return std::string(prefix) + ".b" + std::to_string(layer);
}

void init_mlp(const MlpSpec& spec, ParamStore& params, std::string_view prefix, Rng& rng) {
  spec.validate();
  std::size_t fan_in = spec.input_dim;
  for (std::size_t layer = 0; layer < spec.layer_count(); ++layer) {
    const std::size_t fan_out = layer < spec.hidden_dims.size() ? spec.hidden_dims[layer] : spec.output_dim;
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    params.add(layer_weight_name(prefix, layer), std::move(w));
    params.add(layer_bias_name(prefix, layer), Matrix::Zero(1, fan_out));
    fan_in = fan_out;
  }
}

Var mlp_forward(const MlpSpec& spec, ParamStore& params, std::string_view prefix, Var input) {
  if (static_cast<std::size_t>(input.cols()) != spec.input_dim)
    throw DimensionError(std::string(prefix) + " layer 0: expected " + std::to_string(spec.input_dim) +
                         " input columns, got " + std::to_string(input.cols()));
  Tape& t = input.tape();
  Var h = input;
  for (std::size_t layer = 0; layer < spec.layer_count(); ++layer) {
    Var w = t.param(params, layer_weight_name(prefix, layer));
    Var b = t.param(params, layer_bias_name(prefix, layer));
    if (w.rows() != h.cols())
      throw DimensionError(std::string(prefix) + " layer " + std::to_string(layer) + ": weight is " +
                           shape_str(w.value()) + " but input has " + std::to_string(h.cols()) + " columns");
    h = add_bias(matmul(h, w), b);
    if (layer + 1 < spec.layer_count()) h = spec.activation == Activation::tanh ? tanh(h) : relu(h);
  }
  return h;
}

// ---------------------------------------------------------------- Adam

AdamState::AdamState(const ParamStore& params, AdamConfig config) : config_(config) {
  if (!(config.lr > 0.0)) throw Error("Adam: lr must be > 0");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0 && config.beta2 > 0.0 && config.beta2 < 1.0))
    throw Error("Adam: betas must lie in (0, 1)");
  for (const auto& b : params) {
    first_.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
    second_.push_back(Matrix::Zero(b.value.rows(), b.value.cols()));
  }
}

void AdamState::set_lr(double lr) {
  if (!(lr > 0.0)) throw Error("Adam: lr must be > 0");
  config_.lr = lr;
}

void AdamState::step(ParamStore& params) {
  if (params.size() != first_.size()) throw DimensionError("Adam: parameter store changed shape");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.block(i).grad.hasNaN()) throw NumericError("Adam: NaN gradient in '" + params.block(i).name + "'");
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& b = params.block(i);
    first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * b.grad;
    second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * b.grad.cwiseAbs2();
    b.value.array() -= config_.lr * (first_[i].array() / bc1) / ((second_[i].array() / bc2).sqrt() + config_.eps);
  }
}

}  // namespace canm::diffcore
