#include "canm/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <thread>

namespace canm::vae {

using diffcore::Tape;
using diffcore::Var;

namespace {

constexpr std::size_t kEvalChunk = 1024;

Matrix column(std::span<const double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

struct Terms {
  Var log_density;  // (samples*B) x 1, log p(eps) per draw
  std::optional<Var> kl;  // B x 1
};

Terms record_terms(Tape& tape, CanmModel& model, const Matrix& x, const Matrix& y, const Matrix& noise,
                   std::size_t samples) {
  const auto reps = static_cast<Eigen::Index>(samples);
  Var xv = tape.constant(x);
  Var yv = tape.constant(y);
  Var log_var_eps = tape.param(model.params, "log_var_eps");
  if (!model.has_encoder()) {
    Var pred = diffcore::mlp_forward(model.decoder, model.params, "dec", xv);
    return {diffcore::gaussian_logpdf(yv, pred, log_var_eps), std::nullopt};
  }
  const auto k = static_cast<Eigen::Index>(model.latent_dim);
  if (noise.rows() != x.rows() * reps || noise.cols() != k)
    throw DimensionError("elbo: noise must be " + std::to_string(x.rows() * reps) + "x" + std::to_string(k));
  Var h = diffcore::mlp_forward(model.encoder, model.params, "enc", diffcore::concat_cols(xv, yv));
  Var mu = diffcore::slice_cols(h, 0, k);
  Var log_var = diffcore::slice_cols(h, k, k);
  Var kl = diffcore::gaussian_kl_rows(mu, log_var);
  Var n = diffcore::reparameterize(diffcore::repeat_rows(mu, reps), diffcore::repeat_rows(log_var, reps), noise);
  Var pred = diffcore::mlp_forward(model.decoder, model.params, "dec",
                                   diffcore::concat_cols(diffcore::repeat_rows(xv, reps), n));
  return {diffcore::gaussian_logpdf(diffcore::repeat_rows(yv, reps), pred, log_var_eps), kl};
}

void check_xy(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("elbo: x and y lengths differ");
  if (x.empty()) throw DimensionError("elbo: empty batch");
}

// Appends per-point terms for one chunk.
void pointwise_chunk(CanmModel& model, std::span<const double> x, std::span<const double> y, const Matrix& noise,
                     std::size_t samples, PointwiseElbo& out) {
  Tape tape;
  const std::size_t b = x.size();
  Terms t = record_terms(tape, model, column(x), column(y), noise, samples);
  const Matrix& lp = t.log_density.value();
  const std::size_t reps = model.has_encoder() ? samples : 1;
  for (std::size_t i = 0; i < b; ++i) {
    double acc = 0.0;
    for (std::size_t l = 0; l < reps; ++l) acc += lp(static_cast<Eigen::Index>(l * b + i), 0);
    out.recon.push_back(acc / static_cast<double>(reps));
    out.kl.push_back(t.kl ? t.kl->value()(static_cast<Eigen::Index>(i), 0) : 0.0);
  }
}

ElboParts summarize(const PointwiseElbo& p, std::size_t offset_for_errors = 0) {
  ElboParts parts;
  const double n = static_cast<double>(p.recon.size());
  for (std::size_t i = 0; i < p.recon.size(); ++i) {
    if (!std::isfinite(p.recon[i]) || !std::isfinite(p.kl[i]))
      throw NumericError("elbo: non-finite value at point " + std::to_string(offset_for_errors + i));
    parts.recon += p.recon[i];
    parts.kl += p.kl[i];
  }
  parts.recon /= n;
  parts.kl /= n;
  parts.total = parts.recon - parts.kl;
  return parts;
}

// Noise drawn once per evaluation set so that successive epochs are compared
// on common random numbers.
struct FixedEvaluator {
  const PairDataset& data;
  std::size_t samples;
  std::vector<Matrix> noise;

  FixedEvaluator(const PairDataset& d, std::size_t s, std::size_t latent_dim, std::uint64_t seed)
      : data(d), samples(s) {
    Rng rng = make_rng(seed, {stream::eval});
    for (std::size_t start = 0; start < d.size(); start += kEvalChunk) {
      const std::size_t b = std::min(kEvalChunk, d.size() - start);
      noise.push_back(draw_noise(b, samples, latent_dim, rng));
    }
  }

  double operator()(CanmModel& model) const {
    PointwiseElbo p;
    for (std::size_t c = 0, start = 0; start < data.size(); ++c, start += kEvalChunk) {
      const std::size_t b = std::min(kEvalChunk, data.size() - start);
      pointwise_chunk(model, std::span(data.x()).subspan(start, b), std::span(data.y()).subspan(start, b), noise[c],
                      samples, p);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < p.recon.size(); ++i) total += p.recon[i] - p.kl[i];
    return total / static_cast<double>(p.recon.size());
  }
};

}  // namespace

// ---------------------------------------------------------------- data

PairDataset PairDataset::standardize(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DataError("pair has " + std::to_string(x.size()) + " x values but " + std::to_string(y.size()) + " y values");
  if (x.size() < 2) throw DataError("pair needs at least 2 points");
  auto moments = [](std::span<const double> v, const char* name) {
    double mean = 0.0;
    for (double a : v) {
      if (!std::isfinite(a)) throw DataError(std::string("non-finite value in ") + name);
      mean += a;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double a : v) var += (a - mean) * (a - mean);
    var /= static_cast<double>(v.size());
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) throw DataError(std::string(name) + " has zero variance");
    return std::pair{mean, sd};
  };
  auto [mx, sx] = moments(x, "x");
  auto [my, sy] = moments(y, "y");
  std::vector<double> xs(x.size()), ys(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs[i] = (x[i] - mx) / sx;
    ys[i] = (y[i] - my) / sy;
  }
  return PairDataset(std::move(xs), std::move(ys), Standardization{mx, sx, my, sy});
}

PairDataset PairDataset::swapped() const {
  const auto& s = standardization_;
  return PairDataset(y_, x_, Standardization{s.mean_y, s.std_y, s.mean_x, s.std_x});
}

PairDataset PairDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<double> xs, ys;
  xs.reserve(indices.size());
  ys.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= x_.size()) throw DimensionError("subset index out of range");
    xs.push_back(x_[i]);
    ys.push_back(y_[i]);
  }
  return PairDataset(std::move(xs), std::move(ys), standardization_);
}

void TrainConfig::validate() const {
  if (mc_samples < 1 || eval_mc_samples < 1) throw Error("TrainConfig: Monte-Carlo sample counts must be >= 1");
  if (epochs < 1) throw Error("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw Error("TrainConfig: lr must be > 0");
}

// ---------------------------------------------------------------- model

CanmModel CanmModel::create(std::size_t latent_dim, const ArchConfig& arch, std::uint64_t seed) {
  CanmModel m;
  m.latent_dim = latent_dim;
  Rng rng = make_rng(seed, {stream::init});
  if (latent_dim > 0) {
    m.encoder = diffcore::MlpSpec{2, arch.encoder_hidden, 2 * latent_dim, arch.activation};
    diffcore::init_mlp(m.encoder, m.params, "enc", rng);
  }
  m.decoder = diffcore::MlpSpec{1 + latent_dim, arch.decoder_hidden, 1, arch.activation};
  diffcore::init_mlp(m.decoder, m.params, "dec", rng);
  m.params.add("log_var_eps", Matrix::Zero(1, 1));
  return m;
}

double gaussian_kl(std::span<const double> mu, std::span<const double> log_var) {
  if (mu.size() != log_var.size()) throw DimensionError("gaussian_kl: length mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k)
    kl += -0.5 * (1.0 + log_var[k] - mu[k] * mu[k] - std::exp(log_var[k]));
  return kl;
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> log_var,
                                   std::span<const double> u) {
  if (mu.size() != log_var.size() || mu.size() != u.size()) throw DimensionError("reparameterize: length mismatch");
  std::vector<double> n(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) n[k] = mu[k] + std::exp(0.5 * log_var[k]) * u[k];
  return n;
}

Matrix draw_noise(std::size_t batch, std::size_t samples, std::size_t latent_dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix u(static_cast<Eigen::Index>(batch * samples), static_cast<Eigen::Index>(latent_dim));
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = normal(rng);
  return u;
}

Var negative_elbo(Tape& tape, CanmModel& model, const Matrix& x, const Matrix& y, const Matrix& noise,
                  std::size_t samples) {
  Terms t = record_terms(tape, model, x, y, noise, samples);
  Var objective = diffcore::mean(t.log_density);
  if (t.kl) objective = diffcore::sub(objective, diffcore::mean(*t.kl));
  return diffcore::scale(objective, -1.0);
}

PointwiseElbo elbo_pointwise(CanmModel& model, std::span<const double> x, std::span<const double> y,
                             std::size_t samples, Rng& rng) {
  check_xy(x, y);
  if (samples < 1) throw Error("elbo: need at least one Monte-Carlo sample");
  PointwiseElbo out;
  for (std::size_t start = 0; start < x.size(); start += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, x.size() - start);
    const Matrix noise = draw_noise(b, samples, model.latent_dim, rng);
    pointwise_chunk(model, x.subspan(start, b), y.subspan(start, b), noise, samples, out);
  }
  return out;
}

ElboParts elbo(CanmModel& model, std::span<const double> x, std::span<const double> y, std::size_t samples,
               Rng& rng) {
  return summarize(elbo_pointwise(model, x, y, samples, rng));
}

ElboParts evaluate(CanmModel& model, const PairDataset& data, std::size_t samples, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::eval});
  return elbo(model, data.x(), data.y(), samples, rng);
}

// ---------------------------------------------------------------- training

TrainResult train(const PairDataset& data, std::size_t latent_dim, const TrainConfig& cfg) {
  return train(data, data, latent_dim, cfg);
}

TrainResult train(const PairDataset& data, const PairDataset& validation, std::size_t latent_dim,
                  const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t m = data.size();
  const std::size_t batch = std::min(cfg.batch_size, m);
  TrainResult res{CanmModel::create(latent_dim, cfg.arch, cfg.seed), {}, -INFINITY, 0, 0};
  CanmModel& model = res.model;

  Rng shuffle_rng = make_rng(cfg.seed, {stream::shuffle});
  Rng mc_rng = make_rng(cfg.seed, {stream::mc});
  const FixedEvaluator validate(validation, cfg.mc_samples, latent_dim, cfg.seed);

  diffcore::ParamStore best = model.params;
  double lr = cfg.lr;
  diffcore::AdamState adam(model.params, {.lr = lr});
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);

  const Matrix full_x = column(data.x());
  const Matrix full_y = column(data.y());
  Matrix bx(static_cast<Eigen::Index>(batch), 1), by(static_cast<Eigen::Index>(batch), 1);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    bool diverged = false;
    for (std::size_t start = 0; start < m && !diverged; start += batch) {
      const std::size_t b = std::min(batch, m - start);
      bx.resize(static_cast<Eigen::Index>(b), 1);
      by.resize(static_cast<Eigen::Index>(b), 1);
      for (std::size_t i = 0; i < b; ++i) {
        bx(static_cast<Eigen::Index>(i), 0) = full_x(static_cast<Eigen::Index>(order[start + i]), 0);
        by(static_cast<Eigen::Index>(i), 0) = full_y(static_cast<Eigen::Index>(order[start + i]), 0);
      }
      const Matrix noise = draw_noise(b, cfg.mc_samples, latent_dim, mc_rng);
      Tape tape;
      Var loss = negative_elbo(tape, model, bx, by, noise, cfg.mc_samples);
      if (!std::isfinite(loss.scalar())) {
        diverged = true;
        break;
      }
      tape.backward(loss);
      try {
        adam.step(model.params);
      } catch (const NumericError&) {
        diverged = true;
      }
    }
    double score = diverged ? NAN : validate(model);
    if (!std::isfinite(score)) {
      if (++res.recoveries > cfg.max_recoveries)
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " after " +
                            std::to_string(cfg.max_recoveries) + " recovery attempts");
      model.params = best;
      lr *= 0.5;
      adam = diffcore::AdamState(model.params, {.lr = lr});
      res.trace.push_back(NAN);
      continue;
    }
    res.trace.push_back(score);
    if (score > res.best_score) {
      res.best_score = score;
      res.best_epoch = epoch;
      best = model.params;
    } else if (epoch - res.best_epoch >= cfg.early_stop_patience) {
      break;
    }
  }
  if (!std::isfinite(res.best_score)) throw TrainingError("training never produced a finite validation ELBO");
  model.params = std::move(best);
  return res;
}

LatentPosterior posterior(CanmModel& model, const PairDataset& data) {
  if (!model.has_encoder()) throw Error("model has no latent noise");
  Tape tape;
  Var in = diffcore::concat_cols(tape.constant(column(data.x())), tape.constant(column(data.y())));
  const Matrix h = diffcore::mlp_forward(model.encoder, model.params, "enc", in).value();
  const auto k = static_cast<Eigen::Index>(model.latent_dim);
  return {h.leftCols(k), (0.5 * h.rightCols(k).array()).exp().matrix()};
}

LatentSelection select_latent_dim(const PairDataset& data, std::size_t k_max, const TrainConfig& cfg,
                                  std::size_t threads, double tie_tolerance) {
  if (data.size() < 20) throw DataError("latent selection needs at least 20 points");
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng = make_rng(cfg.seed, {stream::split});
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(data.size())));
  const PairDataset train_set = data.subset(std::span(perm).first(n_train));
  const PairDataset test_set = data.subset(std::span(perm).subspan(n_train));

  const std::size_t candidates = k_max + 1;
  std::vector<double> scores(candidates, -INFINITY);
  std::vector<std::exception_ptr> errors(candidates);
  auto run = [&](std::size_t k) {
    try {
      TrainConfig ck = cfg;
      ck.seed = cfg.seed + k;
      TrainResult r = train(train_set, test_set, k, ck);
      scores[k] = evaluate(r.model, test_set, cfg.eval_mc_samples, ck.seed).total;
    } catch (const Error&) {
      errors[k] = std::current_exception();
    }
  };
  if (threads <= 1 || candidates == 1) {
    for (std::size_t k = 0; k < candidates; ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, candidates); ++t)
      pool.emplace_back([&] {
        for (std::size_t k; (k = next.fetch_add(1)) < candidates;) run(k);
      });
    for (auto& th : pool) th.join();
  }

  double best = -INFINITY;
  for (std::size_t k = 0; k < candidates; ++k)
    if (!errors[k]) best = std::max(best, scores[k]);
  if (!std::isfinite(best)) {
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    throw TrainingError("latent selection: no candidate produced a finite score");
  }
  LatentSelection sel{0, scores};
  for (std::size_t k = 0; k < candidates; ++k)
    if (!errors[k] && scores[k] >= best - tie_tolerance) {
      sel.best_k = k;
      break;
    }
  return sel;
}

// ---------------------------------------------------------------- serialization

namespace {

nlohmann::json spec_to_json(const diffcore::MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"output_dim", s.output_dim},
          {"activation", s.activation == diffcore::Activation::tanh ? "tanh" : "relu"}};
}

diffcore::MlpSpec spec_from_json(const nlohmann::json& j) {
  diffcore::MlpSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  const auto act = j.at("activation").get<std::string>();
  if (act != "tanh" && act != "relu") throw DataError("unknown activation '" + act + "'");
  s.activation = act == "tanh" ? diffcore::Activation::tanh : diffcore::Activation::relu;
  return s;
}

}  // namespace

nlohmann::json model_to_json(const CanmModel& model, const Standardization& s) {
  nlohmann::json j;
  j["format"] = "canm-model";
  j["version"] = 1;
  j["latent_dim"] = model.latent_dim;
  if (model.has_encoder()) j["encoder"] = spec_to_json(model.encoder);
  j["decoder"] = spec_to_json(model.decoder);
  j["standardization"] = {{"mean_x", s.mean_x}, {"std_x", s.std_x}, {"mean_y", s.mean_y}, {"std_y", s.std_y}};
  auto& blocks = j["params"] = nlohmann::json::array();
  for (const auto& b : model.params)
    blocks.push_back({{"name", b.name},
                      {"rows", b.value.rows()},
                      {"cols", b.value.cols()},
                      {"values", std::vector<double>(b.value.data(), b.value.data() + b.value.size())}});
  return j;
}

CanmModel model_from_json(const nlohmann::json& j, Standardization* standardization) {
  try {
    if (j.at("format") != "canm-model") throw DataError("not a canm-model document");
    CanmModel m;
    m.latent_dim = j.at("latent_dim").get<std::size_t>();
    if (m.has_encoder()) m.encoder = spec_from_json(j.at("encoder"));
    m.decoder = spec_from_json(j.at("decoder"));
    for (const auto& b : j.at("params")) {
      const auto rows = b.at("rows").get<Eigen::Index>(), cols = b.at("cols").get<Eigen::Index>();
      const auto values = b.at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw DataError("parameter block '" + b.at("name").get<std::string>() + "' has wrong size");
      Matrix v(rows, cols);
      std::copy(values.begin(), values.end(), v.data());
      m.params.add(b.at("name").get<std::string>(), std::move(v));
    }
    if (standardization) {
      const auto& s = j.at("standardization");
      *standardization = {s.at("mean_x").get<double>(), s.at("std_x").get<double>(), s.at("mean_y").get<double>(),
                          s.at("std_y").get<double>()};
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace canm::vae
