#pragma once

// One gradient-check case per differentiable layer type in diffcore.

#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace canm::testing {

struct LayerCase {
  std::string name;
  // Populates `params` with the inputs of the case and returns the loss builder.
  std::function<LossBuilder(ParamStore&, Rng&)> setup;
};

inline std::vector<LayerCase> layer_cases() {
  using namespace diffcore;
  std::vector<LayerCase> cases;

  auto unary = [&cases](std::string name, std::function<Var(Var)> op, double shift = 0.0) {
    cases.push_back({name, [op, shift](ParamStore& p, Rng& rng) -> LossBuilder {
                       Matrix a = random_matrix(4, 3, rng);
                       // keep relu inputs away from the kink
                       if (shift != 0.0)
                         for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] += a.data()[i] > 0 ? shift : -shift;
                       p.add("a", a);
                       auto proj_seed = rng();
                       return [op, proj_seed](Tape& t, ParamStore& ps) {
                         Rng r(proj_seed);
                         return project(op(t.param(ps, "a")), r);
                       };
                     }});
  };
  auto binary = [&cases](std::string name, std::function<Var(Var, Var)> op, Eigen::Index br, Eigen::Index bc) {
    cases.push_back({name, [op, br, bc](ParamStore& p, Rng& rng) -> LossBuilder {
                       p.add("a", random_matrix(4, 3, rng));
                       p.add("b", random_matrix(br, bc, rng));
                       auto proj_seed = rng();
                       return [op, proj_seed](Tape& t, ParamStore& ps) {
                         Rng r(proj_seed);
                         return project(op(t.param(ps, "a"), t.param(ps, "b")), r);
                       };
                     }});
  };

  binary("matmul", [](Var a, Var b) { return matmul(a, b); }, 3, 2);
  binary("add_bias", [](Var a, Var b) { return add_bias(a, b); }, 1, 3);
  binary("add", [](Var a, Var b) { return add(a, b); }, 4, 3);
  binary("add_broadcast", [](Var a, Var b) { return add(a, b); }, 1, 1);
  binary("sub", [](Var a, Var b) { return sub(a, b); }, 4, 3);
  binary("mul", [](Var a, Var b) { return mul(a, b); }, 4, 3);
  binary("mul_broadcast", [](Var a, Var b) { return mul(a, b); }, 1, 1);
  binary("concat_cols", [](Var a, Var b) { return concat_cols(a, b); }, 4, 2);
  binary("gaussian_kl_rows", [](Var a, Var b) { return gaussian_kl_rows(a, scale(b, 0.5)); }, 4, 3);
  unary("scale", [](Var a) { return scale(a, -1.7); });
  unary("tanh", [](Var a) { return tanh(a); });
  unary("relu", [](Var a) { return relu(a); }, 0.1);
  unary("exp", [](Var a) { return exp(a); });
  unary("square", [](Var a) { return square(a); });
  unary("slice_cols", [](Var a) { return slice_cols(a, 1, 2); });
  unary("repeat_rows", [](Var a) { return repeat_rows(a, 3); });
  unary("sum", [](Var a) { return sum(a); });
  unary("mean", [](Var a) { return mean(a); });
  unary("row_sum", [](Var a) { return row_sum(a); });

  cases.push_back({"gaussian_logpdf", [](ParamStore& p, Rng& rng) -> LossBuilder {
                     p.add("x", random_matrix(5, 2, rng));
                     p.add("mean", random_matrix(5, 2, rng));
                     p.add("log_var", random_matrix(5, 2, rng, 0.5));
                     p.add("scalar_log_var", random_matrix(1, 1, rng, 0.5));
                     auto proj_seed = rng();
                     return [proj_seed](Tape& t, ParamStore& ps) {
                       Rng r(proj_seed);
                       Var full = gaussian_logpdf(t.param(ps, "x"), t.param(ps, "mean"), t.param(ps, "log_var"));
                       Var bcast = gaussian_logpdf(t.param(ps, "x"), t.param(ps, "mean"), t.param(ps, "scalar_log_var"));
                       return add(project(full, r), project(bcast, r));
                     };
                   }});
  cases.push_back({"reparameterize", [](ParamStore& p, Rng& rng) -> LossBuilder {
                     p.add("mu", random_matrix(6, 2, rng));
                     p.add("log_var", random_matrix(6, 2, rng, 0.5));
                     Matrix u = random_matrix(6, 2, rng);
                     auto proj_seed = rng();
                     return [u, proj_seed](Tape& t, ParamStore& ps) {
                       Rng r(proj_seed);
                       return project(reparameterize(t.param(ps, "mu"), t.param(ps, "log_var"), u), r);
                     };
                   }});
  for (auto act : {Activation::tanh, Activation::relu}) {
    cases.push_back({act == Activation::tanh ? "mlp_tanh_squared_loss" : "mlp_relu_squared_loss",
                     [act](ParamStore& p, Rng& rng) -> LossBuilder {
                       MlpSpec spec{3, {5, 4}, 2, act};
                       init_mlp(spec, p, "net", rng);
                       // biases start at zero; give them values so their gradients are generic
                       for (auto& b : p) b.value += random_matrix(b.value.rows(), b.value.cols(), rng, 0.1);
                       Matrix x = random_matrix(7, 3, rng);
                       Matrix y = random_matrix(7, 2, rng);
                       return [spec, x, y](Tape& t, ParamStore& ps) {
                         Var out = mlp_forward(spec, ps, "net", t.constant(x));
                         return mean(square(sub(out, t.constant(y))));
                       };
                     }});
  }
  return cases;
}

}  // namespace canm::testing
