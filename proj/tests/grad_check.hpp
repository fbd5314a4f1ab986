#pragma once

// Finite-difference gradient oracle shared by the unit tests and the
// acceptance suite. Central differences in 64-bit with h = 1e-5; analytic
// gradients must match at relative error < 1e-4.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lrnmt/common.hpp"
#include "lrnmt/tensor.hpp"

namespace gradcheck {

using lrnmt::RngStream;
using lrnmt::Tape;
using lrnmt::Var;

constexpr double kH = 1e-5;
constexpr double kTol = 1e-4;

struct Failure {
    std::string where;
    double analytic = 0, numeric = 0;
};

// Rebuilds the loss with `make_loss` for every probe; inputs are shared
// leaves whose values get perturbed in place.
inline std::vector<Failure> check_gradients(
    const std::function<Var<double>(Tape<double>&)>& make_loss,
    const std::vector<Var<double>>& inputs, RngStream& rng, int probes_per_input = 6,
    double tol = kTol, double h = kH) {
    std::vector<Failure> failures;

    for (const Var<double>& in : inputs) in->zero_grad();
    Tape<double> tape;
    Var<double> loss = make_loss(tape);
    tape.backward(loss);

    auto eval = [&]() {
        Tape<double> silent(false);
        return make_loss(silent)->value[0];
    };

    for (std::size_t which = 0; which < inputs.size(); ++which) {
        const Var<double>& in = inputs[which];
        const std::size_t n = in->numel();
        for (int p = 0; p < probes_per_input; ++p) {
            const std::size_t i = static_cast<std::size_t>(rng.next_below(n));
            const double saved = in->value[i];
            in->value[i] = saved + h;
            const double up = eval();
            in->value[i] = saved - h;
            const double down = eval();
            in->value[i] = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = in->grad.empty() ? 0.0 : in->grad[i];
            const double err = std::abs(analytic - numeric);
            const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            if (err > tol * scale) {
                failures.push_back({"input " + std::to_string(which) + " coord " +
                                        std::to_string(i),
                                    analytic, numeric});
            }
        }
    }
    return failures;
}

inline Var<double> random_leaf(std::vector<std::size_t> shape, RngStream& rng,
                               bool requires_grad = true) {
    std::vector<double> data(lrnmt::numel_of(shape));
    for (double& v : data) v = rng.next_uniform(-1.0, 1.0);
    Var<double> leaf = lrnmt::make_leaf<double>(std::move(shape), std::move(data));
    leaf->requires_grad = requires_grad;
    return leaf;
}

// Random weights for turning a tensor output into a scalar loss.
inline Var<double> loss_weights(const Var<double>& like, RngStream& rng) {
    return random_leaf(like->shape, rng, false);
}

struct OpCheck {
    std::string name;
    // Returns failures for one random seed.
    std::function<std::vector<Failure>(std::uint64_t)> run;
};

// One entry per differentiable operator (plus shape variants).
inline std::vector<OpCheck> operator_checks() {
    using namespace lrnmt;
    std::vector<OpCheck> checks;

    auto scalarized = [](auto builder) {
        // builder: (Tape&, RngStream&, inputs&) -> Var (any shape)
        return [builder](std::uint64_t seed) {
            RngStream rng(seed);
            std::vector<Var<double>> inputs;
            Tape<double> probe(false);
            Var<double> sample = builder(probe, rng, inputs);
            Var<double> w = loss_weights(sample, rng);
            // Rebuilding must reuse the same input nodes; builders take the
            // input list by reference and only fill it when empty.
            auto make_loss = [&](Tape<double>& t) {
                RngStream rebuild(seed);
                Var<double> out = builder(t, rebuild, inputs);
                return lrnmt::sum(t, lrnmt::mul(t, out, w));
            };
            RngStream probe_rng(seed ^ 0xABCDEF);
            return check_gradients(make_loss, inputs, probe_rng);
        };
    };

    auto dims = [](RngStream& rng, std::size_t lo, std::size_t hi) {
        return lo + static_cast<std::size_t>(rng.next_below(hi - lo + 1));
    };

    checks.push_back({"matmul 2d", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                     std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), k = dims(rng, 1, 4),
                                            n = dims(rng, 1, 4);
                          if (in.empty()) {
                              in.push_back(random_leaf({m, k}, rng));
                              in.push_back(random_leaf({k, n}, rng));
                          }
                          return matmul(t, in[0], in[1]);
                      })});
    checks.push_back({"matmul batched", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                          std::vector<Var<double>>& in) {
                          const std::size_t b = dims(rng, 1, 3), m = dims(rng, 1, 3),
                                            k = dims(rng, 1, 3), n = dims(rng, 1, 3);
                          if (in.empty()) {
                              in.push_back(random_leaf({b, 2, m, k}, rng));
                              in.push_back(random_leaf({b, 2, k, n}, rng));
                          }
                          return matmul(t, in[0], in[1]);
                      })});
    checks.push_back({"matmul broadcast", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                            std::vector<Var<double>>& in) {
                          const std::size_t b = dims(rng, 1, 3), m = dims(rng, 1, 3),
                                            k = dims(rng, 1, 3), n = dims(rng, 1, 3);
                          if (in.empty()) {
                              in.push_back(random_leaf({b, m, k}, rng));
                              in.push_back(random_leaf({k, n}, rng));
                          }
                          return matmul(t, in[0], in[1]);
                      })});
    checks.push_back({"add", scalarized([dims](Tape<double>& t, RngStream& rng,
                                               std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), n = dims(rng, 1, 4);
                          if (in.empty()) {
                              in.push_back(random_leaf({m, n}, rng));
                              in.push_back(random_leaf({m, n}, rng));
                          }
                          return add(t, in[0], in[1]);
                      })});
    checks.push_back({"add bias", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                    std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 2, 4), n = dims(rng, 2, 4);
                          if (in.empty()) {
                              in.push_back(random_leaf({m, n}, rng));
                              in.push_back(random_leaf({n}, rng));
                          }
                          return add(t, in[0], in[1]);
                      })});
    checks.push_back({"mul", scalarized([dims](Tape<double>& t, RngStream& rng,
                                               std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), n = dims(rng, 1, 4);
                          if (in.empty()) {
                              in.push_back(random_leaf({m, n}, rng));
                              in.push_back(random_leaf({m, n}, rng));
                          }
                          return mul(t, in[0], in[1]);
                      })});
    checks.push_back({"scale", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                 std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 5);
                          const double s = rng.next_uniform(-2.0, 2.0);
                          if (in.empty()) in.push_back(random_leaf({m, 3}, rng));
                          return scale(t, in[0], s);
                      })});
    checks.push_back({"transpose", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                     std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), n = dims(rng, 1, 4);
                          if (in.empty()) in.push_back(random_leaf({2, m, n}, rng));
                          return transpose(t, in[0]);
                      })});
    checks.push_back({"swap_axes", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                     std::vector<Var<double>>& in) {
                          const std::size_t a = dims(rng, 1, 3), b = dims(rng, 1, 3),
                                            c = dims(rng, 1, 3);
                          if (in.empty()) in.push_back(random_leaf({a, b, c, 2}, rng));
                          return swap_axes(t, in[0], 1, 2);
                      })});
    checks.push_back({"reshape", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                   std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4);
                          if (in.empty()) in.push_back(random_leaf({m, 6}, rng));
                          return reshape(t, in[0], {m * 2, 3});
                      })});
    checks.push_back({"concat", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                  std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 3), n = dims(rng, 1, 3);
                          if (in.empty()) {
                              in.push_back(random_leaf({m, 2, n}, rng));
                              in.push_back(random_leaf({m, 3, n}, rng));
                          }
                          return concat(t, {in[0], in[1]}, 1);
                      })});
    checks.push_back({"embedding_lookup", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                            std::vector<Var<double>>& in) {
                          const std::size_t v = dims(rng, 3, 8), d = dims(rng, 2, 5);
                          std::vector<int> ids(6);
                          for (int& id : ids) id = static_cast<int>(rng.next_below(v));
                          if (in.empty()) in.push_back(random_leaf({v, d}, rng));
                          return embedding_lookup(t, in[0], ids, {2, 3});
                      })});
    checks.push_back(
        {"add_position_encoding", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                    std::vector<Var<double>>& in) {
             const std::size_t s = dims(rng, 1, 4), d = dims(rng, 2, 4);
             static std::vector<double> rows;
             rows.assign(8 * d, 0.0);
             for (double& r : rows) r = rng.next_uniform(-1.0, 1.0);
             if (in.empty()) in.push_back(random_leaf({2, s, d}, rng));
             return add_position_encoding(t, in[0], rows, 8);
         })});
    checks.push_back({"softmax", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                   std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), n = dims(rng, 2, 6);
                          if (in.empty()) in.push_back(random_leaf({m, n}, rng));
                          return softmax(t, in[0]);
                      })});
    checks.push_back({"masked_softmax", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                          std::vector<Var<double>>& in) {
                          const std::size_t b = dims(rng, 1, 2), h = dims(rng, 1, 3),
                                            q = dims(rng, 1, 3), k = dims(rng, 2, 5);
                          auto mask = std::make_shared<std::vector<std::uint8_t>>(b * q * k, 0);
                          for (std::size_t r = 0; r < b * q; ++r) {
                              bool any = false;
                              for (std::size_t j = 0; j < k; ++j) {
                                  (*mask)[r * k + j] = rng.next_double() < 0.7;
                                  any = any || (*mask)[r * k + j];
                              }
                              if (!any) (*mask)[r * k] = 1;
                          }
                          if (in.empty()) in.push_back(random_leaf({b, h, q, k}, rng));
                          return masked_softmax(t, in[0], mask);
                      })});
    checks.push_back({"layer_norm", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                      std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), d = dims(rng, 2, 6);
                          if (in.empty()) {
                              in.push_back(random_leaf({m, d}, rng));
                              in.push_back(random_leaf({d}, rng));
                              in.push_back(random_leaf({d}, rng));
                          }
                          return layer_norm(t, in[0], in[1], in[2]);
                      })});
    checks.push_back({"relu", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 5);
                          if (in.empty()) {
                              Var<double> x = random_leaf({m, 4}, rng);
                              // keep values away from the kink at 0
                              for (double& v : x->value)
                                  if (std::abs(v) < 0.05) v += v >= 0 ? 0.1 : -0.1;
                              in.push_back(x);
                          }
                          return relu(t, in[0]);
                      })});
    checks.push_back({"dropout", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                   std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 2, 5);
                          if (in.empty()) in.push_back(random_leaf({m, 4}, rng));
                          return dropout(t, in[0], 0.3, 1234, true);
                      })});
    checks.push_back({"sum", scalarized([dims](Tape<double>& t, RngStream& rng,
                                               std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 5);
                          if (in.empty()) in.push_back(random_leaf({m, 3}, rng));
                          return sum(t, in[0]);
                      })});
    checks.push_back({"l2_normalize_rows", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                             std::vector<Var<double>>& in) {
                          const std::size_t m = dims(rng, 1, 4), d = dims(rng, 2, 5);
                          if (in.empty()) {
                              Var<double> x = random_leaf({m, d}, rng);
                              for (double& v : x->value) v += v >= 0 ? 0.2 : -0.2;
                              in.push_back(x);
                          }
                          return l2_normalize_rows(t, in[0]);
                      })});
    checks.push_back({"masked_mean_rows", scalarized([dims](Tape<double>& t, RngStream& rng,
                                                            std::vector<Var<double>>& in) {
                          const std::size_t b = dims(rng, 1, 3), s = dims(rng, 2, 5),
                                            d = dims(rng, 2, 4);
                          auto mask = std::make_shared<std::vector<std::uint8_t>>(b * s, 0);
                          for (std::size_t bi = 0; bi < b; ++bi) {
                              bool any = false;
                              for (std::size_t t2 = 0; t2 < s; ++t2) {
                                  (*mask)[bi * s + t2] = rng.next_double() < 0.6;
                                  any = any || (*mask)[bi * s + t2];
                              }
                              if (!any) (*mask)[bi * s] = 1;
                          }
                          if (in.empty()) in.push_back(random_leaf({b, s, d}, rng));
                          return masked_mean_rows(t, in[0], mask);
                      })});

    // cross_entropy is already scalar; check it directly.
    auto ce_check = [](double smoothing) {
        return [smoothing](std::uint64_t seed) {
            using namespace lrnmt;
            RngStream rng(seed);
            const std::size_t b = 2, s = 3, v = 5;
            std::vector<int> targets(b * s);
            for (std::size_t i = 0; i < targets.size(); ++i) {
                targets[i] = static_cast<int>(1 + rng.next_below(v - 1));
                if (rng.next_double() < 0.2) targets[i] = 0;  // some padding
            }
            targets[0] = 2;  // at least one live position
            std::vector<Var<double>> inputs = {random_leaf({b, s, v}, rng)};
            auto make_loss = [&](Tape<double>& t) {
                return cross_entropy(t, inputs[0], targets, 0, smoothing);
            };
            RngStream probe(seed ^ 0x5EED);
            return check_gradients(make_loss, inputs, probe);
        };
    };
    checks.push_back({"cross_entropy", ce_check(0.0)});
    checks.push_back({"cross_entropy smoothed", ce_check(0.1)});

    return checks;
}

}  // namespace gradcheck
