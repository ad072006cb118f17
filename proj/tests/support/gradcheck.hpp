#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clg/nk/ops.hpp"

namespace clg::testing {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]"
  std::size_t checked = 0;
};

// Central finite differences against the tape gradient for every element of
// every parameter. `build` must bind each parameter with tape.param() and
// return a scalar. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckReport check_gradients(const std::vector<nk::Parameter<double>*>& params,
                                       const std::function<nk::Var<double>(nk::Tape<double>&)>& build,
                                       double h = 1e-5, double floor = 1e-3) {
  for (auto* p : params) p->zero_grad();
  {
    nk::Tape<double> tape;
    auto loss = build(tape);
    tape.backward(loss);
    tape.flush_param_grads();
  }
  auto eval = [&] {
    nk::Tape<double> tape;
    return build(tape).value().item();
  };
  GradCheckReport r;
  for (auto* p : params) {
    auto& vals = p->value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = eval();
      vals[i] = keep - h;
      const double down = eval();
      vals[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.values()[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++r.checked;
      if (!(rel <= r.max_rel_error)) {
        r.max_rel_error = rel;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

inline nk::Tensor<double> random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  nk::Tensor<double> t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline nk::Parameter<double> random_param(const std::string& name, std::size_t rows, std::size_t cols,
                                          std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return nk::Parameter<double>(name, random_tensor(rows, cols, rng, lo, hi));
}

// Symmetric, nonnegative, unit-diagonal adjacency.
inline nk::Tensor<double> random_adjacency(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  nk::Tensor<double> A(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) A(i, j) = A(j, i) = dist(rng);
  }
  return A;
}

// Fixed linear functional so a matrix-valued output becomes a scalar loss
// with nontrivial gradient in every entry.
inline nk::Var<double> probe(nk::Var<double> out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = out.tape->constant(random_tensor(out.rows(), out.cols(), rng));
  return nk::sum(nk::mul(out, w));
}

inline double max_abs_diff(const nk::Tensor<double>& a, const nk::Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace clg::testing
