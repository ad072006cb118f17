#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "clg/nk/tape.hpp"

namespace clg::nk {

using Rng = std::mt19937_64;

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <class T>
Tensor<T> glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Tensor<T> normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
Tensor<T> uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(rows, cols);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

// How a module's parameters enter a tape: as trainable leaves bound to the
// parameter, or as constants (evaluation, or a frozen network inside another
// network's loss).
enum class Binding { Train, Frozen };

template <class T>
Var<T> bind(Tape<T>& tape, Parameter<T>& p, Binding b) {
  return b == Binding::Train ? tape.param(p) : tape.frozen(p);
}

}  // namespace clg::nk
