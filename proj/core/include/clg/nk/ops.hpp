#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clg/nk/tape.hpp"

// Differentiable operations on tape variables. All operate on matrices;
// "rows" means the leading extent. Each op records its local backward rule.
namespace clg::nk {

inline constexpr double kCosineEps = 1e-8;

// Linear algebra
template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> transpose(Var<T> a);

// Elementwise arithmetic (identical shapes)
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, T factor);
template <class T> Var<T> add_scalar(Var<T> a, T c);
// a (n x m) + row (1 x m) broadcast over rows
template <class T> Var<T> add_row(Var<T> a, Var<T> row);
// out(i, j) = col(i) + row(j); col is n x 1, row is m x 1 (or 1 x m)
template <class T> Var<T> outer_sum(Var<T> col, Var<T> row);

// Activations and pointwise maps
template <class T> Var<T> relu(Var<T> a);
template <class T> Var<T> elu(Var<T> a, T alpha = T(1));
template <class T> Var<T> leaky_relu(Var<T> a, T slope);
template <class T> Var<T> sigmoid(Var<T> a);
template <class T> Var<T> exp(Var<T> a);
template <class T> Var<T> log(Var<T> a);
// Gradient passes only where lo < a < hi.
template <class T> Var<T> clamp(Var<T> a, T lo, T hi);

// Row-wise normalizations
template <class T> Var<T> softmax_rows(Var<T> a);
template <class T> Var<T> log_softmax_rows(Var<T> a);
// out(i, j) = a(i, j) / (sum_j a(i, j) + eps)
template <class T> Var<T> row_normalize(Var<T> a, T eps);

// Reductions
template <class T> Var<T> sum(Var<T> a);
template <class T> Var<T> mean(Var<T> a);
// Column means over rows: n x m -> 1 x m
template <class T> Var<T> mean_rows(Var<T> a);
// Row sums: n x m -> n x 1
template <class T> Var<T> sum_cols(Var<T> a);
template <class T> Var<T> diag(Var<T> a);
// Single element as a 1x1 tensor
template <class T> Var<T> pick(Var<T> a, std::size_t r, std::size_t c);

// Structural
template <class T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <class T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <class T> Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end);
template <class T> Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end);
template <class T> Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids);
// Same data, new extents (rows * cols must match).
template <class T> Var<T> reshape(Var<T> a, std::size_t rows, std::size_t cols);

// Column standardization with batch statistics: (a - mean) / sqrt(var + eps),
// biased variance. Gradient flows through the statistics.
template <class T> Var<T> standardize_cols(Var<T> a, T eps);

// Similarities and divergences
// out(i, j) = a_i . b_j / (|a_i| |b_j| + eps)
template <class T> Var<T> cosine_matrix(Var<T> a, Var<T> b, T eps = T(kCosineEps));
// mean over rows i of sum_j p(i, j) * (log p(i, j) - log q(i, j)); terms with p == 0 vanish
template <class T> Var<T> kl_rows(Var<T> p, Var<T> q);

// Plain (non-recorded) helpers shared by ops and oracles.
template <class T> Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b);
template <class T> T cosine(std::span<const T> u, std::span<const T> v, T eps = T(kCosineEps));

// Convenience: Var overloads for the common arithmetic spellings.
template <class T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <class T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <class T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

}  // namespace clg::nk
