#include "clg/contrastive.hpp"

#include <string>

namespace clg {

template <class T>
nk::Var<T> info_nce_from_similarity(nk::Var<T> sim, T tau) {
  if (!(tau > T(0))) throw ContractError("info_nce: temperature must be positive");
  const auto& s = sim.value();
  if (s.rows() != s.cols()) throw DimensionError("info_nce: similarity matrix must be square, got " + s.shape_string());
  auto& tape = *sim.tape;
  const std::size_t n = s.rows();
  auto logits = nk::scale(sim, T(1) / tau);
  auto pos = nk::diag(logits);  // n x 1
  // Shift by the global max so the exponentials cannot overflow; the shift
  // cancels between numerator and denominator.
  T shift = s[0] / tau;
  for (T v : s.values()) shift = std::max(shift, v / tau);
  auto e = nk::exp(nk::add_scalar(logits, -shift));
  auto neg_total = nk::sub(nk::sum(e), nk::sum(nk::diag(e)));  // 1 x 1
  auto ones = tape.constant(nk::Tensor<T>(n, 1, T(1)));
  auto den = nk::add(nk::diag(e), nk::matmul(ones, neg_total));
  // -log(num / den) = log(den) + shift - pos
  return nk::mean(nk::add_scalar(nk::sub(nk::log(den), pos), shift));
}

template <class T>
nk::Var<T> info_nce(nk::Var<T> Q, nk::Var<T> G, T tau) {
  if (Q.rows() != G.rows()) throw DimensionError("info_nce: batch sizes differ");
  return info_nce_from_similarity(nk::cosine_matrix(Q, G), tau);
}

template <class T>
nk::Var<T> similarity_distribution(nk::Var<T> X) {
  const std::size_t n = X.rows();
  if (n < 2) throw ContractError("similarity_distribution: need at least 2 rows");
  auto& tape = *X.tape;
  auto mapped = nk::add_scalar(nk::scale(nk::cosine_matrix(X, X), T(0.5)), T(0.5));
  nk::Tensor<T> mask(n, n, T(1));
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = T(0);
  return nk::row_normalize(nk::mul(mapped, tape.constant(std::move(mask))), T(nk::kCosineEps));
}

template <class T>
nk::Var<T> kl_match(nk::Var<T> Q, nk::Var<T> G) {
  if (Q.rows() < 2) throw ContractError("kl_match: batch needs at least 2 pairs");
  if (Q.rows() != G.rows()) throw DimensionError("kl_match: batch sizes differ");
  return nk::kl_rows(similarity_distribution(G), similarity_distribution(Q));
}

template nk::Var<float> info_nce<float>(nk::Var<float>, nk::Var<float>, float);
template nk::Var<double> info_nce<double>(nk::Var<double>, nk::Var<double>, double);
template nk::Var<float> info_nce_from_similarity<float>(nk::Var<float>, float);
template nk::Var<double> info_nce_from_similarity<double>(nk::Var<double>, double);
template nk::Var<float> similarity_distribution<float>(nk::Var<float>);
template nk::Var<double> similarity_distribution<double>(nk::Var<double>);
template nk::Var<float> kl_match<float>(nk::Var<float>, nk::Var<float>);
template nk::Var<double> kl_match<double>(nk::Var<double>, nk::Var<double>);

}  // namespace clg
