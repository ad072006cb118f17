#include "clg/gnn_layers.hpp"

namespace clg {
namespace {

template <class T>
void check_adjacency(nk::Var<T> A, nk::Var<T> X, const char* who) {
  const auto& a = A.value();
  if (a.rows() != a.cols() || a.rows() != X.rows()) {
    throw DimensionError(std::string(who) + ": adjacency " + a.shape_string() + " does not match nodes " +
                         X.value().shape_string());
  }
  for (T v : a.values()) {
    if (v < T(0)) throw ContractError(std::string(who) + ": negative adjacency entry");
  }
}

}  // namespace

template <class T>
GatLayer<T> GatLayer<T>::init(std::size_t d_in, std::size_t d_out, nk::Rng& rng, const std::string& name) {
  GatLayer l;
  l.W = nk::Parameter<T>(name + ".W", nk::glorot_uniform<T>(d_in, d_out, rng));
  l.attn = nk::Parameter<T>(name + ".attn", nk::glorot_uniform<T>(2 * d_out, 1, rng));
  return l;
}

template <class T>
SageLayer<T> SageLayer<T>::init(std::size_t d_in, std::size_t d_out, nk::Rng& rng, const std::string& name) {
  SageLayer l;
  l.W_self = nk::Parameter<T>(name + ".W_self", nk::glorot_uniform<T>(d_in, d_out, rng));
  l.W_neigh = nk::Parameter<T>(name + ".W_neigh", nk::glorot_uniform<T>(d_in, d_out, rng));
  return l;
}

template <class T>
nk::Var<T> gat_forward(GatLayer<T>& layer, nk::Var<T> A, nk::Var<T> X, nk::Binding b) {
  check_adjacency(A, X, "gat_forward");
  auto& tape = *X.tape;
  const std::size_t d_out = layer.d_out();
  auto W = nk::bind(tape, layer.W, b);
  auto attn = nk::bind(tape, layer.attn, b);
  auto H = nk::matmul(X, W);
  auto left = nk::matmul(H, nk::slice_rows(attn, 0, d_out));
  auto right = nk::matmul(H, nk::slice_rows(attn, d_out, 2 * d_out));
  auto e = nk::leaky_relu(nk::outer_sum(left, right), layer.leaky_slope);
  auto alpha = nk::row_normalize(nk::mul(nk::softmax_rows(e), A), T(kAttentionEps));
  return nk::elu(nk::matmul(alpha, H));
}

template <class T>
nk::Var<T> sage_forward(SageLayer<T>& layer, nk::Var<T> A, nk::Var<T> X, nk::Binding b) {
  check_adjacency(A, X, "sage_forward");
  auto& tape = *X.tape;
  auto Ws = nk::bind(tape, layer.W_self, b);
  auto Wn = nk::bind(tape, layer.W_neigh, b);
  auto neigh = nk::matmul(nk::row_normalize(A, T(kAttentionEps)), X);
  return nk::relu(nk::add(nk::matmul(X, Ws), nk::matmul(neigh, Wn)));
}

template struct GatLayer<float>;
template struct GatLayer<double>;
template struct SageLayer<float>;
template struct SageLayer<double>;
template nk::Var<float> gat_forward<float>(GatLayer<float>&, nk::Var<float>, nk::Var<float>, nk::Binding);
template nk::Var<double> gat_forward<double>(GatLayer<double>&, nk::Var<double>, nk::Var<double>, nk::Binding);
template nk::Var<float> sage_forward<float>(SageLayer<float>&, nk::Var<float>, nk::Var<float>, nk::Binding);
template nk::Var<double> sage_forward<double>(SageLayer<double>&, nk::Var<double>, nk::Var<double>, nk::Binding);

}  // namespace clg
