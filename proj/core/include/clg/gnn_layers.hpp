#pragma once

#include <string>

#include "clg/nk/init.hpp"
#include "clg/nk/ops.hpp"

namespace clg {

inline constexpr double kGatSlope = 0.2;
inline constexpr double kAttentionEps = 1e-8;

// Single-head graph attention with edge weights applied to the normalized
// attention and renormalized.
template <class T>
struct GatLayer {
  nk::Parameter<T> W;     // d_in x d_out
  nk::Parameter<T> attn;  // 2*d_out x 1: [a_left; a_right]
  T leaky_slope = T(kGatSlope);

  static GatLayer init(std::size_t d_in, std::size_t d_out, nk::Rng& rng, const std::string& name);
  std::size_t d_in() const { return W.value.rows(); }
  std::size_t d_out() const { return W.value.cols(); }
  template <class F>
  void visit(F&& f) {
    f(W);
    f(attn);
  }
};

template <class T>
struct SageLayer {
  nk::Parameter<T> W_self;   // d_in x d_out
  nk::Parameter<T> W_neigh;  // d_in x d_out

  static SageLayer init(std::size_t d_in, std::size_t d_out, nk::Rng& rng, const std::string& name);
  template <class F>
  void visit(F&& f) {
    f(W_self);
    f(W_neigh);
  }
};

// e_ij = LeakyReLU(a_l . Wx_i + a_r . Wx_j); alpha = softmax_j(e);
// alpha~_ij = alpha_ij a_ij / (sum_j alpha_ij a_ij + eps); out_i = ELU(sum_j alpha~_ij Wx_j).
template <class T>
nk::Var<T> gat_forward(GatLayer<T>& layer, nk::Var<T> A, nk::Var<T> X, nk::Binding b = nk::Binding::Train);

// out_i = ReLU(W_self x_i + W_neigh (sum_j a_ij x_j / sum_j a_ij)).
template <class T>
nk::Var<T> sage_forward(SageLayer<T>& layer, nk::Var<T> A, nk::Var<T> X, nk::Binding b = nk::Binding::Train);

}  // namespace clg
