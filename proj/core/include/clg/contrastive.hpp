#pragma once

#include "clg/nk/ops.hpp"

namespace clg {

inline constexpr double kDefaultTemperature = 0.1;

// InfoNCE with the question as anchor. Row i of Q and row i of G form the
// positive pair; every anchor's denominator also holds all N*N - N
// mismatched (q_k, g_l) pairs of the batch.
template <class T>
nk::Var<T> info_nce(nk::Var<T> Q, nk::Var<T> G, T tau = T(kDefaultTemperature));

// Same loss from a precomputed similarity matrix sim(q_k, g_l).
template <class T>
nk::Var<T> info_nce_from_similarity(nk::Var<T> sim, T tau = T(kDefaultTemperature));

// Row distributions from within-modality cosine similarities: mapped to
// [0,1] via (c + 1) / 2, diagonal removed, rows renormalized.
template <class T>
nk::Var<T> similarity_distribution(nk::Var<T> X);

// Mean over rows of KL(P_g || P_q).
template <class T>
nk::Var<T> kl_match(nk::Var<T> Q, nk::Var<T> G);

}  // namespace clg
