#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "clg/event_graph.hpp"
#include "clg/gnn_layers.hpp"

namespace clg {

// Node counts n_1..n_P: halve (ceil, floor 2) for the first floor(P/2)
// layers, hold the minimum for an odd middle layer, then mirror back to M.
std::vector<std::size_t> layer_schedule(std::size_t M, std::size_t P);

enum class Phase { Shrink, Expand };

template <class T>
struct ClusterParams {
  GatLayer<T> embed;
  GatLayer<T> pool;
  SageLayer<T> sage1;
  SageLayer<T> sage2;

  static ClusterParams init(std::size_t d, std::size_t n_next, nk::Rng& rng, const std::string& name);
  template <class F>
  void visit(F&& f) {
    embed.visit(f);
    pool.visit(f);
    sage1.visit(f);
    sage2.visit(f);
  }
};

template <class T>
struct ClusterLevel {
  nk::Var<T> Z;          // n_l x d
  nk::Var<T> S;          // n_l x n_next, rows on the simplex
  nk::Var<T> X_next;     // S^T Z
  nk::Var<T> A_next;     // S^T A S
  nk::Var<T> X_refined;  // X_next after the two GraphSage passes on A_next
  nk::Var<T> pooled;     // 1 x d column mean of X_refined
};

// One GNN-cluster. `forced_S`, when given, replaces the learned assignment
// (test hook); it must be n_l x n_next.
template <class T>
ClusterLevel<T> gnn_cluster_step(ClusterParams<T>& params, nk::Var<T> A, nk::Var<T> X, std::size_t n_next,
                                 Phase phase = Phase::Shrink, nk::Binding b = nk::Binding::Train,
                                 const nk::Tensor<T>* forced_S = nullptr);

template <class T>
struct FusionParams {
  nk::Parameter<T> Wq, Wk, Wv;  // d x d each

  static FusionParams init(std::size_t d, nk::Rng& rng, const std::string& name);
  template <class F>
  void visit(F&& f) {
    f(Wq);
    f(Wk);
    f(Wv);
  }
};

template <class T>
struct FusedGraphEmbedding {
  nk::Var<T> X_g;            // 1 x d
  nk::Var<T> layer_weights;  // P x P attention rows
};

// Scaled dot-product self-attention over the P pooled rows, then the mean
// of the attended rows.
template <class T>
FusedGraphEmbedding<T> multi_scale_fuse(FusionParams<T>& params, nk::Var<T> pooled, nk::Binding b = nk::Binding::Train);

template <class T>
struct HierParams {
  nk::Parameter<T> proj_W;  // d_in x d
  nk::Parameter<T> proj_b;  // 1 x d
  std::vector<ClusterParams<T>> levels;
  FusionParams<T> fusion;
  std::size_t M = 0;

  static HierParams init(std::size_t d_in, std::size_t d, std::size_t M, std::size_t P, nk::Rng& rng);
  std::size_t layers() const noexcept { return levels.size(); }
  std::size_t width() const { return proj_W.value.cols(); }
  template <class F>
  void visit(F&& f) {
    f(proj_W);
    f(proj_b);
    for (auto& l : levels) l.visit(f);
    fusion.visit(f);
  }
};

template <class T>
struct HierarchyOutput {
  FusedGraphEmbedding<T> fused;
  // Last cluster level; empty when P = 0, in which case `final_nodes` is the
  // projected input.
  std::optional<ClusterLevel<T>> last;
  nk::Var<T> final_nodes;
};

// Projects node features to width d, runs the P GNN-clusters of
// layer_schedule(M, P) and fuses their pooled vectors. P = 0 bypasses the
// stack: X_g is the mean of the projected nodes.
template <class T>
HierarchyOutput<T> forward_hierarchy(HierParams<T>& params, nk::Tape<T>& tape, const EventGraph<T>& graph,
                                     nk::Binding b = nk::Binding::Train);

}  // namespace clg
