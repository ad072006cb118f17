#include "clg/hier_pool.hpp"

#include <cmath>
#include <string>

namespace clg {

std::vector<std::size_t> layer_schedule(std::size_t M, std::size_t P) {
  if (P == 1) return {M};
  std::vector<std::size_t> first;
  std::size_t n = M;
  for (std::size_t l = 0; l < P / 2; ++l) {
    n = std::max<std::size_t>((n + 1) / 2, 2);
    first.push_back(n);
  }
  std::vector<std::size_t> out = first;
  if (P % 2 == 1) out.push_back(first.empty() ? std::max<std::size_t>((M + 1) / 2, 2) : first.back());
  if (P == 0) return out;
  // Mirror: n_{P-l} = n_l for the shrinking half, ending at M.
  for (std::size_t l = first.size(); l-- > 1;) out.push_back(first[l - 1]);
  out.push_back(M);
  return out;
}

template <class T>
ClusterParams<T> ClusterParams<T>::init(std::size_t d, std::size_t n_next, nk::Rng& rng, const std::string& name) {
  ClusterParams p;
  p.embed = GatLayer<T>::init(d, d, rng, name + ".embed");
  p.pool = GatLayer<T>::init(d, n_next, rng, name + ".pool");
  p.sage1 = SageLayer<T>::init(d, d, rng, name + ".sage1");
  p.sage2 = SageLayer<T>::init(d, d, rng, name + ".sage2");
  return p;
}

template <class T>
ClusterLevel<T> gnn_cluster_step(ClusterParams<T>& params, nk::Var<T> A, nk::Var<T> X, std::size_t n_next,
                                 Phase phase, nk::Binding b, const nk::Tensor<T>* forced_S) {
  const std::size_t n = X.rows();
  if (n_next == 0) throw ScheduleError("gnn_cluster_step: n_next must be positive");
  if (phase == Phase::Shrink && n_next > n) {
    throw ScheduleError("gnn_cluster_step: shrink layer asked to grow " + std::to_string(n) + " -> " +
                        std::to_string(n_next) + " nodes");
  }
  auto& tape = *X.tape;
  ClusterLevel<T> out;
  out.Z = gat_forward(params.embed, A, X, b);
  if (forced_S) {
    if (forced_S->rows() != n || forced_S->cols() != n_next) {
      throw DimensionError("gnn_cluster_step: forced assignment has shape " + forced_S->shape_string());
    }
    out.S = tape.constant(*forced_S);
  } else {
    if (params.pool.d_out() != n_next) {
      throw DimensionError("gnn_cluster_step: pool layer width " + std::to_string(params.pool.d_out()) +
                           " differs from n_next " + std::to_string(n_next));
    }
    out.S = nk::softmax_rows(gat_forward(params.pool, A, X, b));
  }
  auto St = nk::transpose(out.S);
  out.X_next = nk::matmul(St, out.Z);
  out.A_next = nk::matmul(nk::matmul(St, A), out.S);
  auto h = sage_forward(params.sage1, out.A_next, out.X_next, b);
  out.X_refined = sage_forward(params.sage2, out.A_next, h, b);
  out.pooled = nk::mean_rows(out.X_refined);
  return out;
}

template <class T>
FusionParams<T> FusionParams<T>::init(std::size_t d, nk::Rng& rng, const std::string& name) {
  FusionParams p;
  p.Wq = nk::Parameter<T>(name + ".Wq", nk::glorot_uniform<T>(d, d, rng));
  p.Wk = nk::Parameter<T>(name + ".Wk", nk::glorot_uniform<T>(d, d, rng));
  p.Wv = nk::Parameter<T>(name + ".Wv", nk::glorot_uniform<T>(d, d, rng));
  return p;
}

template <class T>
FusedGraphEmbedding<T> multi_scale_fuse(FusionParams<T>& params, nk::Var<T> pooled, nk::Binding b) {
  auto& tape = *pooled.tape;
  const T scale = T(1) / std::sqrt(static_cast<T>(pooled.cols()));
  auto q = nk::matmul(pooled, nk::bind(tape, params.Wq, b));
  auto k = nk::matmul(pooled, nk::bind(tape, params.Wk, b));
  auto v = nk::matmul(pooled, nk::bind(tape, params.Wv, b));
  FusedGraphEmbedding<T> out;
  out.layer_weights = nk::softmax_rows(nk::scale(nk::matmul(q, nk::transpose(k)), scale));
  out.X_g = nk::mean_rows(nk::matmul(out.layer_weights, v));
  return out;
}

template <class T>
HierParams<T> HierParams<T>::init(std::size_t d_in, std::size_t d, std::size_t M, std::size_t P, nk::Rng& rng) {
  HierParams p;
  p.M = M;
  p.proj_W = nk::Parameter<T>("proj.W", nk::glorot_uniform<T>(d_in, d, rng));
  p.proj_b = nk::Parameter<T>("proj.b", nk::Tensor<T>(1, d));
  const auto sched = layer_schedule(M, P);
  for (std::size_t l = 0; l < sched.size(); ++l) {
    p.levels.push_back(ClusterParams<T>::init(d, sched[l], rng, "cluster" + std::to_string(l)));
  }
  p.fusion = FusionParams<T>::init(d, rng, "fusion");
  return p;
}

template <class T>
HierarchyOutput<T> forward_hierarchy(HierParams<T>& params, nk::Tape<T>& tape, const EventGraph<T>& graph,
                                     nk::Binding b) {
  if (graph.num_nodes() != params.M) {
    throw DimensionError("forward_hierarchy: graph has " + std::to_string(graph.num_nodes()) +
                         " nodes, parameters expect " + std::to_string(params.M));
  }
  auto X = tape.constant(graph.X);
  auto A = tape.constant(graph.A);
  auto H = nk::add_row(nk::matmul(X, nk::bind(tape, params.proj_W, b)), nk::bind(tape, params.proj_b, b));
  HierarchyOutput<T> out;
  if (params.levels.empty()) {
    out.fused.X_g = nk::mean_rows(H);
    out.fused.layer_weights = tape.constant(nk::Tensor<T>::scalar(T(1)));
    out.final_nodes = H;
    return out;
  }
  const auto sched = layer_schedule(params.M, params.levels.size());
  std::vector<nk::Var<T>> pooled;
  auto A_l = A;
  auto X_l = H;
  for (std::size_t l = 0; l < sched.size(); ++l) {
    const Phase phase = l < sched.size() / 2 ? Phase::Shrink : Phase::Expand;
    auto level = gnn_cluster_step(params.levels[l], A_l, X_l, sched[l], phase, b);
    pooled.push_back(level.pooled);
    A_l = level.A_next;
    X_l = level.X_refined;
    out.last = level;
  }
  out.fused = multi_scale_fuse(params.fusion, nk::concat_rows<T>(pooled), b);
  out.final_nodes = X_l;
  return out;
}

template struct ClusterParams<float>;
template struct ClusterParams<double>;
template struct FusionParams<float>;
template struct FusionParams<double>;
template struct HierParams<float>;
template struct HierParams<double>;
template ClusterLevel<float> gnn_cluster_step<float>(ClusterParams<float>&, nk::Var<float>, nk::Var<float>,
                                                     std::size_t, Phase, nk::Binding, const nk::Tensor<float>*);
template ClusterLevel<double> gnn_cluster_step<double>(ClusterParams<double>&, nk::Var<double>, nk::Var<double>,
                                                       std::size_t, Phase, nk::Binding, const nk::Tensor<double>*);
template FusedGraphEmbedding<float> multi_scale_fuse<float>(FusionParams<float>&, nk::Var<float>, nk::Binding);
template FusedGraphEmbedding<double> multi_scale_fuse<double>(FusionParams<double>&, nk::Var<double>, nk::Binding);
template HierarchyOutput<float> forward_hierarchy<float>(HierParams<float>&, nk::Tape<float>&,
                                                         const EventGraph<float>&, nk::Binding);
template HierarchyOutput<double> forward_hierarchy<double>(HierParams<double>&, nk::Tape<double>&,
                                                           const EventGraph<double>&, nk::Binding);

}  // namespace clg
