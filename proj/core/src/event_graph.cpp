#include "clg/event_graph.hpp"

#include <string>

#include "clg/nk/ops.hpp"

namespace clg {
namespace {

template <class T>
T mapped_cosine(const nk::Tensor<T>& X, std::size_t i, std::size_t j) {
  return (nk::cosine<T>(X.row_span(i), X.row_span(j)) + T(1)) / T(2);
}

void check_box(const std::vector<float>& box, std::size_t m) {
  for (float v : box) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw LayoutError("observation " + std::to_string(m) + ": box coordinate outside [0,1]");
    }
  }
  if (box.size() >= 4 && (box[0] > box[2] || box[1] > box[3])) {
    throw LayoutError("observation " + std::to_string(m) + ": box corners out of order");
  }
}

}  // namespace

template <class T>
nk::Tensor<T> init_nodes(std::span<const ObjectObservation> obs, std::size_t K, std::size_t L, std::size_t N) {
  const std::size_t M = K * L * N;
  if (M == 0) throw LayoutError("K, L and N must all be positive");
  if (obs.size() != M) {
    throw LayoutError("expected K*L*N = " + std::to_string(M) + " observations, got " + std::to_string(obs.size()));
  }
  const std::size_t d1 = obs[0].roi.size(), d2 = obs[0].box.size();
  if (d1 + d2 == 0) throw LayoutError("observations carry no features");
  nk::Tensor<T> X(M, d1 + d2);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& o = obs[m];
    if (o.roi.size() != d1 || o.box.size() != d2) {
      throw LayoutError("observation " + std::to_string(m) + ": inconsistent roi/box width");
    }
    const std::size_t frame = m / N;
    if (o.frame != frame || o.clip != frame / L) {
      throw LayoutError("observation " + std::to_string(m) + ": expected frame " + std::to_string(frame) +
                        " clip " + std::to_string(frame / L) + ", got frame " + std::to_string(o.frame) + " clip " +
                        std::to_string(o.clip));
    }
    check_box(o.box, m);
    auto row = X.row_span(m);
    for (std::size_t c = 0; c < d1; ++c) row[c] = static_cast<T>(o.roi[c]);
    for (std::size_t c = 0; c < d2; ++c) row[d1 + c] = static_cast<T>(o.box[c]);
  }
  return X;
}

template <class T>
T spatial_score(const EventGraph<T>& g, std::size_t i, std::size_t j) {
  if (i == j) throw ContractError("spatial_score: node paired with itself");
  if (g.frame_of.at(i) != g.frame_of.at(j)) throw ContractError("spatial_score: nodes lie in different frames");
  return mapped_cosine(g.X, i, j);
}

template <class T>
T temporal_score(const EventGraph<T>& g, std::size_t i, std::size_t j) {
  if (g.frame_of.at(i) == g.frame_of.at(j)) throw ContractError("temporal_score: nodes share a frame");
  return mapped_cosine(g.X, i, j);
}

template <class T>
EventGraph<T> graph_from_nodes(nk::Tensor<T> X, std::size_t K, std::size_t L, std::size_t N) {
  const std::size_t M = K * L * N;
  if (M == 0 || X.rows() != M) throw LayoutError("node matrix does not have K*L*N rows");
  EventGraph<T> g;
  g.K = K;
  g.L = L;
  g.N = N;
  g.frame_of.resize(M);
  g.clip_of.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    g.frame_of[m] = m / N;
    g.clip_of[m] = m / N / L;
  }
  g.X = std::move(X);
  g.A = nk::Tensor<T>(M, M);
  for (std::size_t i = 0; i < M; ++i) {
    g.A(i, i) = T(1);
    for (std::size_t j = i + 1; j < M; ++j) {
      const T a = g.frame_of[i] == g.frame_of[j] ? spatial_score(g, i, j) : temporal_score(g, i, j);
      g.A(i, j) = a;
      g.A(j, i) = a;
    }
  }
  return g;
}

template <class T>
EventGraph<T> build_graph(std::span<const ObjectObservation> obs, std::size_t K, std::size_t L, std::size_t N) {
  return graph_from_nodes<T>(init_nodes<T>(obs, K, L, N), K, L, N);
}

template nk::Tensor<float> init_nodes<float>(std::span<const ObjectObservation>, std::size_t, std::size_t, std::size_t);
template nk::Tensor<double> init_nodes<double>(std::span<const ObjectObservation>, std::size_t, std::size_t,
                                               std::size_t);
template float spatial_score<float>(const EventGraph<float>&, std::size_t, std::size_t);
template double spatial_score<double>(const EventGraph<double>&, std::size_t, std::size_t);
template float temporal_score<float>(const EventGraph<float>&, std::size_t, std::size_t);
template double temporal_score<double>(const EventGraph<double>&, std::size_t, std::size_t);
template EventGraph<float> build_graph<float>(std::span<const ObjectObservation>, std::size_t, std::size_t,
                                              std::size_t);
template EventGraph<double> build_graph<double>(std::span<const ObjectObservation>, std::size_t, std::size_t,
                                                std::size_t);
template EventGraph<float> graph_from_nodes<float>(nk::Tensor<float>, std::size_t, std::size_t, std::size_t);
template EventGraph<double> graph_from_nodes<double>(nk::Tensor<double>, std::size_t, std::size_t, std::size_t);

}  // namespace clg
