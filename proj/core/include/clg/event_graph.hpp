#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clg/nk/tensor.hpp"

namespace clg {

// One detected object in one frame. `box` is (x1, y1, x2, y2, area) in
// normalized image coordinates.
struct ObjectObservation {
  std::vector<float> roi;
  std::vector<float> box;
  std::size_t frame = 0;
  std::size_t clip = 0;
};

template <class T>
struct EventGraph {
  nk::Tensor<T> X;  // M x (d1 + d2)
  nk::Tensor<T> A;  // M x M relation scores
  std::vector<std::size_t> frame_of;
  std::vector<std::size_t> clip_of;
  std::size_t K = 0, L = 0, N = 0;

  std::size_t num_nodes() const noexcept { return frame_of.size(); }
};

// Row m = roi || box of observation m. Observations must be ordered
// clip-major, frame-second, object-minor, exactly K*L*N of them.
template <class T>
nk::Tensor<T> init_nodes(std::span<const ObjectObservation> obs, std::size_t K, std::size_t L, std::size_t N);

// Mapped cosine (c + 1) / 2 between two nodes of the same frame.
template <class T>
T spatial_score(const EventGraph<T>& g, std::size_t i, std::size_t j);

// Mapped cosine between two nodes of different frames.
template <class T>
T temporal_score(const EventGraph<T>& g, std::size_t i, std::size_t j);

template <class T>
EventGraph<T> build_graph(std::span<const ObjectObservation> obs, std::size_t K, std::size_t L, std::size_t N);

// Same as build_graph for an already assembled node matrix (rows ordered as
// init_nodes produces them).
template <class T>
EventGraph<T> graph_from_nodes(nk::Tensor<T> X, std::size_t K, std::size_t L, std::size_t N);

}  // namespace clg
