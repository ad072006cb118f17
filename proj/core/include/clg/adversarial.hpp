#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "clg/nk/init.hpp"
#include "clg/nk/ops.hpp"

namespace clg {

inline constexpr double kProbClamp = 1e-7;

// d -> d -> d -> 1 MLP with ReLU between layers and a sigmoid output.
template <class T>
struct Discriminator {
  nk::Parameter<T> W1, b1, W2, b2, W3, b3;

  static Discriminator init(std::size_t d, nk::Rng& rng);
  std::size_t width() const { return W1.value.rows(); }
  template <class F>
  void visit(F&& f) {
    f(W1);
    f(b1);
    f(W2);
    f(b2);
    f(W3);
    f(b3);
  }
};

// Row-wise probabilities D(x), clamped to [1e-7, 1 - 1e-7]; n x 1.
template <class T>
nk::Var<T> discriminate(Discriminator<T>& D, nk::Var<T> X, nk::Binding b);

// Seeded standard-normal source for the prior p_z.
template <class T>
class PriorSampler {
 public:
  PriorSampler(std::size_t d, std::uint64_t seed) : d_(d), rng_(seed) {}
  nk::Tensor<T> sample(std::size_t n);
  std::size_t dim() const noexcept { return d_; }

 private:
  std::size_t d_;
  nk::Rng rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

// -mean log D(real) - mean log(1 - D(fake)). Both batches enter as
// constants, so only D receives gradient.
template <class T>
nk::Var<T> loss_discriminator(Discriminator<T>& D, nk::Tape<T>& tape, const nk::Tensor<T>& real,
                              const nk::Tensor<T>& fake);

// -0.5 * mean log D(fake). D is frozen; gradient flows into `fake`.
template <class T>
nk::Var<T> loss_generator(Discriminator<T>& D, nk::Var<T> fake);

}  // namespace clg
