#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "clg/nk/tape.hpp"

namespace clg::nk {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam. Owns the moment buffers for a fixed
// parameter list; the parameters themselves stay with their modules.
template <class T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, AdamWOptions opts);

  void step();
  void zero_grad();

  const AdamWOptions& options() const noexcept { return opts_; }
  void set_lr(double lr) noexcept { opts_.lr = lr; }
  std::uint64_t step_count() const noexcept { return t_; }
  const std::vector<Parameter<T>*>& params() const noexcept { return params_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<T>>& second_moments() noexcept { return v_; }
  void set_step_count(std::uint64_t t) noexcept { t_ = t; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamWOptions opts_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace clg::nk
