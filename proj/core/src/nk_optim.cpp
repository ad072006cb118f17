#include "clg/nk/optim.hpp"

#include <cmath>

namespace clg::nk {

template <class T>
AdamW<T>::AdamW(std::vector<Parameter<T>*> params, AdamWOptions opts) : params_(std::move(params)), opts_(opts) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

template <class T>
void AdamW<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - opts_.lr * opts_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& w = params_[k]->value.values();
    const auto& g = params_[k]->grad.values();
    auto& m = m_[k].values();
    auto& v = v_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * gi;
      const double vi = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + opts_.eps);
      w[i] = static_cast<T>(w[i] * decay - opts_.lr * update);
    }
  }
}

template <class T>
void AdamW<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace clg::nk
