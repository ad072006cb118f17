#include "clg/adversarial.hpp"

namespace clg {

template <class T>
Discriminator<T> Discriminator<T>::init(std::size_t d, nk::Rng& rng) {
  Discriminator D;
  D.W1 = nk::Parameter<T>("disc.W1", nk::glorot_uniform<T>(d, d, rng));
  D.b1 = nk::Parameter<T>("disc.b1", nk::Tensor<T>(1, d));
  D.W2 = nk::Parameter<T>("disc.W2", nk::glorot_uniform<T>(d, d, rng));
  D.b2 = nk::Parameter<T>("disc.b2", nk::Tensor<T>(1, d));
  D.W3 = nk::Parameter<T>("disc.W3", nk::glorot_uniform<T>(d, 1, rng));
  D.b3 = nk::Parameter<T>("disc.b3", nk::Tensor<T>(1, 1));
  return D;
}

template <class T>
nk::Var<T> discriminate(Discriminator<T>& D, nk::Var<T> X, nk::Binding b) {
  auto& tape = *X.tape;
  if (X.cols() != D.width()) {
    throw DimensionError("discriminator expects width " + std::to_string(D.width()) + ", got " +
                         X.value().shape_string());
  }
  auto h = nk::relu(nk::add_row(nk::matmul(X, nk::bind(tape, D.W1, b)), nk::bind(tape, D.b1, b)));
  h = nk::relu(nk::add_row(nk::matmul(h, nk::bind(tape, D.W2, b)), nk::bind(tape, D.b2, b)));
  auto logit = nk::add_row(nk::matmul(h, nk::bind(tape, D.W3, b)), nk::bind(tape, D.b3, b));
  return nk::clamp(nk::sigmoid(logit), T(kProbClamp), T(1 - kProbClamp));
}

template <class T>
nk::Tensor<T> PriorSampler<T>::sample(std::size_t n) {
  nk::Tensor<T> z(n, d_);
  for (auto& v : z.values()) v = static_cast<T>(dist_(rng_));
  return z;
}

template <class T>
nk::Var<T> loss_discriminator(Discriminator<T>& D, nk::Tape<T>& tape, const nk::Tensor<T>& real,
                              const nk::Tensor<T>& fake) {
  if (real.size() == 0 || fake.size() == 0) throw ContractError("loss_discriminator: empty batch");
  auto d_real = discriminate(D, tape.constant(real), nk::Binding::Train);
  auto d_fake = discriminate(D, tape.constant(fake), nk::Binding::Train);
  auto term_real = nk::mean(nk::log(d_real));
  auto term_fake = nk::mean(nk::log(nk::add_scalar(nk::scale(d_fake, T(-1)), T(1))));
  return nk::scale(nk::add(term_real, term_fake), T(-1));
}

template <class T>
nk::Var<T> loss_generator(Discriminator<T>& D, nk::Var<T> fake) {
  if (fake.tape == nullptr || fake.value().size() == 0) throw ContractError("loss_generator: empty batch");
  auto d_fake = discriminate(D, fake, nk::Binding::Frozen);
  return nk::scale(nk::mean(nk::log(d_fake)), T(-0.5));
}

template struct Discriminator<float>;
template struct Discriminator<double>;
template class PriorSampler<float>;
template class PriorSampler<double>;
template nk::Var<float> discriminate<float>(Discriminator<float>&, nk::Var<float>, nk::Binding);
template nk::Var<double> discriminate<double>(Discriminator<double>&, nk::Var<double>, nk::Binding);
template nk::Var<float> loss_discriminator<float>(Discriminator<float>&, nk::Tape<float>&, const nk::Tensor<float>&,
                                                  const nk::Tensor<float>&);
template nk::Var<double> loss_discriminator<double>(Discriminator<double>&, nk::Tape<double>&,
                                                    const nk::Tensor<double>&, const nk::Tensor<double>&);
template nk::Var<float> loss_generator<float>(Discriminator<float>&, nk::Var<float>);
template nk::Var<double> loss_generator<double>(Discriminator<double>&, nk::Var<double>);

}  // namespace clg
