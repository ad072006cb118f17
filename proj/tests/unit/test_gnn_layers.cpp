#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>

#include "clg/gnn_layers.hpp"
#include "gradcheck.hpp"

using namespace clg;
using nk::Tape;
using nk::Tensor;
using testing::random_adjacency;
using testing::random_tensor;

namespace {

double elu(double x) { return x > 0 ? x : std::expm1(x); }

Tensor<double> gat_oracle(const GatLayer<double>& layer, const Tensor<double>& A, const Tensor<double>& X) {
  const std::size_t n = X.rows(), din = X.cols(), dout = layer.W.value.cols();
  std::vector<std::vector<double>> h(n, std::vector<double>(dout, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < dout; ++o)
      for (std::size_t k = 0; k < din; ++k) h[i][o] += X(i, k) * layer.W.value(k, o);
  Tensor<double> out(n, dout);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t o = 0; o < dout; ++o) s += layer.attn.value(o, 0) * h[i][o] + layer.attn.value(dout + o, 0) * h[j][o];
      e[j] = s > 0 ? s : 0.2 * s;
    }
    const double mx = *std::max_element(e.begin(), e.end());
    double z = 0;
    for (double v : e) z += std::exp(v - mx);
    std::vector<double> w(n);
    double wz = 0;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = std::exp(e[j] - mx) / z * A(i, j);
      wz += w[j];
    }
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += w[j] / (wz + 1e-8) * h[j][o];
      out(i, o) = elu(acc);
    }
  }
  return out;
}

Tensor<double> sage_oracle(const SageLayer<double>& layer, const Tensor<double>& A, const Tensor<double>& X) {
  const std::size_t n = X.rows(), din = X.cols(), dout = layer.W_self.value.cols();
  Tensor<double> out(n, dout);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += A(i, j);
    std::vector<double> mean(din, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < din; ++k) mean[k] += A(i, j) / (deg + 1e-8) * X(j, k);
    for (std::size_t o = 0; o < dout; ++o) {
      double s = 0;
      for (std::size_t k = 0; k < din; ++k) s += X(i, k) * layer.W_self.value(k, o) + mean[k] * layer.W_neigh.value(k, o);
      out(i, o) = std::max(s, 0.0);
    }
  }
  return out;
}

Tensor<double> run_gat(GatLayer<double>& layer, const Tensor<double>& A, const Tensor<double>& X) {
  Tape<double> tape;
  return gat_forward(layer, tape.constant(A), tape.constant(X), nk::Binding::Frozen).value();
}

Tensor<double> run_sage(SageLayer<double>& layer, const Tensor<double>& A, const Tensor<double>& X) {
  Tape<double> tape;
  return sage_forward(layer, tape.constant(A), tape.constant(X), nk::Binding::Frozen).value();
}

}  // namespace

TEST_CASE("GAT single node is ELU of its projection") {
  nk::Rng rng(1);
  auto layer = GatLayer<double>::init(3, 4, rng, "gat");
  const auto X = random_tensor(1, 3, rng);
  const auto out = run_gat(layer, Tensor<double>{{1.0}}, X);
  for (std::size_t o = 0; o < 4; ++o) {
    double h = 0;
    for (std::size_t k = 0; k < 3; ++k) h += X(0, k) * layer.W.value(k, o);
    CHECK(out(0, o) == doctest::Approx(elu(h)).epsilon(1e-7));
  }
}

TEST_CASE("GAT with uniform adjacency and identical rows gives identical outputs") {
  nk::Rng rng(2);
  auto layer = GatLayer<double>::init(3, 5, rng, "gat");
  const auto row = random_tensor(1, 3, rng);
  Tensor<double> X(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) X(i, c) = row(0, c);
  const auto out = run_gat(layer, Tensor<double>(4, 4, 1.0), X);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t o = 0; o < 5; ++o) CHECK(out(i, o) == doctest::Approx(out(0, o)).epsilon(1e-12));
}

TEST_CASE("GAT matches the per-edge loop oracle") {
  nk::Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto layer = GatLayer<double>::init(4, 3, rng, "gat");
    const auto A = random_adjacency(3, rng);
    const auto X = random_tensor(3, 4, rng);
    CHECK(testing::max_abs_diff(run_gat(layer, A, X), gat_oracle(layer, A, X)) <= 1e-10);
  }
}

TEST_CASE("GAT rejects negative adjacency") {
  nk::Rng rng(4);
  auto layer = GatLayer<double>::init(2, 2, rng, "gat");
  CHECK_THROWS_AS(run_gat(layer, Tensor<double>{{1, -0.1}, {-0.1, 1}}, random_tensor(2, 2, rng)), ContractError);
  auto sage = SageLayer<double>::init(2, 2, rng, "sage");
  CHECK_THROWS_AS(run_sage(sage, Tensor<double>{{1, -0.1}, {-0.1, 1}}, random_tensor(2, 2, rng)), ContractError);
}

TEST_CASE("GraphSage isolated node and uniform-graph cases") {
  nk::Rng rng(5);
  auto layer = SageLayer<double>::init(3, 4, rng, "sage");
  const auto X = random_tensor(3, 3, rng);
  const auto out = run_sage(layer, Tensor<double>::identity(3), X);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t o = 0; o < 4; ++o) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += X(i, k) * (layer.W_self.value(k, o) + layer.W_neigh.value(k, o));
      CHECK(out(i, o) == doctest::Approx(std::max(s, 0.0)).epsilon(1e-7));
    }

  Tensor<double> same(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 3; ++c) same(i, c) = X(0, c);
  const auto u = run_sage(layer, Tensor<double>(3, 3, 0.4), same);
  const auto iso = run_sage(layer, Tensor<double>::identity(3), same);
  CHECK(testing::max_abs_diff(u, iso) <= 1e-7);
}

TEST_CASE("GraphSage all-zero adjacency row gives a zero neighbour mean") {
  nk::Rng rng(6);
  auto layer = SageLayer<double>::init(2, 3, rng, "sage");
  const auto X = random_tensor(2, 2, rng);
  const auto out = run_sage(layer, Tensor<double>{{0, 0}, {0, 1}}, X);
  for (std::size_t o = 0; o < 3; ++o) {
    double s = 0;
    for (std::size_t k = 0; k < 2; ++k) s += X(0, k) * layer.W_self.value(k, o);
    CHECK(out(0, o) == doctest::Approx(std::max(s, 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("GraphSage matches the aggregation loop oracle") {
  nk::Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto layer = SageLayer<double>::init(3, 5, rng, "sage");
    const auto A = random_adjacency(4, rng);
    const auto X = random_tensor(4, 3, rng);
    CHECK(testing::max_abs_diff(run_sage(layer, A, X), sage_oracle(layer, A, X)) <= 1e-10);
  }
}

TEST_CASE("both layers are node-permutation equivariant") {
  nk::Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto gat = GatLayer<double>::init(3, 4, rng, "gat");
    auto sage = SageLayer<double>::init(3, 4, rng, "sage");
    const auto A = random_adjacency(5, rng);
    const auto X = random_tensor(5, 3, rng);
    std::vector<std::size_t> p(5);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    Tensor<double> PA(5, 5), PX(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) PA(i, j) = A(p[i], p[j]);
      for (std::size_t c = 0; c < 3; ++c) PX(i, c) = X(p[i], c);
    }
    const auto g = run_gat(gat, A, X), pg = run_gat(gat, PA, PX);
    const auto s = run_sage(sage, A, X), ps = run_sage(sage, PA, PX);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t o = 0; o < 4; ++o) {
        CHECK(std::abs(pg(i, o) - g(p[i], o)) <= 1e-9);
        CHECK(std::abs(ps(i, o) - s(p[i], o)) <= 1e-9);
      }
  }
}

TEST_CASE("gradient check: GAT and GraphSage") {
  nk::Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto gat = GatLayer<double>::init(3, 4, rng, "gat");
    auto sage = SageLayer<double>::init(4, 2, rng, "sage");
    auto X = testing::random_param("X", 4, 3, rng);
    const auto A = random_adjacency(4, rng);
    auto r = testing::check_gradients({&gat.W, &gat.attn, &sage.W_self, &sage.W_neigh, &X}, [&](Tape<double>& t) {
      auto a = t.constant(A);
      auto h = gat_forward(gat, a, t.param(X));
      return testing::probe(sage_forward(sage, a, h), 11);
    });
    INFO(r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}
