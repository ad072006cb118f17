#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "clg/nk/ops.hpp"
#include "clg/nk/optim.hpp"
#include "gradcheck.hpp"

using namespace clg;
using nk::Tensor;
using nk::Tape;
using testing::check_gradients;
using testing::random_param;
using testing::random_tensor;

namespace {

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor<double> t(3, 4);
  CHECK(t.size() == 12);
  CHECK_THROWS_AS(Tensor<double>(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>(0, 2), DimensionError);
}

TEST_CASE("matmul examples") {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  auto X = random_tensor(3, 3, rng);
  auto I = tape.constant(Tensor<double>::identity(3));
  CHECK(nk::matmul(I, tape.constant(X)).value() == X);

  auto a = tape.constant(Tensor<double>{{1, 2}, {3, 4}});
  auto b = tape.constant(Tensor<double>{{1}, {1}});
  CHECK(nk::matmul(a, b).value() == Tensor<double>{{3}, {7}});

  auto A = random_tensor(4, 5, rng), B = random_tensor(5, 3, rng);
  CHECK(testing::max_abs_diff(nk::matmul_values(A, B), naive_matmul(A, B)) <= 1e-12);
}

TEST_CASE("matmul agrees with the triple loop up to 8x8") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> ext(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = ext(rng), k = ext(rng), n = ext(rng);
    auto A = random_tensor(m, k, rng), B = random_tensor(k, n, rng);
    REQUIRE(testing::max_abs_diff(nk::matmul_values(A, B), naive_matmul(A, B)) <= 1e-12);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(2, 3));
  auto b = tape.constant(Tensor<double>(2, 3));
  try {
    nk::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax_rows examples") {
  Tape<double> tape;
  auto s = nk::softmax_rows(tape.constant(Tensor<double>{{1, 1, 1}, {1000, 1000, 1000}}));
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(s.value()(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(s.value()(1, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  auto big = nk::softmax_rows(tape.constant(Tensor<double>{{1000, 1000}}));
  CHECK(big.value()(0, 0) == 0.5);
  auto t = nk::softmax_rows(tape.constant(Tensor<double>{{0, std::log(3.0)}}));
  CHECK(t.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.value()(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(nk::softmax_rows(tape.constant(Tensor<double>{{0, std::nan("")}})), NumericError);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<double> tape;
    auto s = nk::softmax_rows(tape.constant(random_tensor(5, 7, rng, -20, 20)));
    for (std::size_t r = 0; r < 5; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.value()(r, c) > 0.0);
        sum += s.value()(r, c);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("cosine examples") {
  const std::vector<double> x{0.3, -2.0, 1.5}, e1{1, 0}, e2{0, 1}, d{1, 1};
  CHECK(std::abs(nk::cosine<double>(x, x) - 1.0) <= 1e-8);
  CHECK(nk::cosine<double>(e1, e2) == 0.0);
  CHECK(nk::cosine<double>(e1, d) == doctest::Approx(0.70710678).epsilon(1e-8));
  const std::vector<double> zero{0, 0};
  CHECK(nk::cosine<double>(zero, d) == 0.0);
  CHECK_THROWS_AS(nk::cosine<double>(x, d), DimensionError);
}

TEST_CASE("backward examples and contract") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>{{1, 2, 3}});
  auto loss = nk::sum(nk::mul(x, x));
  tape.backward(loss);
  CHECK(x.grad() == Tensor<double>{{2, 4, 6}});
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  tape.reset_grads();
  CHECK_NOTHROW(tape.backward(loss));

  Tape<double> t2;
  auto c = t2.constant(Tensor<double>{{1, 2}});
  auto s = nk::sum(c);
  t2.backward(s);
  CHECK(c.grad() == Tensor<double>(1, 2));

  Tape<double> t3;
  auto v = t3.leaf(Tensor<double>{{1, 2}});
  CHECK_THROWS_AS(t3.backward(nk::mul(v, v)), ContractError);
}

TEST_CASE("no gradient reaches nodes that do not require it") {
  Tape<double> tape;
  auto a = tape.leaf(Tensor<double>{{1, 2}}, true);
  auto b = tape.constant(Tensor<double>{{3, 4}});
  auto mid = nk::mul(b, b);
  tape.backward(nk::sum(nk::mul(a, mid)));
  CHECK(b.grad() == Tensor<double>(1, 2));
  CHECK(mid.grad() == Tensor<double>(1, 2));
  CHECK(a.grad() == Tensor<double>{{9, 16}});
}

TEST_CASE("gradient check: pointwise and reduction ops") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_param("a", 3, 4, rng), b = random_param("b", 3, 4, rng);
    auto r = check_gradients({&a, &b}, [&](Tape<double>& t) {
      auto x = t.param(a), y = t.param(b);
      auto z = nk::add(nk::elu(x), nk::mul(nk::sigmoid(y), nk::leaky_relu(x, 0.2)));
      z = nk::sub(z, nk::scale(nk::relu(y), 0.3));
      z = nk::add(z, nk::exp(nk::scale(x, 0.5)));
      z = nk::add(z, nk::log(nk::add_scalar(nk::mul(y, y), 1.0)));
      return nk::add(nk::mean(z), testing::probe(z, 7));
    });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradient check: row-wise normalizations") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_param("a", 4, 5, rng);
    auto w = random_param("w", 4, 5, rng, 0.1, 1.0);
    auto r = check_gradients({&a, &w}, [&](Tape<double>& t) {
      auto x = t.param(a), y = t.param(w);
      auto s = nk::softmax_rows(x);
      auto ls = nk::log_softmax_rows(x);
      auto rn = nk::row_normalize(nk::mul(s, y), 1e-8);
      return nk::add(testing::probe(rn, 1), testing::probe(ls, 2));
    });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradient check: structural ops and matmul") {
  std::mt19937_64 rng(6);
  auto a = random_param("a", 4, 3, rng), b = random_param("b", 3, 5, rng), row = random_param("row", 1, 5, rng);
  auto col = random_param("col", 4, 1, rng);
  auto r = check_gradients({&a, &b, &row, &col}, [&](Tape<double>& t) {
    auto x = t.param(a), y = t.param(b), rw = t.param(row), cl = t.param(col);
    auto m = nk::add_row(nk::matmul(x, y), rw);
    auto parts = std::vector<nk::Var<double>>{nk::slice_cols(m, 0, 2), nk::slice_cols(m, 2, 5)};
    auto cat = nk::concat_cols<double>(parts);
    auto rows = std::vector<nk::Var<double>>{nk::slice_rows(cat, 1, 3), nk::slice_rows(cat, 0, 1)};
    auto stacked = nk::concat_rows<double>(rows);
    const std::vector<std::size_t> ids{2, 0, 2};
    auto g = nk::gather_rows(stacked, std::span<const std::size_t>(ids));
    auto os = nk::outer_sum(cl, nk::transpose(rw));
    auto rs = nk::reshape(nk::sum_cols(os), 2, 2);
    return nk::add(nk::add(testing::probe(g, 3), testing::probe(nk::mean_rows(os), 4)),
                   nk::add(testing::probe(rs, 5), nk::pick(nk::diag(nk::slice_cols(os, 0, 4)), 1, 0)));
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradient check: cosine matrix, KL rows, standardize, clamp") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_param("a", 4, 6, rng), b = random_param("b", 3, 6, rng);
    auto p = random_param("p", 3, 4, rng), q = random_param("q", 3, 4, rng);
    auto r = check_gradients({&a, &b, &p, &q}, [&](Tape<double>& t) {
      auto cm = nk::cosine_matrix(t.param(a), t.param(b));
      auto kl = nk::kl_rows(nk::softmax_rows(t.param(p)), nk::softmax_rows(t.param(q)));
      auto st = nk::standardize_cols(t.param(a), 1e-5);
      auto cl = nk::clamp(t.param(p), -0.5, 0.5);
      return nk::add(nk::add(testing::probe(cm, 1), kl), nk::add(testing::probe(st, 2), testing::probe(cl, 3)));
    });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("standardize_cols yields zero mean and unit variance columns") {
  std::mt19937_64 rng(8);
  Tape<double> tape;
  auto s = nk::standardize_cols(tape.constant(random_tensor(16, 3, rng, -3, 5)), 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 16; ++r) m += s.value()(r, c);
    m /= 16;
    for (std::size_t r = 0; r < 16; ++r) v += (s.value()(r, c) - m) * (s.value()(r, c) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 16 == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("AdamW first step moves each weight by lr against the gradient sign, plus decay") {
  nk::Parameter<double> p("w", Tensor<double>{{1.0, -2.0}});
  p.grad = Tensor<double>{{0.5, -3.0}};
  nk::AdamW<double> opt({&p}, {0.1, 0.9, 0.999, 1e-8, 0.01});
  opt.step();
  // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(p.value(0, 0) == doctest::Approx(1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p.value(0, 1) == doctest::Approx(-2.0 * (1 - 0.1 * 0.01) + 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  opt.zero_grad();
  CHECK(p.grad == Tensor<double>(1, 2));
  CHECK(opt.step_count() == 1);
}
