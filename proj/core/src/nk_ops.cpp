#include "clg/nk/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace clg::nk {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMat<T>>;
template <class T>
using Map = Eigen::Map<RowMat<T>>;

template <class T>
MapC<T> view(const Tensor<T>& t) {
  return MapC<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <class T>
Map<T> view(Tensor<T>& t) {
  return Map<T>(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

template <class T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands live on different tapes");
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

// Applies f elementwise and records g(x, y) * upstream as the local derivative,
// where x is the input and y the output.
template <class T, class F, class G>
Var<T> pointwise(Var<T> a, F f, G dfdx) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, dfdx](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    const Tensor<T>& xv = tp.value(ia);
    const Tensor<T>& yv = tp.value(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

template <class T>
Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor<T> out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

template <class T>
T cosine(std::span<const T> u, std::span<const T> v, T eps) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine: length mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  T dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv) + eps);
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  Tensor<T> out = matmul_values(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& tp, std::size_t self) {
    const auto g = view(std::as_const(tp.grad_mut(self)));
    if (tp.requires_grad(ia)) view(tp.grad_mut(ia)).noalias() += g * view(tp.value(ib)).transpose();
    if (tp.requires_grad(ib)) view(tp.grad_mut(ib)).noalias() += view(tp.value(ia)).transpose() * g;
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.cols(), x.rows());
  view(out) = view(x).transpose();
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    view(tp.grad_mut(ia)) += view(std::as_const(tp.grad_mut(self))).transpose();
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    for (auto id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      Tensor<T>& gi = tp.grad_mut(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    if (tp.requires_grad(ia)) {
      Tensor<T>& ga = tp.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor<T>& gb = tp.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {ia, ib}, [ia, ib](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    const Tensor<T>& av = tp.value(ia);
    const Tensor<T>& bv2 = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor<T>& ga = tp.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor<T>& gb = tp.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  return pointwise(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Var<T> add_scalar(Var<T> a, T c) {
  return pointwise(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> add_row(Var<T> a, Var<T> row) {
  require_same_tape(a, row, "add_row");
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: expected 1x" + std::to_string(av.cols()) + " row, got " + rv.shape_string());
  }
  Tensor<T> out = av;
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) += rv[c];
  const std::size_t ia = a.id, ir = row.id;
  return a.tape->record(std::move(out), {ia, ir}, [ia, ir](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    if (tp.requires_grad(ia)) {
      Tensor<T>& ga = tp.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ir)) {
      Tensor<T>& gr = tp.grad_mut(ir);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    }
  });
}

template <class T>
Var<T> outer_sum(Var<T> col, Var<T> row) {
  require_same_tape(col, row, "outer_sum");
  const auto& cv = col.value();
  const auto& rv = row.value();
  if (cv.cols() != 1 || (rv.cols() != 1 && rv.rows() != 1)) {
    throw DimensionError("outer_sum: expected column and vector, got " + cv.shape_string() + " and " +
                         rv.shape_string());
  }
  const std::size_t n = cv.rows(), m = rv.size();
  Tensor<T> out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = cv[i] + rv[j];
  const std::size_t ic = col.id, ir = row.id;
  return col.tape->record(std::move(out), {ic, ir}, [ic, ir](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    if (tp.requires_grad(ic)) {
      Tensor<T>& gc = tp.grad_mut(ic);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        T s = 0;
        for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j);
        gc[i] += s;
      }
    }
    if (tp.requires_grad(ir)) {
      Tensor<T>& gr = tp.grad_mut(ir);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
    }
  });
}

template <class T>
Var<T> relu(Var<T> a) {
  return pointwise(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> elu(Var<T> a, T alpha) {
  return pointwise(
      a, [alpha](T x) { return x > T(0) ? x : alpha * std::expm1(x); },
      [alpha](T x, T y) { return x > T(0) ? T(1) : y + alpha; });
}

template <class T>
Var<T> leaky_relu(Var<T> a, T slope) {
  return pointwise(
      a, [slope](T x) { return x > T(0) ? x : slope * x; }, [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  return pointwise(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> exp(Var<T> a) {
  return pointwise(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(Var<T> a) {
  return pointwise(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  return pointwise(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <class T>
Var<T> softmax_rows(Var<T> a) {
  const auto& x = a.value();
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (std::isnan(x(r, c))) throw NumericError("softmax_rows: NaN input in row " + std::to_string(r));
      mx = std::max(mx, x(r, c));
    }
    T s = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += (out(r, c) = std::exp(x(r, c) - mx));
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= s;
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    const Tensor<T>& y = tp.value(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

template <class T>
Var<T> log_softmax_rows(Var<T> a) {
  const auto& x = a.value();
  Tensor<T> out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (std::isnan(x(r, c))) throw NumericError("log_softmax_rows: NaN input in row " + std::to_string(r));
      mx = std::max(mx, x(r, c));
    }
    T s = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += std::exp(x(r, c) - mx);
    const T lse = mx + std::log(s);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) - lse;
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    const Tensor<T>& y = tp.value(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T gs = 0;
      for (std::size_t c = 0; c < y.cols(); ++c) gs += g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gs;
    }
  });
}

template <class T>
Var<T> row_normalize(Var<T> a, T eps) {
  const auto& x = a.value();
  Tensor<T> out(x.rows(), x.cols());
  Tensor<T> denom(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T s = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c);
    denom[r] = s + eps;
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / denom[r];
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, denom = std::move(denom)](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    const Tensor<T>& y = tp.value(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += (g(r, c) - dot) / denom[r];
    }
  });
}

template <class T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>::scalar(s), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad_mut(self)[0];
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <class T>
Var<T> mean_rows(Var<T> a) {
  const auto& x = a.value();
  Tensor<T> out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  const T inv = T(1) / static_cast<T>(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) out[c] *= inv;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, inv](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[c] * inv;
  });
}

template <class T>
Var<T> sum_cols(Var<T> a) {
  const auto& x = a.value();
  Tensor<T> out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[r] += x(r, c);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g[r];
  });
}

template <class T>
Var<T> diag(Var<T> a) {
  const auto& x = a.value();
  if (x.rows() != x.cols()) throw DimensionError("diag: expected square matrix, got " + x.shape_string());
  Tensor<T> out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = x(i, i);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga(i, i) += g[i];
  });
}

template <class T>
Var<T> pick(Var<T> a, std::size_t r, std::size_t c) {
  const auto& x = a.value();
  if (r >= x.rows() || c >= x.cols()) {
    throw ContractError("pick: index (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " +
                        x.shape_string());
  }
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>::scalar(x(r, c)), {ia}, [ia, r, c](Tape<T>& tp, std::size_t self) {
    tp.grad_mut(ia)(r, c) += tp.grad_mut(self)[0];
  });
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
    ids.push_back(p.id);
  }
  Tensor<T> out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
    off += v.cols();
  }
  auto ids_copy = ids;
  return parts[0].tape->record(std::move(out), std::move(ids), [ids = std::move(ids_copy)](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    std::size_t off2 = 0;
    for (auto id : ids) {
      const std::size_t w = tp.value(id).cols();
      if (tp.requires_grad(id)) {
        Tensor<T>& gi = tp.grad_mut(id);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, off2 + c);
      }
      off2 += w;
    }
  });
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p, "concat_rows");
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
    ids.push_back(p.id);
  }
  std::vector<T> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  auto ids_copy = ids;
  return parts[0].tape->record(Tensor<T>(rows, cols, std::move(data)), std::move(ids),
                               [ids = std::move(ids_copy)](Tape<T>& tp, std::size_t self) {
                                 const Tensor<T>& g = tp.grad_mut(self);
                                 std::size_t off = 0;
                                 for (auto id : ids) {
                                   const std::size_t n = tp.value(id).size();
                                   if (tp.requires_grad(id)) {
                                     Tensor<T>& gi = tp.grad_mut(id);
                                     for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
                                   }
                                   off += n;
                                 }
                               });
}

template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  if (begin >= end || end > x.cols()) throw DimensionError("slice_cols: bad range for " + x.shape_string());
  Tensor<T> out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x(r, c);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, begin](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) += g(r, c);
  });
}

template <class T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  if (begin >= end || end > x.rows()) throw DimensionError("slice_rows: bad range for " + x.shape_string());
  std::vector<T> data(x.data() + begin * x.cols(), x.data() + end * x.cols());
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>(end - begin, x.cols(), std::move(data)), {ia},
                        [ia, begin](Tape<T>& tp, std::size_t self) {
                          const Tensor<T>& g = tp.grad_mut(self);
                          Tensor<T>& ga = tp.grad_mut(ia);
                          const std::size_t off = begin * ga.cols();
                          for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
                        });
}

template <class T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> ids) {
  const auto& x = table.value();
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  Tensor<T> out(ids.size(), x.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= x.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(ids[k]) + " outside " + x.shape_string());
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(k, c) = x(ids[k], c);
  }
  const std::size_t it = table.id;
  return table.tape->record(std::move(out), {it},
                            [it, idv = std::vector<std::size_t>(ids.begin(), ids.end())](Tape<T>& tp, std::size_t self) {
                              const Tensor<T>& g = tp.grad_mut(self);
                              Tensor<T>& gt = tp.grad_mut(it);
                              for (std::size_t k = 0; k < idv.size(); ++k)
                                for (std::size_t c = 0; c < g.cols(); ++c) gt(idv[k], c) += g(k, c);
                            });
}

template <class T>
Var<T> reshape(Var<T> a, std::size_t rows, std::size_t cols) {
  const auto& x = a.value();
  if (rows * cols != x.size()) {
    throw DimensionError("reshape: cannot view " + x.shape_string() + " as " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  const std::size_t ia = a.id;
  return a.tape->record(Tensor<T>(rows, cols, x.values()), {ia}, [ia](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <class T>
Var<T> standardize_cols(Var<T> a, T eps) {
  const auto& x = a.value();
  const std::size_t n = x.rows(), m = x.cols();
  Tensor<T> out(n, m);
  Tensor<T> inv_std(1, m);
  for (std::size_t c = 0; c < m; ++c) {
    T mu = 0;
    for (std::size_t r = 0; r < n; ++r) mu += x(r, c);
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<T>(n);
    inv_std[c] = T(1) / std::sqrt(var + eps);
    for (std::size_t r = 0; r < n; ++r) out(r, c) = (x(r, c) - mu) * inv_std[c];
  }
  const std::size_t ia = a.id;
  return a.tape->record(std::move(out), {ia}, [ia, inv_std = std::move(inv_std)](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_mut(self);
    const Tensor<T>& y = tp.value(self);
    Tensor<T>& ga = tp.grad_mut(ia);
    const std::size_t n2 = g.rows();
    const T inv_n = T(1) / static_cast<T>(n2);
    for (std::size_t c = 0; c < g.cols(); ++c) {
      T gm = 0, gy = 0;
      for (std::size_t r = 0; r < n2; ++r) {
        gm += g(r, c);
        gy += g(r, c) * y(r, c);
      }
      gm *= inv_n;
      gy *= inv_n;
      for (std::size_t r = 0; r < n2; ++r) ga(r, c) += inv_std[c] * (g(r, c) - gm - y(r, c) * gy);
    }
  });
}

template <class T>
Var<T> cosine_matrix(Var<T> a, Var<T> b, T eps) {
  require_same_tape(a, b, "cosine_matrix");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("cosine_matrix: vector lengths differ, " + av.shape_string() + " vs " + bv.shape_string());
  }
  const std::size_t n = av.rows(), m = bv.rows();
  Tensor<T> na(n, 1), nb(m, 1);
  for (std::size_t i = 0; i < n; ++i) {
    T s = 0;
    for (T v : av.row_span(i)) s += v * v;
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < m; ++j) {
    T s = 0;
    for (T v : bv.row_span(j)) s += v * v;
    nb[j] = std::sqrt(s);
  }
  Tensor<T> dots(n, m);
  view(dots).noalias() = view(av) * view(bv).transpose();
  Tensor<T> out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = dots(i, j) / (na[i] * nb[j] + eps);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(out), {ia, ib},
      [ia, ib, eps, na = std::move(na), nb = std::move(nb), dots = std::move(dots)](Tape<T>& tp, std::size_t self) {
        // c_ij = d_ij / D_ij with D_ij = |a_i||b_j| + eps.
        // dc/da_i = b_j / D - d_ij |b_j| a_i / (|a_i| D^2), symmetric for b_j.
        const Tensor<T>& g = tp.grad_mut(self);
        const std::size_t n2 = g.rows(), m2 = g.cols();
        Tensor<T> coef(n2, m2);   // g_ij / D_ij
        Tensor<T> wa(n2, 1), wb(m2, 1);
        for (std::size_t i = 0; i < n2; ++i) {
          for (std::size_t j = 0; j < m2; ++j) {
            const T den = na[i] * nb[j] + eps;
            coef(i, j) = g(i, j) / den;
            const T k = g(i, j) * dots(i, j) / (den * den);
            if (na[i] > T(0)) wa[i] += k * nb[j] / na[i];
            if (nb[j] > T(0)) wb[j] += k * na[i] / nb[j];
          }
        }
        const auto& av2 = tp.value(ia);
        const auto& bv2 = tp.value(ib);
        if (tp.requires_grad(ia)) {
          Tensor<T>& ga = tp.grad_mut(ia);
          view(ga).noalias() += view(std::as_const(coef)) * view(bv2);
          for (std::size_t i = 0; i < n2; ++i)
            for (std::size_t c = 0; c < ga.cols(); ++c) ga(i, c) -= wa[i] * av2(i, c);
        }
        if (tp.requires_grad(ib)) {
          Tensor<T>& gb = tp.grad_mut(ib);
          view(gb).noalias() += view(std::as_const(coef)).transpose() * view(av2);
          for (std::size_t j = 0; j < m2; ++j)
            for (std::size_t c = 0; c < gb.cols(); ++c) gb(j, c) -= wb[j] * bv2(j, c);
        }
      });
}

template <class T>
Var<T> kl_rows(Var<T> p, Var<T> q) {
  require_same_tape(p, q, "kl_rows");
  const auto& pv = p.value();
  const auto& qv = q.value();
  require_same_shape(pv, qv, "kl_rows");
  T total = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] > T(0)) total += pv[i] * (std::log(pv[i]) - std::log(qv[i]));
  }
  const T inv = T(1) / static_cast<T>(pv.rows());
  const std::size_t ip = p.id, iq = q.id;
  return p.tape->record(Tensor<T>::scalar(total * inv), {ip, iq}, [ip, iq, inv](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad_mut(self)[0] * inv;
    const auto& pv2 = tp.value(ip);
    const auto& qv2 = tp.value(iq);
    if (tp.requires_grad(ip)) {
      Tensor<T>& gp = tp.grad_mut(ip);
      for (std::size_t i = 0; i < pv2.size(); ++i)
        if (pv2[i] > T(0)) gp[i] += g * (std::log(pv2[i]) - std::log(qv2[i]) + T(1));
    }
    if (tp.requires_grad(iq)) {
      Tensor<T>& gq = tp.grad_mut(iq);
      for (std::size_t i = 0; i < pv2.size(); ++i)
        if (pv2[i] > T(0)) gq[i] -= g * pv2[i] / qv2[i];
    }
  });
}

#define CLG_INSTANTIATE_OPS(T)                                                   \
  template Tensor<T> matmul_values<T>(const Tensor<T>&, const Tensor<T>&);       \
  template T cosine<T>(std::span<const T>, std::span<const T>, T);               \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                     \
  template Var<T> transpose<T>(Var<T>);                                          \
  template Var<T> add<T>(Var<T>, Var<T>);                                        \
  template Var<T> sub<T>(Var<T>, Var<T>);                                        \
  template Var<T> mul<T>(Var<T>, Var<T>);                                        \
  template Var<T> scale<T>(Var<T>, T);                                           \
  template Var<T> add_scalar<T>(Var<T>, T);                                      \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                    \
  template Var<T> outer_sum<T>(Var<T>, Var<T>);                                  \
  template Var<T> relu<T>(Var<T>);                                               \
  template Var<T> elu<T>(Var<T>, T);                                             \
  template Var<T> leaky_relu<T>(Var<T>, T);                                      \
  template Var<T> sigmoid<T>(Var<T>);                                            \
  template Var<T> exp<T>(Var<T>);                                                \
  template Var<T> log<T>(Var<T>);                                                \
  template Var<T> clamp<T>(Var<T>, T, T);                                        \
  template Var<T> softmax_rows<T>(Var<T>);                                       \
  template Var<T> log_softmax_rows<T>(Var<T>);                                   \
  template Var<T> row_normalize<T>(Var<T>, T);                                   \
  template Var<T> sum<T>(Var<T>);                                                \
  template Var<T> mean<T>(Var<T>);                                               \
  template Var<T> mean_rows<T>(Var<T>);                                          \
  template Var<T> sum_cols<T>(Var<T>);                                           \
  template Var<T> diag<T>(Var<T>);                                               \
  template Var<T> pick<T>(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                       \
  template Var<T> concat_rows<T>(std::span<const Var<T>>);                       \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);               \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);               \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::size_t>);          \
  template Var<T> reshape<T>(Var<T>, std::size_t, std::size_t);                  \
  template Var<T> standardize_cols<T>(Var<T>, T);                                \
  template Var<T> cosine_matrix<T>(Var<T>, Var<T>, T);                           \
  template Var<T> kl_rows<T>(Var<T>, Var<T>);

CLG_INSTANTIATE_OPS(float)
CLG_INSTANTIATE_OPS(double)

}  // namespace clg::nk
