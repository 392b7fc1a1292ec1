#include "efflex/tape.hpp"

#include "efflex/errors.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace efflex {

Tape::Var Tape::push(Matrix value, std::function<void(Tape&)> backward) {
  nodes_.push_back(Node{std::move(value), Matrix{}, std::move(backward)});
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_of(Var v) {
  Node& n = nodes_[v.index];
  if (!n.grad.same_shape(n.value)) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Tape::Var Tape::parameter(ParamTensor& param) {
  ParamTensor* p = &param;
  const std::size_t self = nodes_.size();
  return push(param.value, [p, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    auto dst = p->grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g.data()[i];
  });
}

Tape::Var Tape::matmul(Var a, Var b) {
  const std::size_t self = nodes_.size();
  return push(efflex::matmul(value(a), value(b)), [a, b, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix ga = efflex::matmul_nt(g, t.value(b));
    Matrix gb = efflex::matmul_tn(t.value(a), g);
    auto da = t.grad_of(a).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += ga.data()[i];
    auto db = t.grad_of(b).data();
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += gb.data()[i];
  });
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  const std::size_t self = nodes_.size();
  return push(efflex::matmul_nt(value(a), value(b)), [a, b, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    // C = A B^T: dA = G B, dB = G^T A
    Matrix ga = efflex::matmul(g, t.value(b));
    Matrix gb = efflex::matmul_tn(g, t.value(a));
    auto da = t.grad_of(a).data();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += ga.data()[i];
    auto db = t.grad_of(b).data();
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += gb.data()[i];
  });
}

Tape::Var Tape::add_row(Var x, Var bias) {
  const Matrix& xv = value(x);
  const Matrix& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) throw DomainError("add_row bias shape mismatch");
  Matrix y = xv;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
  }
  const std::size_t self = nodes_.size();
  return push(std::move(y), [x, bias, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    auto dx = t.grad_of(x).data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g.data()[i];
    Matrix& db = t.grad_of(bias);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
  });
}

Tape::Var Tape::leaky_relu(Var x, double slope) {
  const std::size_t self = nodes_.size();
  return push(efflex::leaky_relu(value(x), slope), [x, slope, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& xv = t.value(x);
    auto dx = t.grad_of(x).data();
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += xv.data()[i] > 0.0 ? g.data()[i] : slope * g.data()[i];
  });
}

Tape::Var Tape::softmax_rows(Var x) {
  const std::size_t self = nodes_.size();
  return push(efflex::softmax_rows(value(x)), [x, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Matrix& dx = t.grad_of(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Tape::Var Tape::cosine_flat(Var a, Var b) {
  const double c = efflex::cosine_flat(value(a), value(b));
  const std::size_t self = nodes_.size();
  return push(Matrix(1, 1, c), [a, b, c, self](Tape& t) {
    const double g = t.nodes_[self].grad(0, 0);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    const double na = frobenius_norm(av);
    const double nb = frobenius_norm(bv);
    auto da = t.grad_of(a).data();
    auto db = t.grad_of(b).data();
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double ai = av.data()[i];
      const double bi = bv.data()[i];
      da[i] += g * (bi / (na * nb) - c * ai / (na * na));
      db[i] += g * (ai / (na * nb) - c * bi / (nb * nb));
    }
  });
}

Tape::Var Tape::affine(Var x, double scale, double shift) {
  Matrix y = value(x);
  for (double& v : y.data()) v = scale * v + shift;
  const std::size_t self = nodes_.size();
  return push(std::move(y), [x, scale, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    auto dx = t.grad_of(x).data();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += scale * g.data()[i];
  });
}

Tape::Var Tape::mean_abs_diff(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (!av.same_shape(bv)) throw DomainError("mean_abs_diff shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av.data()[i] - bv.data()[i]);
  const double count = static_cast<double>(av.size());
  const std::size_t self = nodes_.size();
  return push(Matrix(1, 1, s / count), [a, b, count, self](Tape& t) {
    const double g = t.nodes_[self].grad(0, 0) / count;
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    auto da = t.grad_of(a).data();
    auto db = t.grad_of(b).data();
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av.data()[i] - bv.data()[i];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      da[i] += g * sgn;
      db[i] -= g * sgn;
    }
  });
}

Tape::Var Tape::mean_sq_diff(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (!av.same_shape(bv)) throw DomainError("mean_sq_diff shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av.data()[i] - bv.data()[i];
    s += d * d;
  }
  const double count = static_cast<double>(av.size());
  const std::size_t self = nodes_.size();
  return push(Matrix(1, 1, s / count), [a, b, count, self](Tape& t) {
    const double g = t.nodes_[self].grad(0, 0) * 2.0 / count;
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    auto da = t.grad_of(a).data();
    auto db = t.grad_of(b).data();
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = av.data()[i] - bv.data()[i];
      da[i] += g * d;
      db[i] -= g * d;
    }
  });
}

Tape::Var Tape::weighted_sum(Var w, std::span<const Matrix> mats) {
  const Matrix& wv = value(w);
  if (wv.rows() != 1 || wv.cols() != mats.size() || mats.empty())
    throw DomainError("weighted_sum: weight vector does not match matrix count");
  Matrix y(mats[0].rows(), mats[0].cols());
  for (std::size_t m = 0; m < mats.size(); ++m) {
    if (!mats[m].same_shape(y)) throw DomainError("weighted_sum: matrices differ in shape");
    const double wm = wv(0, m);
    for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += wm * mats[m].data()[i];
  }
  auto held = std::make_shared<std::vector<Matrix>>(mats.begin(), mats.end());
  const std::size_t self = nodes_.size();
  return push(std::move(y), [w, held, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& dw = t.grad_of(w);
    for (std::size_t m = 0; m < held->size(); ++m) {
      const Matrix& sm = (*held)[m];
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g.data()[i] * sm.data()[i];
      dw(0, m) += dot;
    }
  });
}

Tape::Var Tape::minmax_masked(Var x, const Matrix& mask) {
  const Matrix& xv = value(x);
  if (!xv.same_shape(mask)) throw DomainError("minmax_masked shape mismatch");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t arg_lo = 0, arg_hi = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    const double v = xv.data()[i];
    if (v < lo) lo = v, arg_lo = i;
    if (v > hi) hi = v, arg_hi = i;
  }
  Matrix y(xv.rows(), xv.cols());
  const double range = hi - lo;
  const bool constant = !(range > 0.0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    y.data()[i] = constant ? 1.0 : (xv.data()[i] - lo) / range;
  }
  const std::size_t self = nodes_.size();
  return push(std::move(y), [x, mask, lo, hi, range, constant, arg_lo, arg_hi, self](Tape& t) {
    if (constant) return;
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& xv = t.value(x);
    auto dx = t.grad_of(x).data();
    double d_lo = 0.0, d_hi = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (mask.data()[i] == 0.0) continue;
      const double gi = g.data()[i];
      dx[i] += gi / range;
      d_lo += gi * (xv.data()[i] - hi) / (range * range);
      d_hi -= gi * (xv.data()[i] - lo) / (range * range);
    }
    dx[arg_lo] += d_lo;
    dx[arg_hi] += d_hi;
  });
}

Tape::Var Tape::add_identity_row_normalize(Var x) {
  const Matrix& xv = value(x);
  if (xv.rows() != xv.cols()) throw DomainError("add_identity_row_normalize needs a square matrix");
  const std::size_t n = xv.rows();
  Matrix y = xv;
  std::vector<double> sums(n);
  for (std::size_t i = 0; i < n; ++i) {
    y(i, i) += 1.0;
    double s = 0.0;
    for (double v : y.row(i)) s += v;
    sums[i] = s;
    for (double& v : y.row(i)) v /= s;
  }
  const std::size_t self = nodes_.size();
  return push(std::move(y), [x, sums = std::move(sums), self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Matrix& dx = t.grad_of(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) += (g(i, j) - dot) / sums[i];
    }
  });
}

void Tape::backward(Var out) {
  const Matrix& ov = value(out);
  if (ov.rows() != 1 || ov.cols() != 1) throw DomainError("backward needs a scalar output");
  for (auto& n : nodes_) n.grad = Matrix{};
  grad_of(out)(0, 0) = 1.0;
  for (std::size_t i = out.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.grad.same_shape(n.value)) continue;
    n.backward(*this);
  }
}

} // namespace efflex
