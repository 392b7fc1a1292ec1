#include "efflex/numerics.hpp"

#include "efflex/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace efflex {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DomainError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

} // namespace

// Zero entries of `a` are skipped: adjacency-like left operands are mostly
// empty. Summation order per output cell is fixed, so results are
// deterministic.
Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DomainError("matmul shape mismatch: " + shape(a) + " * " + shape(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw DomainError("matmul_nt shape mismatch: " + shape(a) + " * " + shape(b) + "^T");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw DomainError("matmul_tn shape mismatch: " + shape(a) + "^T * " + shape(b));
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix leaky_relu(const Matrix& x, double slope) {
  Matrix y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : slope * v;
  return y;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto out = y.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (double& v : out) v /= sum;
  }
  return y;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double cosine_flat(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw DomainError("cosine_flat shape mismatch: " + shape(a) + " vs " + shape(b));
  const double na = frobenius_norm(a);
  const double nb = frobenius_norm(b);
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_flat of zero-norm matrix");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a.data()[i] * b.data()[i];
  return dot / (na * nb);
}

Matrix cosine_flat_grad_b(const Matrix& a, const Matrix& b) {
  const double c = cosine_flat(a, b);
  const double na = frobenius_norm(a);
  const double nb = frobenius_norm(b);
  Matrix g(b.rows(), b.cols());
  for (std::size_t i = 0; i < b.size(); ++i)
    g.data()[i] = a.data()[i] / (na * nb) - c * b.data()[i] / (nb * nb);
  return g;
}

// splitmix64
Rng::Rng(std::uint64_t seed) : state_(seed) {}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

void AdamWState::step(std::span<ParamTensor* const> params, double lr) {
  if (m_.empty()) {
    for (const ParamTensor* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw DomainError("AdamW parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t idx = 0; idx < params.size(); ++idx) {
    ParamTensor& p = *params[idx];
    if (!p.value.same_shape(m_[idx]) || !p.grad.same_shape(p.value))
      throw DomainError("AdamW shape mismatch for parameter " + p.name);
    auto val = p.value.data();
    auto grad = p.grad.data();
    auto m = m_[idx].data();
    auto v = v_[idx].data();
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= lr * cfg_.weight_decay * val[i];
      val[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw DomainError("base_lr must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must be in (0, 1]");
  if (step_epochs < 1) throw DomainError("step_epochs must be >= 1");
}

double lr_at(const LrSchedule& schedule, std::size_t epoch) {
  const auto decays = epoch / schedule.step_epochs;
  double lr = schedule.base_lr;
  for (std::size_t i = 0; i < decays; ++i) lr *= schedule.gamma;
  return lr;
}

} // namespace efflex
