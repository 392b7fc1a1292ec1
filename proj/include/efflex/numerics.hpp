#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace efflex {

/// Dense row-major f64 matrix.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-recording) kernels. Shape mismatches throw DomainError.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix leaky_relu(const Matrix& x, double slope = 0.01);
/// Max-subtracted softmax of each row.
Matrix softmax_rows(const Matrix& x);
/// Cosine similarity of the flattened entries. Zero norm throws DomainError.
double cosine_flat(const Matrix& a, const Matrix& b);
/// d cosine_flat(a, b) / d b
Matrix cosine_flat_grad_b(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

/// Deterministic 64-bit generator with platform-independent derived draws.
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();

private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Rng seeded_rng(std::uint64_t seed);

/// Uniform in +-sqrt(6 / (rows + cols)).
Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng);

struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;

  ParamTensor() = default;
  ParamTensor(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moment buffers for a fixed ordered parameter list.
class AdamWState {
public:
  explicit AdamWState(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }

  /// p <- p - lr*wd*p - lr * mhat / (sqrt(vhat) + eps), bias-corrected.
  /// The parameter list must be the same (order and shapes) on every call.
  void step(std::span<ParamTensor* const> params, double lr);

private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

inline void adamw_step(std::span<ParamTensor* const> params, AdamWState& state, double lr) {
  state.step(params, lr);
}

/// Step decay: base_lr * gamma^floor(epoch / step_epochs).
struct LrSchedule {
  double base_lr = 0.001;
  double gamma = 0.1;
  std::size_t step_epochs = 5;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, std::size_t epoch);

} // namespace efflex
