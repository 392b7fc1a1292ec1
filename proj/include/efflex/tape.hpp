#pragma once

// Reverse-mode gradient tape. Each recording op stores its forward value and
// a backward rule; backward() replays the rules in reverse order.

#include "efflex/numerics.hpp"

#include <functional>
#include <span>
#include <vector>

namespace efflex {

class Tape {
public:
  /// Handle to a recorded value.
  struct Var {
    std::size_t index = 0;
  };

  Var constant(Matrix value);
  /// Reads param.value; backward() accumulates into param.grad.
  Var parameter(ParamTensor& param);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  /// x + bias broadcast over rows (bias is 1 x cols).
  Var add_row(Var x, Var bias);
  Var leaky_relu(Var x, double slope = 0.01);
  Var softmax_rows(Var x);
  /// 1x1 result.
  Var cosine_flat(Var a, Var b);
  /// scale * x + shift, elementwise.
  Var affine(Var x, double scale, double shift);
  /// 1x1 mean |a - b|.
  Var mean_abs_diff(Var a, Var b);
  /// 1x1 mean (a - b)^2.
  Var mean_sq_diff(Var a, Var b);
  /// sum_m w(0, m) * mats[m]; w is 1 x m, mats are constants.
  Var weighted_sum(Var w, std::span<const Matrix> mats);
  /// Min-max rescale of the entries where mask != 0 into [0, 1]; other
  /// entries are 0. A constant masked set maps to 1.
  Var minmax_masked(Var x, const Matrix& mask);
  /// Row-normalize (x + I).
  Var add_identity_row_normalize(Var x);

  const Matrix& value(Var v) const { return nodes_[v.index].value; }
  const Matrix& grad(Var v) const { return nodes_[v.index].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to all inputs.
  void backward(Var out);

private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&)> backward;
  };

  Var push(Matrix value, std::function<void(Tape&)> backward);
  Matrix& grad_of(Var v);

  std::vector<Node> nodes_;
};

} // namespace efflex
