#include "efflex/errors.hpp"
#include "efflex/numerics.hpp"
#include "efflex/tape.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace efflex;
using namespace efflex::testing;

TEST(Matmul, Identity) {
  Rng rng(1);
  const auto a = random_matrix(rng, 4, 6);
  EXPECT_EQ(matmul(Matrix::identity(4), a), a);
  EXPECT_EQ(matmul(a, Matrix::identity(6)), a);
}

TEST(Matmul, HandCase) {
  const Matrix a{{1, 2, 3}, {4, 5, 6}};
  const Matrix b{{7, 8}, {9, 10}, {11, 12}};
  EXPECT_EQ(matmul(a, b), (Matrix{{58, 64}, {139, 154}}));
  EXPECT_EQ(matmul_nt(a, transpose(b)), (Matrix{{58, 64}, {139, 154}}));
  EXPECT_EQ(matmul_tn(transpose(a), b), (Matrix{{58, 64}, {139, 154}}));
}

TEST(Matmul, Associative) {
  Rng rng(2);
  const auto a = random_matrix(rng, 3, 5), b = random_matrix(rng, 5, 4), c = random_matrix(rng, 4, 2);
  const auto l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_NEAR(l.data()[i], r.data()[i], 1e-12);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DomainError);
}

TEST(Elementwise, LeakyReluAndSoftmax) {
  const auto y = leaky_relu(Matrix{{-1.0, 0.0, 2.0}});
  EXPECT_DOUBLE_EQ(y(0, 0), -0.01);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_EQ(y(0, 2), 2.0);
  EXPECT_EQ(leaky_relu(Matrix{{0.5, 3.0}}), (Matrix{{0.5, 3.0}}));
  const auto u = softmax_rows(Matrix{{4.0, 4.0, 4.0, 4.0}});
  for (double v : u.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto s = softmax_rows(Matrix{{0.0, std::log(2.0)}, {1000.0, 1000.0}});
  EXPECT_NEAR(s(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(1, 0), 0.5, 1e-15);
}

TEST(Cosine, SelfAndNegation) {
  Rng rng(3);
  auto x = random_matrix(rng, 5, 5);
  Matrix neg = x;
  for (double& v : neg.data()) v = -v;
  EXPECT_NEAR(cosine_flat(x, x), 1.0, 1e-15);
  EXPECT_NEAR(cosine_flat(x, neg), -1.0, 1e-15);
  EXPECT_THROW(cosine_flat(x, Matrix(5, 5)), DomainError);
}

TEST(Cosine, GradMatchesFiniteDifference) {
  Rng rng(4);
  const auto a = random_matrix(rng, 3, 4);
  auto b = random_matrix(rng, 3, 4);
  const auto fd = finite_difference(b, [&] { return cosine_flat(a, b); });
  EXPECT_LT(relative_error(cosine_flat_grad_b(a, b), fd), 1e-7);
}

namespace {

using Builder = std::function<Tape::Var(Tape&, std::vector<Tape::Var>&)>;

/// Records `build` with every tensor as a parameter, backpropagates, and
/// compares each gradient to central differences of the forward value.
double max_tape_error(std::vector<ParamTensor>& params, const Builder& build) {
  Tape tape;
  std::vector<Tape::Var> vars;
  for (auto& p : params) {
    p.zero_grad();
    vars.push_back(tape.parameter(p));
  }
  tape.backward(build(tape, vars));
  auto forward = [&] {
    Tape t;
    std::vector<Tape::Var> vs;
    for (auto& p : params) vs.push_back(t.constant(p.value));
    return t.value(build(t, vs))(0, 0);
  };
  double worst = 0.0;
  for (auto& p : params) worst = std::max(worst, relative_error(p.grad, finite_difference(p.value, forward, 1e-6)));
  return worst;
}

ParamTensor rand_param(Rng& rng, std::size_t r, std::size_t c) { return {"p", random_matrix(rng, r, c)}; }

} // namespace

class TapeGrad : public ::testing::Test {
protected:
  Rng rng{99};
  Matrix probe(std::size_t r, std::size_t c) { return random_matrix(rng, r, c); }
};

TEST_F(TapeGrad, Matmul) {
  std::vector<ParamTensor> ps{rand_param(rng, 3, 4), rand_param(rng, 4, 2)};
  const auto c = probe(3, 2);
  EXPECT_LT(max_tape_error(ps, [&](Tape& t, auto& v) { return t.cosine_flat(t.constant(c), t.matmul(v[0], v[1])); }),
            1e-6);
}

TEST_F(TapeGrad, MatmulNt) {
  std::vector<ParamTensor> ps{rand_param(rng, 3, 4), rand_param(rng, 5, 4)};
  const auto c = probe(3, 5);
  EXPECT_LT(
      max_tape_error(ps, [&](Tape& t, auto& v) { return t.cosine_flat(t.constant(c), t.matmul_nt(v[0], v[1])); }),
      1e-6);
}

TEST_F(TapeGrad, GramMatrixSelfProduct) {
  std::vector<ParamTensor> ps{rand_param(rng, 4, 3)};
  const auto c = probe(4, 4);
  EXPECT_LT(
      max_tape_error(ps, [&](Tape& t, auto& v) { return t.cosine_flat(t.constant(c), t.matmul_nt(v[0], v[0])); }),
      1e-6);
}

TEST_F(TapeGrad, AddRowAndLeakyRelu) {
  std::vector<ParamTensor> ps{rand_param(rng, 4, 3), rand_param(rng, 1, 3)};
  const auto c = probe(4, 3);
  EXPECT_LT(max_tape_error(ps,
                           [&](Tape& t, auto& v) {
                             return t.mean_sq_diff(t.constant(c), t.leaky_relu(t.add_row(v[0], v[1])));
                           }),
            1e-6);
}

TEST_F(TapeGrad, SoftmaxRowsAndAffine) {
  std::vector<ParamTensor> ps{rand_param(rng, 3, 5)};
  const auto c = probe(3, 5);
  EXPECT_LT(max_tape_error(ps,
                           [&](Tape& t, auto& v) {
                             return t.cosine_flat(t.constant(c), t.softmax_rows(t.affine(v[0], 2.5, -0.3)));
                           }),
            1e-6);
}

TEST_F(TapeGrad, MeanAbsDiff) {
  std::vector<ParamTensor> ps{rand_param(rng, 3, 3), rand_param(rng, 3, 3)};
  EXPECT_LT(max_tape_error(ps, [&](Tape& t, auto& v) { return t.mean_abs_diff(v[0], v[1]); }), 1e-6);
}

TEST_F(TapeGrad, WeightedSum) {
  std::vector<ParamTensor> ps{rand_param(rng, 1, 3)};
  const std::vector<Matrix> mats{probe(4, 4), probe(4, 4), probe(4, 4)};
  const auto c = probe(4, 4);
  EXPECT_LT(
      max_tape_error(ps, [&](Tape& t, auto& v) { return t.cosine_flat(t.constant(c), t.weighted_sum(v[0], mats)); }),
      1e-6);
}

TEST_F(TapeGrad, MinmaxMaskedAndRowNormalize) {
  std::vector<ParamTensor> ps{rand_param(rng, 5, 5)};
  Matrix mask(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) mask(i, j) = (i + 2 * j) % 3 == 0 ? 0.0 : 1.0;
  const auto c = probe(5, 5);
  EXPECT_LT(max_tape_error(ps,
                           [&](Tape& t, auto& v) {
                             return t.cosine_flat(t.constant(c),
                                                  t.add_identity_row_normalize(t.minmax_masked(v[0], mask)));
                           }),
            1e-6);
}

TEST_F(TapeGrad, ThreeLevelComposition) {
  std::vector<ParamTensor> ps{rand_param(rng, 6, 4), rand_param(rng, 4, 5), rand_param(rng, 1, 5),
                              rand_param(rng, 5, 3)};
  Matrix s(6, 6);
  for (std::size_t i = 0; i < 6; ++i) s(i, (i + 1) % 6) = s(i, (i + 3) % 6) = 0.5;
  const auto target = softmax_rows(probe(6, 6));
  EXPECT_LT(max_tape_error(ps,
                           [&](Tape& t, auto& v) {
                             auto sv = t.constant(s);
                             auto h = t.leaky_relu(t.add_row(t.matmul(sv, t.matmul(v[0], v[1])), v[2]));
                             auto out = t.matmul(sv, t.matmul(h, v[3]));
                             return t.cosine_flat(t.constant(target), t.matmul_nt(out, out));
                           }),
            1e-5);
}

TEST(MinmaxMasked, ValuesAndConstantCase) {
  Tape t;
  const Matrix mask{{1, 0}, {1, 1}};
  auto y = t.value(t.minmax_masked(t.constant(Matrix{{2, 100}, {4, 3}}), mask));
  EXPECT_EQ(y, (Matrix{{0, 0}, {1, 0.5}}));
  auto c = t.value(t.minmax_masked(t.constant(Matrix{{7, -1}, {7, 7}}), mask));
  EXPECT_EQ(c, (Matrix{{1, 0}, {1, 1}}));
}

namespace {

ParamTensor scalar_param(double v, double g) {
  ParamTensor p("p", Matrix{{v}});
  p.grad(0, 0) = g;
  return p;
}

} // namespace

TEST(AdamW, ZeroGradWithoutDecayIsNoOp) {
  AdamWState st({0.9, 0.999, 1e-8, 0.0});
  auto p = scalar_param(1.25, 0.0);
  ParamTensor* ps[] = {&p};
  for (int i = 0; i < 5; ++i) st.step(ps, 0.1);
  EXPECT_EQ(p.value(0, 0), 1.25);
}

TEST(AdamW, FirstStepByHand) {
  AdamWState st;
  auto p = scalar_param(1.0, 0.5);
  ParamTensor* ps[] = {&p};
  st.step(ps, 0.1);
  // Bias-corrected first step: mhat = 0.5, sqrt(vhat) = 0.5.
  EXPECT_NEAR(p.value(0, 0), 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
}

TEST(AdamW, DecayOnly) {
  AdamWState st;
  auto p = scalar_param(2.0, 0.0);
  ParamTensor* ps[] = {&p};
  st.step(ps, 0.1);
  EXPECT_NEAR(p.value(0, 0), 2.0 * 0.999, 1e-15);
}

TEST(AdamW, Deterministic) {
  auto run = [] {
    Rng rng(5);
    ParamTensor p("p", random_matrix(rng, 3, 3));
    AdamWState st;
    ParamTensor* ps[] = {&p};
    for (int i = 0; i < 10; ++i) {
      p.grad = random_matrix(rng, 3, 3);
      st.step(ps, 0.01);
    }
    return p.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Schedule, StepDecay) {
  LrSchedule s;
  EXPECT_EQ(lr_at(s, 0), 0.001);
  EXPECT_EQ(lr_at(s, 4), 0.001);
  EXPECT_NEAR(lr_at(s, 5), 0.0001, 1e-20);
  EXPECT_NEAR(lr_at(s, 49), 0.001 * std::pow(0.1, 9), 1e-24);
  EXPECT_THROW((LrSchedule{0.001, 0.1, 0}.validate()), DomainError);
  EXPECT_THROW((LrSchedule{-1.0, 0.1, 5}.validate()), DomainError);
}

TEST(Rng, XavierBoundsAndDeterminism) {
  Rng a(11), b(11);
  const auto wa = xavier_init(30, 50, a);
  EXPECT_EQ(wa, xavier_init(30, 50, b));
  const double bound = std::sqrt(6.0 / 80.0);
  for (double v : wa.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Rng, MomentsOfDraws) {
  Rng rng(12);
  const int n = 100000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sn / n, 0.0, 3.0 / std::sqrt(n));
  EXPECT_NEAR(sn2 / n, 1.0, 3.0 * std::sqrt(2.0 / n));
}
