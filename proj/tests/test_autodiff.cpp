#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "seqgeo/autodiff.hpp"
#include "seqgeo/error.hpp"
#include "test_util.hpp"

namespace seqgeo::ad {
namespace {

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Reduces an op output to a scalar through fixed random row/column weights,
// so every output entry contributes with a distinct coefficient.
Var probe_scalar(Tape& tape, Var out, const Matrix& left, const Matrix& right) {
  return sum_all(matmul(matmul(tape.constant(left), out), tape.constant(right)));
}

struct FdCheck {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  Builder build;
  double input_scale = 1.0;
};

double worst_relative_error(const FdCheck& check, std::uint64_t seed, int probes) {
  Rng rng(seed);
  std::vector<Matrix> inputs;
  for (auto [r, c] : check.shapes) inputs.push_back(testing::random_matrix(r, c, rng, check.input_scale));
  Matrix left, right;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& m : inputs) vars.push_back(tape.constant(m));
    const Var out = check.build(tape, vars);
    left = testing::random_matrix(1, out.rows(), rng);
    right = testing::random_matrix(out.cols(), 1, rng);
  }
  auto evaluate = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& m : inputs) vars.push_back(tape.constant(m));
    return probe_scalar(tape, check.build(tape, vars), left, right).value()(0, 0);
  };
  Tape tape;
  std::vector<Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.leaf(m));
  const Var loss = probe_scalar(tape, check.build(tape, vars), left, right);
  const std::vector<Matrix> grads = tape.grad(loss, vars);

  double worst = 0.0;
  const double h = 1e-5;
  for (int p = 0; p < probes; ++p) {
    const std::size_t which = rng.below(inputs.size());
    const std::size_t entry = rng.below(inputs[which].size());
    double& x = inputs[which].data()[entry];
    const double saved = x;
    x = saved + h;
    const double up = evaluate();
    x = saved - h;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, testing::relative_error(grads[which].data()[entry], numeric, 1e-4));
  }
  return worst;
}

void expect_gradients_match(const FdCheck& check) {
  // 10 random instances x 5 probes.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    EXPECT_LT(worst_relative_error(check, seed, 5), 1e-6) << "seed " << seed;
  }
}

const std::vector<std::uint8_t> kKeep{1, 0, 1, 1, 0};

TEST(GradCheck, Matmul) { expect_gradients_match({{{4, 3}, {3, 5}}, [](Tape&, auto& v) { return matmul(v[0], v[1]); }}); }
TEST(GradCheck, Transpose) { expect_gradients_match({{{4, 3}}, [](Tape&, auto& v) { return transpose(v[0]); }}); }
TEST(GradCheck, Add) { expect_gradients_match({{{4, 3}, {4, 3}}, [](Tape&, auto& v) { return add(v[0], v[1]); }}); }
TEST(GradCheck, Sub) { expect_gradients_match({{{4, 3}, {4, 3}}, [](Tape&, auto& v) { return sub(v[0], v[1]); }}); }
TEST(GradCheck, AddRow) { expect_gradients_match({{{4, 3}, {1, 3}}, [](Tape&, auto& v) { return add_row(v[0], v[1]); }}); }
TEST(GradCheck, Scale) { expect_gradients_match({{{4, 3}}, [](Tape&, auto& v) { return scale(v[0], -1.7); }}); }
TEST(GradCheck, ConcatCols) {
  expect_gradients_match({{{4, 3}, {4, 2}, {4, 1}}, [](Tape&, auto& v) { return concat_cols(v); }});
}
TEST(GradCheck, StackRows) {
  expect_gradients_match({{{1, 3}, {1, 3}, {1, 3}}, [](Tape&, auto& v) { return stack_rows(v); }});
}
TEST(GradCheck, MeanRows) { expect_gradients_match({{{5, 3}}, [](Tape&, auto& v) { return mean_rows(v[0]); }}); }
TEST(GradCheck, MaskedMeanRows) {
  expect_gradients_match({{{5, 3}}, [](Tape&, auto& v) { return masked_mean_rows(v[0], kKeep); }});
}
TEST(GradCheck, SoftmaxRows) {
  expect_gradients_match({{{4, 5}}, [](Tape&, auto& v) { return softmax_rows(v[0]); }});
}
TEST(GradCheck, MaskedSoftmaxRows) {
  expect_gradients_match({{{4, 5}}, [](Tape&, auto& v) { return masked_softmax_rows(v[0], kKeep); }});
}
TEST(GradCheck, ZeroRows) {
  expect_gradients_match({{{5, 3}}, [](Tape&, auto& v) { return zero_rows(v[0], kKeep); }});
}
TEST(GradCheck, L2NormalizeRows) {
  expect_gradients_match({{{4, 6}}, [](Tape&, auto& v) { return l2_normalize_rows(v[0]); }});
}
TEST(GradCheck, PairwiseDistances) {
  expect_gradients_match({{{4, 6}, {5, 6}}, [](Tape&, auto& v) { return pairwise_distances(v[0], v[1]); }});
}
TEST(GradCheck, SumAll) {
  expect_gradients_match({{{4, 3}}, [](Tape&, auto& v) { return stack_rows(std::vector<Var>{sum_all(v[0])}); }});
}
TEST(GradCheck, ExhaustiveTriplet) {
  expect_gradients_match({{{5, 4}, {5, 4}},
                          [](Tape&, auto& v) {
                            const Var d = pairwise_distances(l2_normalize_rows(v[0]), l2_normalize_rows(v[1]));
                            return exhaustive_soft_margin_triplet(d, 10.0);
                          },
                          1.0});
}

TEST(Grad, SumOfAxClosedForm) {
  Rng rng(4);
  const Matrix a = testing::random_matrix(6, 4, rng);
  Tape tape;
  const Var x = tape.leaf(testing::random_matrix(4, 1, rng));
  const Var loss = sum_all(matmul(tape.constant(a), x));
  const Matrix g = tape.grad(loss, std::vector<Var>{x})[0];
  for (std::size_t j = 0; j < 4; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < 6; ++i) col += a(i, j);
    EXPECT_NEAR(g(j, 0), col, 1e-12);
  }
}

TEST(Grad, ConstantAndUnreachableGetZero) {
  Tape tape;
  const Var x = tape.leaf(Matrix{{1.0, 2.0}});
  const Var unused = tape.leaf(Matrix{{3.0}, {4.0}});
  const Var c = tape.constant(Matrix{{5.0, 6.0}});
  const Var loss = sum_all(add(x, c));
  const auto grads = tape.grad(loss, std::vector<Var>{unused, c});
  EXPECT_EQ(grads[0], Matrix(2, 1));
  EXPECT_EQ(grads[1], Matrix(1, 2));

  Tape only_constants;
  const Var k = only_constants.constant(Matrix{{1.0}});
  EXPECT_EQ(only_constants.grad(sum_all(k), std::vector<Var>{k})[0], Matrix(1, 1));
}

TEST(Grad, NonScalarOutputRejected) {
  Tape tape;
  const Var x = tape.leaf(Matrix{{1.0, 2.0}});
  EXPECT_THROW(tape.grad(x, std::vector<Var>{x}), DomainError);
}

TEST(Grad, ReusedNodeAccumulates) {
  Tape tape;
  const Var x = tape.leaf(Matrix{{3.0}});
  const Var loss = sum_all(matmul(x, x));
  EXPECT_DOUBLE_EQ(tape.grad(loss, std::vector<Var>{x})[0](0, 0), 6.0);
}

TEST(Grad, DeterministicAcrossRuns) {
  auto run = [] {
    Rng rng(12);
    Tape tape;
    const Var a = tape.leaf(testing::random_matrix(5, 4, rng));
    const Var b = tape.leaf(testing::random_matrix(5, 4, rng));
    const Var d = pairwise_distances(l2_normalize_rows(a), l2_normalize_rows(b));
    return tape.grad(exhaustive_soft_margin_triplet(d, 10.0), std::vector<Var>{a, b});
  };
  EXPECT_EQ(run(), run());
}

TEST(Ops, MaskedSoftmaxGivesExactZeros) {
  Tape tape;
  const Var s = masked_softmax_rows(tape.constant(Matrix{{1.0, 2.0, 3.0, 4.0, 5.0}}), kKeep);
  EXPECT_EQ(s.value()(0, 1), 0.0);
  EXPECT_EQ(s.value()(0, 4), 0.0);
  EXPECT_NEAR(s.value()(0, 0) + s.value()(0, 2) + s.value()(0, 3), 1.0, 1e-12);
}

TEST(Ops, L2NormalizeZeroRowIsDegenerate) {
  Tape tape;
  EXPECT_THROW(l2_normalize_rows(tape.constant(Matrix{{0.0, 0.0}})), DomainError);
}

TEST(Ops, TripletNeedsTwoPairs) {
  Tape tape;
  try {
    exhaustive_soft_margin_triplet(tape.constant(Matrix{{0.0}}), 10.0);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("no negatives available"), std::string::npos);
  }
}

TEST(Softplus, ClosedForms) {
  EXPECT_NEAR(softplus(0.0), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(softplus(-20.0), 2.0611536203143807e-9, 1e-22);
  EXPECT_NEAR(softplus(2.0), 2.1269280110429725, 1e-14);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1.0);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
}

}  // namespace
}  // namespace seqgeo::ad
