#include <cmath>

#include <gtest/gtest.h>

#include "seqgeo/error.hpp"
#include "seqgeo/tensor.hpp"
#include "test_util.hpp"

namespace seqgeo {
namespace {

TEST(Matrix, IdentityTimesA) {
  Rng rng(1);
  const Matrix a = testing::random_matrix(5, 5, rng);
  EXPECT_EQ(matmul(Matrix::identity(5), a), a);
}

TEST(Matrix, MatmulMatchesLoopOracle) {
  Rng rng(2);
  const Matrix a = testing::random_matrix(7, 16, rng);
  const Matrix b = testing::random_matrix(16, 4, rng);
  const auto oracle = testing::loop_matmul(testing::to_grid(a), testing::to_grid(b));
  EXPECT_LT(testing::max_abs_diff(oracle, matmul(a, b)), 1e-12);
}

TEST(Matrix, ShapeErrorsNameBothShapes) {
  const Matrix a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("shape mismatch"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(a, Matrix(3, 2)), DomainError);
  EXPECT_THROW(add_row(a, Matrix(1, 2)), DomainError);
}

TEST(Matrix, MeanRowsOfIdenticalRows) {
  const Matrix m{{1.5, -2.0, 3.25}, {1.5, -2.0, 3.25}, {1.5, -2.0, 3.25}};
  EXPECT_EQ(mean_rows(m), (Matrix{{1.5, -2.0, 3.25}}));
}

TEST(Matrix, ConcatAndTranspose) {
  const Matrix a{{1, 2}, {3, 4}}, b{{5}, {6}};
  const Matrix parts[] = {a, b};
  EXPECT_EQ(concat_cols(parts), (Matrix{{1, 2, 5}, {3, 4, 6}}));
  EXPECT_EQ(transpose(a), (Matrix{{1, 3}, {2, 4}}));
  EXPECT_EQ(scale(a, 2.0), (Matrix{{2, 4}, {6, 8}}));
  EXPECT_EQ(add_row(a, Matrix{{10, 20}}), (Matrix{{11, 22}, {13, 24}}));
}

TEST(Softmax, EqualLogitsAreUniform) {
  const Matrix s = softmax_rows(Matrix{{2.0, 2.0, 2.0, 2.0}});
  for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, ClosedForm) {
  const Matrix s = softmax_rows(Matrix{{0.0, std::log(3.0)}});
  EXPECT_NEAR(s(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(s(0, 1), 0.75, 1e-12);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  Rng rng(3);
  const Matrix a = testing::random_matrix(6, 9, rng);
  const Matrix b = add_row(a, Matrix(1, 9, 17.5));
  const Matrix sa = softmax_rows(a), sb = softmax_rows(b);
  EXPECT_LT(max_abs_diff(sa, sb), 1e-12);
  for (std::size_t r = 0; r < sa.rows(); ++r) {
    double total = 0.0;
    for (double v : sa.row(r)) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, StableForLargeLogits) {
  const Matrix s = softmax_rows(Matrix{{1e6, -1e6, 0.0}, {-1e6, -1e6 + 1.0, -1e6}});
  EXPECT_TRUE(all_finite(s));
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
}

}  // namespace
}  // namespace seqgeo
