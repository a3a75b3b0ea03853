#include <gtest/gtest.h>

#include <set>

#include "acss/sensing.hpp"

using namespace acss;

TEST(DrawMatrix, ShapeAndReproducibility) {
  const RealMatrix a = draw_matrix({20, 50, MatrixDistribution::gaussian_standard, 9});
  const RealMatrix b = draw_matrix({20, 50, MatrixDistribution::gaussian_standard, 9});
  EXPECT_EQ(a.rows(), 20);
  EXPECT_EQ(a.cols(), 50);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, draw_matrix({20, 50, MatrixDistribution::gaussian_standard, 10}));
}

TEST(DrawMatrix, GaussianMoments) {
  const RealMatrix a = draw_matrix({200, 1000, MatrixDistribution::gaussian_standard, 1});
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(DrawMatrix, BernoulliSigns) {
  const RealMatrix a = draw_matrix({100, 1000, MatrixDistribution::bernoulli_pm1, 1});
  EXPECT_TRUE((a.array().abs() == 1.0).all());
  EXPECT_NEAR(a.mean(), 0.0, 0.01);
}

TEST(DrawMatrix, RejectsMoreRowsThanColumns) {
  try {
    draw_matrix({11, 10, MatrixDistribution::gaussian_standard, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::sub_nyquist_violation);
  }
  EXPECT_THROW(draw_matrix({0, 10, MatrixDistribution::gaussian_standard, 1}), Error);
}

TEST(CausalBlock, StructureAndPrefixStability) {
  const RealMatrix m2 = draw_causal_block_matrix(2, 3, 5, MatrixDistribution::gaussian_standard, 4);
  const RealMatrix m3 = draw_causal_block_matrix(3, 3, 5, MatrixDistribution::gaussian_standard, 4);
  EXPECT_EQ(m3.rows(), 9);
  EXPECT_EQ(m3.cols(), 15);
  EXPECT_EQ(m3.topLeftCorner(6, 10), m2);
  EXPECT_TRUE((m3.block(0, 5, 3, 10).array() == 0).all());
  EXPECT_TRUE((m3.block(6, 0, 3, 10).array() == 0).all());
}

TEST(SplitRows, TailAssignment) {
  const RowSplit s = split_rows(10, {3, SplitAssignment::tail_rows, 0});
  EXPECT_EQ(s.training, (std::vector<Index>{0, 1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(s.testing, (std::vector<Index>{7, 8, 9}));
}

TEST(SplitRows, RandomAssignmentPartitions) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RowSplit s = split_rows(50, {12, SplitAssignment::random_rows, seed});
    EXPECT_EQ(s.testing.size(), 12u);
    EXPECT_EQ(s.training.size(), 38u);
    std::set<Index> all(s.training.begin(), s.training.end());
    all.insert(s.testing.begin(), s.testing.end());
    EXPECT_EQ(all.size(), 50u);
    EXPECT_TRUE(std::is_sorted(s.testing.begin(), s.testing.end()));
  }
  EXPECT_EQ(split_rows(50, {12, SplitAssignment::random_rows, 3}).testing,
            split_rows(50, {12, SplitAssignment::random_rows, 3}).testing);
}

TEST(SplitRows, RejectsDegenerateSplits) {
  for (Index v : {Index{0}, Index{10}, Index{11}, Index{-1}}) {
    try {
      split_rows(10, {v, SplitAssignment::tail_rows, 0});
      FAIL() << "accepted v = " << v;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::invalid_split);
    }
  }
}

TEST(Acquire, NoiselessMeasurementsAreLinear) {
  TimeSeries x{RealVector::LinSpaced(30, -1, 2), 1.0, 0.0};
  const RealMatrix phi = draw_matrix({8, 30, MatrixDistribution::gaussian_standard, 1});
  const RealMatrix psi = draw_matrix({4, 30, MatrixDistribution::gaussian_standard, 2});
  const MeasurementSet ms = acquire(x, phi, psi, 0.0, 5);
  EXPECT_LT((ms.training.real() - phi * x.samples).norm(), 1e-12);
  EXPECT_EQ(ms.training.imag().norm(), 0.0);
  EXPECT_LT((ms.testing.real() - psi * x.samples).norm(), 1e-12);
  EXPECT_EQ(ms.total_size(), 12);
  EXPECT_EQ(ms.spectrum_length(), 30);
}

TEST(Acquire, NoiseHasPerQuadratureSigma) {
  const ComplexVector n = draw_complex_noise(200000, 2.0, 3);
  EXPECT_NEAR(std::sqrt(n.real().squaredNorm() / double(n.size())), 2.0, 0.02);
  EXPECT_NEAR(std::sqrt(n.imag().squaredNorm() / double(n.size())), 2.0, 0.02);
  // E|n| = sqrt(pi/2) sigma for circular Gaussian noise.
  EXPECT_NEAR(n.cwiseAbs().mean(), std::sqrt(kPi / 2) * 2.0, 0.02);
}

TEST(Acquire, RejectsMismatchedLengths) {
  TimeSeries x{RealVector::Ones(10), 1.0, 0.0};
  const RealMatrix phi = draw_matrix({4, 12, MatrixDistribution::gaussian_standard, 1});
  EXPECT_THROW(acquire(x, phi, phi, 0.0, 1), Error);
}

TEST(FourierDictionary, MatchesDenseOperator) {
  const Index n = 64;
  const RealMatrix phi = draw_matrix({20, n, MatrixDistribution::gaussian_standard, 8});
  const ComplexMatrix A = sensing_dictionary(phi, n);
  const FourierDictionary dict(phi);
  for (Index j : {Index{0}, Index{1}, Index{31}, Index{63}}) EXPECT_LT((dict.column(j) - A.col(j)).norm(), 1e-12);
  ComplexVector g(20);
  Rng rng(1);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < 20; ++i) g[i] = Complex(normal(rng), normal(rng));
  EXPECT_LT((dict.correlate(g) - A.adjoint() * g).norm(), 1e-12 * g.norm());
}

TEST(FourierDictionary, AppliesInverseDft) {
  // A X = phi F^{-1} X: a real signal measured directly must match.
  const Index n = 40;
  Rng rng(2);
  std::normal_distribution<double> normal;
  RealVector x(n);
  for (Index i = 0; i < n; ++i) x[i] = normal(rng);
  const RealMatrix phi = draw_matrix({10, n, MatrixDistribution::gaussian_standard, 3});
  const ComplexMatrix A = sensing_dictionary(phi, n);
  EXPECT_LT((A * fft_forward(x) - (phi * x).cast<Complex>()).norm(), 1e-10);
}
