#include <cmath>

#include <gtest/gtest.h>

#include "usbf/geometry.hpp"
#include "usbf/scan.hpp"

using namespace usbf;

TEST(ElementPositions, ThreeElementsHalfWavelength) {
  ProbeGeometry g;
  g.num_elements = 3;
  g.pitch = g.wavelength() / 2;
  const auto p = element_positions(g);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_DOUBLE_EQ(p[0], -g.wavelength() / 2);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_DOUBLE_EQ(p[2], g.wavelength() / 2);
}

TEST(ElementPositions, TwoElementsUnitPitch) {
  ProbeGeometry g;
  g.num_elements = 2;
  g.pitch = 1.0;
  g.center_frequency = 1.0;
  g.sampling_frequency = 10.0;
  const auto p = element_positions(g);
  EXPECT_EQ(p[0], -0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(ElementPositions, SixtyFourElements) {
  ProbeGeometry g;
  g.num_elements = 64;
  const auto p = element_positions(g);
  EXPECT_NEAR(p[0], -8.064e-3, 1e-15);
  EXPECT_NEAR(p[63], 8.064e-3, 1e-15);
}

TEST(ElementPositions, ExactAntisymmetry) {
  for (int M = 2; M <= 65; ++M) {
    ProbeGeometry g;
    g.num_elements = M;
    g.pitch = 0.37e-3;
    const auto p = element_positions(g);
    for (int m = 0; m < M; ++m) EXPECT_EQ(p[m] + p[M - 1 - m], 0.0);
  }
}

TEST(ProbeGeometry, RejectsInvalid) {
  ProbeGeometry g;
  g.num_elements = 1;
  EXPECT_THROW(g.validate(), Error);
  g = ProbeGeometry{};
  g.sampling_frequency = 2 * g.center_frequency;
  EXPECT_THROW(g.validate(), Error);
  g = ProbeGeometry{};
  g.pitch = 0.0;
  EXPECT_THROW(g.validate(), Error);
}

TEST(SteeringVector, Broadside) {
  const CVector a = steering_vector(0.0, 4);
  for (int m = 0; m < 4; ++m) EXPECT_EQ(a(m), cplx(1.0, 0.0));
}

TEST(SteeringVector, Endfire) {
  const CVector a = steering_vector(kPi / 2, 2);
  EXPECT_EQ(a(0), cplx(1.0, 0.0));
  EXPECT_NEAR(std::abs(a(1) - cplx(-1.0, 0.0)), 0.0, 1e-15);
}

TEST(SteeringVector, ThirtyDegrees) {
  const CVector a = steering_vector(kPi / 6, 2);
  EXPECT_NEAR(std::abs(a(1) - cplx(0.0, -1.0)), 0.0, 1e-15);
}

TEST(SteeringVector, PitchScalesPhase) {
  // A full-wavelength pitch doubles the per-element phase step.
  const CVector a = steering_vector(0.2, 5, 1.0);
  for (int m = 0; m < 5; ++m)
    EXPECT_NEAR(std::abs(a(m) - std::polar(1.0, -2.0 * kPi * m * std::sin(0.2))), 0.0, 1e-13);
}

TEST(SteeringVector, RejectsBeyondEndfire) { EXPECT_THROW(steering_vector(2.0, 4), Error); }

TEST(SteeringMatrix, SingleBroadsideColumn) {
  const std::vector<double> angles{0.0};
  const CMatrix A = steering_matrix(angles, 3);
  ASSERT_EQ(A.rows(), 3);
  ASSERT_EQ(A.cols(), 1);
  EXPECT_EQ(A, CMatrix::Ones(3, 1));
}

TEST(SteeringMatrix, TwoColumns) {
  const std::vector<double> angles{0.0, kPi / 2};
  const CMatrix A = steering_matrix(angles, 2);
  EXPECT_EQ(A(0, 0), cplx(1.0));
  EXPECT_EQ(A(1, 0), cplx(1.0));
  EXPECT_EQ(A(0, 1), cplx(1.0));
  EXPECT_NEAR(std::abs(A(1, 1) + 1.0), 0.0, 1e-15);
}

TEST(SteeringMatrix, UnitModulusAndNorm) {
  const auto angles = uniform_angles(41, kPi / 6);
  const CMatrix A = steering_matrix(angles, 32);
  ASSERT_EQ(A.cols(), 41);
  for (int k = 0; k < A.cols(); ++k) {
    EXPECT_EQ(A(0, k), cplx(1.0, 0.0));
    EXPECT_NEAR(A.col(k).squaredNorm(), 32.0, 1e-12);
    for (int m = 0; m < A.rows(); ++m) EXPECT_NEAR(std::abs(A(m, k)), 1.0, 1e-14);
  }
  EXPECT_NEAR(angles.front(), -kPi / 6, 1e-15);
  EXPECT_NEAR(angles.back(), kPi / 6, 1e-15);
}

TEST(Butler, ScalarCase) {
  const CMatrix B = butler_matrix(1);
  EXPECT_EQ(B(0, 0), cplx(1.0, 0.0));
}

TEST(Butler, UnitaryUpToSixtyFour) {
  for (int M = 1; M <= 64; ++M) {
    const CMatrix B = butler_matrix(M);
    const double err = (B * B.adjoint() - CMatrix::Identity(M, M)).norm();
    EXPECT_LT(err, 1e-10) << "M=" << M;
  }
  const CMatrix B2 = butler_matrix(2);
  EXPECT_LT((B2 * B2.adjoint() - CMatrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(Butler, EqualModulus) {
  const CMatrix B = butler_matrix(8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(std::abs(B(i, j)), 1.0 / std::sqrt(8.0), 1e-15);
}

TEST(Butler, LowestOrderBeams) {
  // Wrapped spatial frequency |m - 1/2|: rows 0 and 1 are the two closest to zero.
  EXPECT_EQ(lowest_order_beams(8, 2), (std::vector<int>{0, 1}));
  const auto beams = lowest_order_beams(64, 33);
  EXPECT_EQ(beams.size(), 33u);
  EXPECT_TRUE(std::is_sorted(beams.begin(), beams.end()));
  EXPECT_THROW(lowest_order_beams(4, 5), Error);
}

TEST(Decimation, IdentityWhenFactorOne) {
  EXPECT_EQ(decimation_matrix(4, 4), RMatrix::Identity(4, 4));
}

TEST(Decimation, FactorTwo) {
  EXPECT_EQ(decimation_indices(4, 2), (std::vector<int>{0, 2}));
  const RMatrix D = decimation_matrix(4, 2);
  EXPECT_EQ(D(0, 0), 1.0);
  EXPECT_EQ(D(2, 1), 1.0);
  EXPECT_EQ(D.sum(), 2.0);
}

TEST(Decimation, FactorFive) {
  const auto idx = decimation_indices(260, 52);
  EXPECT_EQ(idx.size(), 52u);
  for (int i = 0; i < 52; ++i) EXPECT_EQ(idx[i], 5 * i);
}

TEST(Decimation, RejectsNonDivisible) {
  EXPECT_THROW(decimation_matrix(64, 13), Error);
  EXPECT_THROW(decimation_matrix(4, 0), Error);
  EXPECT_THROW(decimation_matrix(4, 8), Error);
}

TEST(Decimation, ColumnsSelectIncreasingSingleEntries) {
  const RMatrix D = decimation_matrix(60, 12);
  EXPECT_EQ(D.transpose() * D, RMatrix::Identity(12, 12));
  int last = -1;
  for (int i = 0; i < D.cols(); ++i) {
    EXPECT_EQ(D.col(i).sum(), 1.0);
    Eigen::Index row;
    D.col(i).maxCoeff(&row);
    EXPECT_GT(row, last);
    last = static_cast<int>(row);
  }
}

TEST(SteeringSet, BeamspacedColumnsMatchDecimation) {
  const auto angles = uniform_angles(20, 0.3);
  const auto s = SteeringSet::make(angles, 16, 4, 0.5, true);
  const CMatrix lhs = s.A_bs.adjoint();
  const CMatrix rhs = s.D.cast<cplx>().transpose() * s.A.adjoint();
  EXPECT_EQ(lhs, rhs);
  ASSERT_TRUE(s.B.has_value());
  EXPECT_LT((*s.B * s.B->adjoint() - CMatrix::Identity(16, 16)).norm(), 1e-10);
}

TEST(ScanPlan, AngleModeGeometry) {
  const auto scan = ScanPlan::uniform_angle(5, 0.2, 0.05, 0.07, 0.06);
  const Point2 q = scan.point(4, 0.06);
  EXPECT_NEAR(q.x, 0.06 * std::sin(0.2), 1e-15);
  EXPECT_NEAR(q.z, 0.06 * std::cos(0.2), 1e-15);
  EXPECT_EQ(scan.angle(4, 0.01), 0.2);
}

TEST(ScanPlan, LateralModeAngleMapping) {
  const auto scan = ScanPlan::uniform_lateral(3, 0.01, 0.05, 0.07, 0.06);
  EXPECT_NEAR(scan.angle(2, 0.05), std::atan(0.01 / 0.05), 1e-15);
  EXPECT_EQ(scan.point(0, 0.055).x, -0.01);
}

TEST(ScanPlan, RejectsBadPlans) {
  ScanPlan s = ScanPlan::uniform_angle(3, 0.1, 0.05, 0.07, 0.06);
  s.lines = {0.1, 0.0, 0.2};
  EXPECT_THROW(s.validate(), Error);
  s = ScanPlan::uniform_angle(3, 0.1, 0.07, 0.05, 0.06);
  EXPECT_THROW(s.validate(), Error);
}

TEST(SampleGrid, DepthSampleMapping) {
  ProbeGeometry g;
  const auto scan = ScanPlan::uniform_angle(3, 0.1, 0.05, 0.06, 0.055);
  const auto grid = SampleGrid::make(scan, g);
  EXPECT_EQ(grid.first_sample, std::lround(2 * 0.05 / 1540.0 * 100e6));
  EXPECT_EQ(grid.num_samples, static_cast<int>(std::ceil(0.01 * 2 * 100e6 / 1540.0)));
  EXPECT_EQ(grid.nearest(grid.depth(17)), 17);
}
