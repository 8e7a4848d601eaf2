#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "usbf/acquisition.hpp"
#include "usbf/adaptive_bf.hpp"
#include "usbf/phantom.hpp"
#include "oracles.hpp"

using namespace usbf;
using usbf::testing::random_matrix;

namespace {

CMatrix random_hpd(std::mt19937_64& rng, int n) {
  const CMatrix X = random_matrix(rng, n, 2 * n);
  return X * X.adjoint() / (2.0 * n) + 0.1 * CMatrix::Identity(n, n);
}

// Toeplitz covariance of an AR(1)-like process with a phase ramp.
CMatrix toeplitz_covariance(int n, double rho, double phase) {
  CMatrix R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = std::pow(rho, std::abs(i - j)) * std::polar(1.0, phase * (i - j));
  return R;
}

}  // namespace

TEST(SmoothedCovariance, MatchesExplicitSum) {
  std::mt19937_64 rng(1);
  const int M = 12, L = 4, S = 7;
  const CMatrix Y = random_matrix(rng, M, S);
  CMatrix ref = CMatrix::Zero(L, L);
  for (int s = 0; s < S; ++s)
    for (int l = 0; l + L <= M; ++l) {
      const CVector v = Y.col(s).segment(l, L);
      ref += v * v.adjoint();
    }
  ref /= static_cast<double>((M - L + 1) * S);
  const CMatrix R = smoothed_covariance(Y, L, 0.0);
  EXPECT_LT((R - ref).norm(), 1e-12 * ref.norm());
  EXPECT_LT((R - R.adjoint()).norm(), 1e-15 * ref.norm());
  const CMatrix loaded = smoothed_covariance(Y, L, 0.25);
  const double expect = 0.25 * ref.trace().real() / L;
  EXPECT_LT((loaded - ref - expect * CMatrix::Identity(L, L)).norm(), 1e-12 * ref.norm());
}

TEST(SmoothedCovariance, ConvergesToTrueCovariance) {
  std::mt19937_64 rng(2);
  const int M = 8, L = 4, S = 20000;
  const CMatrix R = toeplitz_covariance(M, 0.7, 0.4);
  const CMatrix C = R.llt().matrixL();
  const CMatrix W = random_matrix(rng, M, S) / std::sqrt(2.0);
  const CMatrix Y = C * W;
  const CMatrix est_full = smoothed_covariance(Y, M, 0.0);
  EXPECT_LT((est_full - R).norm() / R.norm(), 0.05);
  // Stationary data: every subaperture sees the same L x L block.
  const CMatrix est_sub = smoothed_covariance(Y, L, 0.0);
  const CMatrix RL = R.topLeftCorner(L, L);
  EXPECT_LT((est_sub - RL).norm() / RL.norm(), 0.05);
}

TEST(SmoothedCovariance, RejectsBadArguments) {
  const CMatrix Y = CMatrix::Ones(4, 3);
  EXPECT_THROW(smoothed_covariance(Y, 5, 0.0), Error);
  EXPECT_THROW(smoothed_covariance(Y, 0, 0.0), Error);
  EXPECT_THROW(smoothed_covariance(Y, 2, -1.0), Error);
}

TEST(MvWeights, TwoByTwoClosedForm) {
  const double a = 2.0, d = 3.0;
  const cplx b(0.5, -0.8);
  CMatrix R(2, 2);
  R << a, b, std::conj(b), d;
  CVector s(2);
  s << cplx(1.0, 0.0), std::polar(1.0, 0.7);
  CMatrix Rinv(2, 2);
  Rinv << d, -b, -std::conj(b), a;
  Rinv /= a * d - std::norm(b);
  const CVector num = Rinv * s;
  const CVector expect = num / s.dot(num);
  EXPECT_LT((mv_weights(R, s) - expect).norm(), 1e-14);
}

TEST(MvWeights, IdentityCovarianceGivesDasWeights) {
  for (int M : {1, 4, 7, 16}) {
    const CVector w = mv_weights(CMatrix::Identity(M, M), CVector::Ones(M));
    const RVector das = apodization_weights(M, Apodization::none);
    for (int m = 0; m < M; ++m) {
      EXPECT_EQ(w(m).real(), das(m));
      EXPECT_EQ(w(m).imag(), 0.0);
    }
    const CVector a = steering_vector(0.2, M);
    EXPECT_LT((mv_weights(CMatrix::Identity(M, M), a) - a / static_cast<double>(M)).norm(), 1e-15);
  }
}

TEST(MvWeights, DistortionlessOnRandomInstances) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(-1.2, 1.2);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = 2 + trial % 15;
    const CMatrix R = random_hpd(rng, M);
    const CVector a = steering_vector(th(rng), M);
    const CVector w = mv_weights(R, a);
    EXPECT_LT(std::abs(w.dot(a) - 1.0), 1e-10);
  }
}

TEST(MvWeights, SingularCovarianceIsReported) {
  CMatrix R = CMatrix::Zero(3, 3);
  R(0, 0) = 1.0;
  try {
    mv_weights(R, CVector::Ones(3));
    FAIL() << "expected singular_matrix";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_matrix);
  }
}

TEST(MvWeights, MinimizesOutputPowerAmongDistortionlessWeights) {
  std::mt19937_64 rng(4);
  const int M = 6;
  const CMatrix R = random_hpd(rng, M);
  const CVector a = steering_vector(0.3, M);
  const CVector w = mv_weights(R, a);
  const double p = w.dot(R * w).real();
  for (int trial = 0; trial < 50; ++trial) {
    // Perturb within the constraint plane w^H a = 1.
    CVector u = random_matrix(rng, M, 1).col(0);
    u -= a * (a.dot(u) / a.squaredNorm());
    const CVector v = w + 0.1 * u;
    EXPECT_NEAR(std::abs(v.dot(a) - 1.0), 0.0, 1e-12);
    EXPECT_GE(v.dot(R * v).real(), p - 1e-12);
  }
}

TEST(BsCapon, UnitaryTransformMatchesElementSpace) {
  std::mt19937_64 rng(5);
  for (int L : {2, 4, 5, 8}) {
    const CMatrix B = butler_matrix(L);
    for (int trial = 0; trial < 10; ++trial) {
      const CMatrix R = random_hpd(rng, L);
      const CVector y = random_matrix(rng, L, 1).col(0);
      const cplx es = mv_weights(R, CVector::Ones(L)).dot(y);
      const cplx bs = bs_capon_output(R, y, B);
      EXPECT_LT(std::abs(bs - es), 1e-6 * std::max(1.0, std::abs(es)));
    }
  }
}

TEST(SubapertureMean, AveragesWindows) {
  CVector y(5);
  y << 1.0, 2.0, 3.0, 4.0, 5.0;
  const CVector m = subaperture_mean(y, 3);
  EXPECT_NEAR(std::abs(m(0) - 2.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(m(1) - 3.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(m(2) - 4.0), 0.0, 1e-15);
}

TEST(MultibeamCapon, PassesEachBeamsOwnPlaneWave) {
  const int M = 16, K = 9;
  const auto angles = uniform_angles(K, 0.4);
  const CMatrix A = steering_matrix(angles, M);
  CMatrix Y(M, K);
  for (int k = 0; k < K; ++k) Y.col(k) = A.col(k) * std::polar(1.0 + k, 0.3 * k);
  const CVector out = multibeam_capon_scanline(Y, A, 0.01);
  for (int k = 0; k < K; ++k) EXPECT_LT(std::abs(out(k) - std::polar(1.0 + k, 0.3 * k)), 1e-9);
  const CMatrix Bs = detail::butler_rows(M, M / 2 + 1);
  const CVector outb = multibeam_capon_scanline(Y, A, 0.01, &Bs);
  for (int k = 0; k < K; ++k) EXPECT_LT(std::abs(outb(k) - std::polar(1.0 + k, 0.3 * k)), 1e-9);
  EXPECT_TRUE(multibeam_capon_scanline(CMatrix::Zero(M, K), A, 0.01).isZero(0.0));
}

TEST(Iaa, SingleSourceConcentratesPower) {
  const int M = 16, K = 41;
  const auto angles = uniform_angles(K, 0.6);
  const CMatrix A = steering_matrix(angles, M);
  for (int src : {5, 20, 33}) {
    const CVector y = 2.5 * A.col(src);
    const auto res = iaa_powers(y, A, 15);
    EXPECT_GT(res.power(src) / res.power.sum(), 0.9) << "source " << src;
    Eigen::Index best;
    res.power.maxCoeff(&best);
    EXPECT_EQ(best, src);
  }
}

TEST(Iaa, ZeroDataGivesZero) {
  const CMatrix A = steering_matrix(uniform_angles(11, 0.5), 8);
  EXPECT_TRUE(iaa_powers(CMatrix::Zero(8, 3), A, 15).power.isZero(0.0));
  EXPECT_TRUE(iaa_scanline(CVector::Zero(8), A).isZero(0.0));
}

TEST(Iaa, PowersScaleQuadratically) {
  std::mt19937_64 rng(6);
  const CMatrix A = steering_matrix(uniform_angles(21, 0.5), 10);
  const CMatrix Y = random_matrix(rng, 10, 4);
  const auto p1 = iaa_powers(Y, A, 10).power;
  const auto p2 = iaa_powers(Y * cplx(0.0, 3.0), A, 10).power;
  EXPECT_LT((p2 - 9.0 * p1).norm(), 1e-8 * p2.norm());
}

TEST(Iaa, OneIterationMatchesExplicitUpdate) {
  std::mt19937_64 rng(7);
  const CMatrix A = steering_matrix(uniform_angles(12, 1.0), 6);
  const CMatrix Y = random_matrix(rng, 6, 8);
  const double S = static_cast<double>(Y.cols());
  RVector p0(12);
  for (int k = 0; k < 12; ++k)
    p0(k) = (A.col(k).adjoint() * Y).squaredNorm() / (S * std::pow(A.col(k).squaredNorm(), 2));
  const CMatrix R = A * p0.asDiagonal() * A.adjoint();
  const CMatrix Rinv = R.inverse();
  const auto res = iaa_powers(Y, A, 1);
  EXPECT_FALSE(res.loaded);
  for (int k = 0; k < 12; ++k) {
    const CVector Ria = Rinv * A.col(k);
    const double expect = (Ria.adjoint() * Y).squaredNorm() / (S * std::norm(A.col(k).dot(Ria)));
    EXPECT_NEAR(res.power(k), expect, 1e-9 * expect);
  }
}

TEST(Iaa, OwnBeamVariantUsesMatchingSnapshot) {
  const CMatrix A = steering_matrix(uniform_angles(9, 0.9), 12);
  CMatrix Y = CMatrix::Zero(12, 9);
  // Only beam 4 sees the reflector, at direction 4.
  Y.col(4) = 2.0 * A.col(4);
  const auto res = iaa_multibeam_powers(Y, A, 15, 1e-3);
  Eigen::Index best;
  res.power.maxCoeff(&best);
  EXPECT_EQ(best, 4);
  EXPECT_NEAR(res.power(4), 4.0, 0.05);
  EXPECT_LT(res.power.sum() - res.power(4), 1e-3 * res.power(4));
  EXPECT_THROW(iaa_multibeam_powers(CMatrix::Zero(12, 3), A, 15), Error);
}

TEST(Iaa, LoadingKeepsNoiseFreeEstimateBounded) {
  std::mt19937_64 rng(8);
  const CMatrix A = steering_matrix(uniform_angles(31, 0.5), 9);
  // A dominant source plus a small model mismatch.
  CMatrix Y = A.col(12) * random_matrix(rng, 1, 31) + 1e-3 * random_matrix(rng, 9, 31);
  const auto res = iaa_multibeam_powers(Y, A, 15, 1e-3);
  EXPECT_FALSE(res.loaded);
  EXPECT_LT(res.power.maxCoeff(), 10.0 * Y.colwise().squaredNorm().maxCoeff());
}

namespace {

struct PointSetup {
  ProbeGeometry geom;
  ScanPlan scan;
  SampleGrid grid;
  RawDataCube cube;
  int k_true = 0;
};

PointSetup point_setup() {
  PointSetup s;
  s.geom.num_elements = 16;
  s.geom.sampling_frequency = 50e6;
  s.scan = ScanPlan::uniform_angle(31, 0.2, 0.035, 0.045, 0.04);
  s.grid = SampleGrid::make(s.scan, s.geom);
  s.k_true = 12;
  Phantom p;
  const double t = s.scan.lines[s.k_true];
  p.scatterers = {{0.04 * std::sin(t), 0.04 * std::cos(t), 1.0}};
  const auto raw = simulate_raw(p, s.geom, ExcitationPulse::make(2, 3e6, 50e6), s.scan);
  s.cube = compensate_delays(analytic_signal(raw), s.geom, s.scan);
  return s;
}

int peak_line(const RfImage& img) {
  Eigen::Index k, n;
  img.data.cwiseAbs().maxCoeff(&k, &n);
  return static_cast<int>(k);
}

}  // namespace

TEST(AdaptiveImages, LocateSinglePointReflector) {
  const auto s = point_setup();
  EXPECT_NEAR(peak_line(mv_beamform(s.cube, {}, s.scan, s.grid)), s.k_true, 1);
  MvOptions bs;
  bs.butler = true;
  EXPECT_NEAR(peak_line(mv_beamform(s.cube, bs, s.scan, s.grid)), s.k_true, 1);
  EXPECT_NEAR(peak_line(multibeam_capon_beamform(s.cube, s.geom, {}, s.scan, s.grid)), s.k_true, 1);
  EXPECT_NEAR(peak_line(iaa_beamform(s.cube, s.geom, {}, s.scan, s.grid)), s.k_true, 1);
}

TEST(AdaptiveImages, ButlerVariantEqualsElementSpaceMv) {
  const auto s = point_setup();
  MvOptions bs;
  bs.butler = true;
  const RfImage a = mv_beamform(s.cube, {}, s.scan, s.grid);
  const RfImage b = mv_beamform(s.cube, bs, s.scan, s.grid);
  EXPECT_LT((a.data - b.data).norm(), 1e-6 * a.data.norm());
  EXPECT_EQ(a.provenance.at("method"), "mv");
  EXPECT_EQ(b.provenance.at("method"), "bs_capon");
  EXPECT_EQ(a.provenance.at("subaperture"), "2");
  EXPECT_EQ(a.provenance.at("half_window"), "5");
}

TEST(AdaptiveImages, ZeroCubeGivesZeroImage) {
  auto s = point_setup();
  const RawDataCube zero = s.cube.zeros_like();
  EXPECT_TRUE(mv_beamform(zero, {}, s.scan, s.grid).data.isZero(0.0));
  EXPECT_TRUE(multibeam_capon_beamform(zero, s.geom, {}, s.scan, s.grid).data.isZero(0.0));
  EXPECT_TRUE(iaa_beamform(zero, s.geom, {}, s.scan, s.grid).data.isZero(0.0));
}

TEST(AdaptiveImages, RequireCompensatedCube) {
  auto s = point_setup();
  RawDataCube raw = s.cube;
  raw.is_compensated = false;
  EXPECT_THROW(mv_beamform(raw, {}, s.scan, s.grid), Error);
  EXPECT_THROW(iaa_beamform(raw, s.geom, {}, s.scan, s.grid), Error);
}
