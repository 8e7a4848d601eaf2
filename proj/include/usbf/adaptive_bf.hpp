#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "usbf/classic_bf.hpp"
#include "usbf/parallel.hpp"

namespace usbf {

struct CovarianceEstimate {
  CMatrix R;
  double loading = 0.0;
  int subaperture = 0;
  int half_window = 0;
};

/// Spatially smoothed covariance of the columns of Y (M x S snapshots):
/// mean over the M-L+1 subapertures and S snapshots of y y^H, then
/// loading * trace(R) / L added to the diagonal.
inline CMatrix smoothed_covariance(const CMatrix& Y, int L, double loading) {
  const int M = static_cast<int>(Y.rows());
  require(L >= 1 && L <= M, ErrorCode::invalid_argument,
          "subaperture length must lie in [1, M]");
  require(Y.cols() >= 1, ErrorCode::invalid_argument, "covariance needs at least one snapshot");
  require(loading >= 0.0, ErrorCode::invalid_argument, "diagonal loading must be >= 0");
  CMatrix R = CMatrix::Zero(L, L);
  for (Eigen::Index s = 0; s < Y.cols(); ++s)
    for (int l = 0; l + L <= M; ++l) {
      const auto v = Y.col(s).segment(l, L);
      R.selfadjointView<Eigen::Lower>().rankUpdate(v);
    }
  R = R.selfadjointView<Eigen::Lower>();
  R /= static_cast<double>((M - L + 1) * Y.cols());
  if (loading > 0.0) R.diagonal().array() += loading * R.trace().real() / L;
  return R;
}

/// Covariance of emission k at depth sample n from a compensated cube,
/// averaged over depth samples n-T..n+T (clipped at the record edges).
inline CovarianceEstimate estimate_covariance(const RawDataCube& cube, int k, int n, int L, int T,
                                              double loading) {
  require(cube.is_compensated, ErrorCode::invalid_argument,
          "covariance estimation needs a delay-compensated cube");
  require(k >= 0 && k < cube.emissions() && n >= 0 && n < cube.samples(),
          ErrorCode::index_out_of_range, "emission or depth index out of range");
  require(T >= 0, ErrorCode::invalid_argument, "temporal half-window must be >= 0");
  const int lo = std::max(0, n - T), hi = std::min(cube.samples() - 1, n + T);
  const auto em = cube.emission(k);
  const CMatrix Y = em.middleRows(lo, hi - lo + 1).transpose().cast<cplx>();
  return {smoothed_covariance(Y, L, loading), loading, L, T};
}

namespace detail {

// LLT with a pivot-ratio check; failure means the matrix is numerically singular.
inline Eigen::LLT<CMatrix> factor_hpd(const CMatrix& R) {
  Eigen::LLT<CMatrix> llt(R);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const RVector d = CMatrix(llt.matrixL()).diagonal().real();
    const double hi = d.maxCoeff(), lo = d.minCoeff();
    ok = hi > 0.0 && lo * lo > hi * hi * 16.0 * R.rows() * std::numeric_limits<double>::epsilon();
  }
  require(ok, ErrorCode::singular_matrix, "covariance matrix is singular; apply diagonal loading");
  return llt;
}

inline CVector mv_from_factor(const Eigen::LLT<CMatrix>& llt, const CVector& a) {
  const CVector Ria = llt.solve(a);
  return Ria / a.dot(Ria);
}

}  // namespace detail

/// w = R^-1 a / (a^H R^-1 a).
inline CVector mv_weights(const CMatrix& R, const CVector& a) {
  require(R.rows() == R.cols() && R.rows() == a.size(), ErrorCode::dimension_mismatch,
          "covariance and steering vector sizes differ");
  return detail::mv_from_factor(detail::factor_hpd(R), a);
}

/// Mean of the M-L+1 subaperture vectors of y.
inline CVector subaperture_mean(const CVector& y, int L) {
  const int M = static_cast<int>(y.size());
  CVector out = CVector::Zero(L);
  for (int l = 0; l + L <= M; ++l) out += y.segment(l, L);
  return out / static_cast<double>(M - L + 1);
}

/// Capon output in the space transformed by B: y_BS = B y, R_BS = B R B^H,
/// with the unit-gain constraint on the transformed all-ones vector B 1.
/// Returns w_BS^H y_BS.
inline cplx bs_capon_output(const CMatrix& R, const CVector& y, const CMatrix& B) {
  require(B.cols() == R.rows() && R.rows() == y.size(), ErrorCode::dimension_mismatch,
          "Butler matrix, covariance and data sizes differ");
  const CMatrix R_bs = B * R * B.adjoint();
  const CVector v = B * CVector::Ones(R.rows());
  const CVector w = mv_weights(R_bs, v);
  return w.dot(B * y);
}

struct MvOptions {
  int subaperture = 0;   // 0: M/8 (at least 1)
  int half_window = 5;   // 2T+1 depth samples
  double loading = -1;   // < 0: 1/(10 L)
  bool butler = false;   // beamspace variant

  int resolved_subaperture(int M) const { return subaperture > 0 ? subaperture : std::max(1, M / 8); }
  double resolved_loading(int L) const { return loading >= 0.0 ? loading : 1.0 / (10.0 * L); }
};

/// Element-space minimum variance (or its Butler-beamspace equivalent) per
/// scanline and depth, with subaperture averaging, temporal averaging and
/// diagonal loading.
inline RfImage mv_beamform(const RawDataCube& cube, const MvOptions& opt, const ScanPlan& scan,
                           const SampleGrid& grid) {
  require(cube.is_compensated, ErrorCode::invalid_argument,
          "minimum variance needs a delay-compensated cube");
  require(cube.emissions() == scan.num_lines() && cube.samples() == grid.num_samples,
          ErrorCode::dimension_mismatch, "cube does not match the scan plan");
  const int M = cube.channels(), N = cube.samples(), K = cube.emissions();
  const int L = opt.resolved_subaperture(M);
  const int T = opt.half_window;
  const double delta = opt.resolved_loading(L);
  require(L <= M, ErrorCode::invalid_argument, "subaperture length exceeds the aperture");
  require(T >= 0, ErrorCode::invalid_argument, "temporal half-window must be >= 0");
  const CMatrix B = opt.butler ? butler_matrix(L) : CMatrix::Identity(L, L);
  const CVector ones = CVector::Ones(L);

  RfImage img;
  img.data = CMatrix::Zero(K, N);
  img.scan = scan;
  img.grid = grid;
  img.provenance["method"] = opt.butler ? "bs_capon" : "mv";
  img.provenance["subaperture"] = std::to_string(L);
  img.provenance["half_window"] = std::to_string(T);
  img.provenance["loading"] = std::to_string(delta);

  parallel_for(0, K, [&](int k) {
    const CMatrix Y = cube.emission(k).transpose().cast<cplx>();  // M x N
    // Per-sample subaperture sums, then windowed sums over depth.
    std::vector<CMatrix> C(N, CMatrix::Zero(L, L));
    for (int n = 0; n < N; ++n) {
      for (int l = 0; l + L <= M; ++l) C[n].selfadjointView<Eigen::Lower>().rankUpdate(Y.col(n).segment(l, L));
      C[n] = CMatrix(C[n].selfadjointView<Eigen::Lower>());
    }
    for (int n = 0; n < N; ++n) {
      const int lo = std::max(0, n - T), hi = std::min(N - 1, n + T);
      CMatrix R = CMatrix::Zero(L, L);
      for (int i = lo; i <= hi; ++i) R += C[i];
      R /= static_cast<double>((M - L + 1) * (hi - lo + 1));
      const CVector ybar = subaperture_mean(Y.col(n), L);
      if (R.trace().real() == 0.0) continue;  // no signal: output stays zero
      R.diagonal().array() += delta * R.trace().real() / L;
      img.data(k, n) = opt.butler ? bs_capon_output(R, ybar, B) : mv_weights(R, ones).dot(ybar);
    }
  });
  return img;
}

/// Channel vector of emission k at depth n with the receive steering removed
/// and conjugated so that a source at angle theta follows the manifold
/// steering_vector(theta) up to a constant phase.
inline CVector phase_compensated_snapshot(const RawDataCube& cube, int k, int n, double theta_k,
                                          const std::vector<double>& positions,
                                          double wavenumber) {
  const int M = cube.channels();
  CVector v(M);
  for (int m = 0; m < M; ++m) {
    const cplxf s = cube.at(m, n, k);
    v(m) = std::conj(cplx(s.real(), s.imag()) *
                     std::polar(1.0, wavenumber * positions[m] * std::sin(theta_k)));
  }
  return v;
}

struct MultibeamOptions {
  int beams = 0;          // Butler beams kept; 0: M/2 + 1
  double loading = 0.01;  // times trace / beams
  int half_window = 0;    // extra depth samples per side used as snapshots

  int resolved_beams(int M) const { return beams > 0 ? beams : std::min(M, M / 2 + 1); }
};

/// Multi-beam Capon at one depth: Y holds one phase-compensated snapshot per
/// direction (M x K), A the manifold (M x K). With Bs (Nb x M) the data are
/// reduced to beamspace first. Output k is w_k^H y_k.
inline CVector multibeam_capon_scanline(const CMatrix& Y, const CMatrix& A, double loading,
                                        const CMatrix* Bs = nullptr,
                                        const CMatrix* extra_snapshots = nullptr) {
  require(Y.rows() == A.rows() && Y.cols() == A.cols(), ErrorCode::dimension_mismatch,
          "snapshot and manifold shapes differ");
  const CMatrix Yb = Bs ? CMatrix(*Bs * Y) : Y;
  const CMatrix Ab = Bs ? CMatrix(*Bs * A) : A;
  const Eigen::Index D = Yb.rows();
  CMatrix R = CMatrix::Zero(D, D);
  R.selfadjointView<Eigen::Lower>().rankUpdate(Yb);
  Eigen::Index count = Yb.cols();
  if (extra_snapshots && extra_snapshots->cols() > 0) {
    const CMatrix Eb = Bs ? CMatrix(*Bs * *extra_snapshots) : *extra_snapshots;
    R.selfadjointView<Eigen::Lower>().rankUpdate(Eb);
    count += Eb.cols();
  }
  R = CMatrix(R.selfadjointView<Eigen::Lower>()) / static_cast<double>(count);
  CVector out = CVector::Zero(Y.cols());
  if (R.trace().real() == 0.0) return out;
  R.diagonal().array() += loading * R.trace().real() / static_cast<double>(D);
  const auto llt = detail::factor_hpd(R);
  for (Eigen::Index k = 0; k < Y.cols(); ++k) {
    const CVector w = detail::mv_from_factor(llt, Ab.col(k));
    out(k) = w.dot(Yb.col(k));
  }
  return out;
}

namespace detail {

// Phase-compensated snapshots of all emissions at depth n (M x K) and the
// matching manifold.
inline void multibeam_snapshots(const RawDataCube& cube, const ScanPlan& scan, const SampleGrid& grid,
                                const ProbeGeometry& geom, int n, CMatrix& Y, CMatrix& A) {
  const int M = cube.channels(), K = cube.emissions();
  const auto pos = element_positions(geom);
  const double kappa = 2.0 * kPi / geom.wavelength();
  const double depth = grid.depth(n);
  std::vector<double> angles(K);
  Y.resize(M, K);
  for (int k = 0; k < K; ++k) {
    angles[k] = scan.angle(k, depth);
    Y.col(k) = phase_compensated_snapshot(cube, k, n, angles[k], pos, kappa);
  }
  A = steering_matrix(angles, M, geom.spacing_in_wavelengths());
}

inline CMatrix butler_rows(int M, int count) {
  const CMatrix B = butler_matrix(M);
  const auto rows = lowest_order_beams(M, count);
  CMatrix Bs(static_cast<Eigen::Index>(rows.size()), M);
  for (std::size_t i = 0; i < rows.size(); ++i) Bs.row(static_cast<Eigen::Index>(i)) = B.row(rows[i]);
  return Bs;
}

}  // namespace detail

/// Multi-beam Capon image: per depth, one covariance from all K phase-
/// compensated beams, reduced to the lowest-order Butler beams.
inline RfImage multibeam_capon_beamform(const RawDataCube& cube, const ProbeGeometry& geom,
                                        const MultibeamOptions& opt, const ScanPlan& scan,
                                        const SampleGrid& grid) {
  require(cube.is_compensated, ErrorCode::invalid_argument,
          "multi-beam Capon needs a delay-compensated cube");
  require(cube.emissions() == scan.num_lines() && cube.samples() == grid.num_samples &&
              cube.channels() == geom.num_elements,
          ErrorCode::dimension_mismatch, "cube does not match the probe/scan plan");
  const int M = cube.channels(), N = cube.samples(), K = cube.emissions();
  const int Nb = opt.resolved_beams(M);
  require(Nb >= 1 && Nb <= M, ErrorCode::invalid_argument, "beam count must lie in [1, M]");
  require(opt.loading >= 0.0, ErrorCode::invalid_argument, "diagonal loading must be >= 0");
  const CMatrix Bs = detail::butler_rows(M, Nb);

  RfImage img;
  img.data = CMatrix::Zero(K, N);
  img.scan = scan;
  img.grid = grid;
  img.provenance["method"] = "multibeam_capon";
  img.provenance["beams"] = std::to_string(Nb);
  img.provenance["loading"] = std::to_string(opt.loading);

  parallel_for(0, N, [&](int n) {
    CMatrix Y, A;
    detail::multibeam_snapshots(cube, scan, grid, geom, n, Y, A);
    CMatrix extra(M, 0);
    if (opt.half_window > 0) {
      std::vector<CVector> cols;
      for (int d = -opt.half_window; d <= opt.half_window; ++d) {
        const int i = n + d;
        if (d == 0 || i < 0 || i >= N) continue;
        CMatrix Yi, Ai;
        detail::multibeam_snapshots(cube, scan, grid, geom, i, Yi, Ai);
        for (int k = 0; k < K; ++k) cols.push_back(Yi.col(k));
      }
      extra.resize(M, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) extra.col(static_cast<Eigen::Index>(c)) = cols[c];
    }
    const CVector out = multibeam_capon_scanline(Y, A, opt.loading, &Bs, &extra);
    img.data.col(n) = out.conjugate();
  });
  return img;
}

struct IaaResult {
  RVector power;  // per direction
  int iterations = 0;
  bool loaded = false;  // singular model covariance needed the 1e-10 fallback loading
};

namespace detail {

// Factor A diag(p) A^H + loading * trace / D * I, falling back to a
// 1e-10 relative loading when the model covariance is numerically singular.
inline Eigen::LLT<CMatrix> factor_iaa_model(const CMatrix& A, const RVector& p, double loading, bool& loaded) {
  const Eigen::Index D = A.rows();
  CMatrix R = A * p.asDiagonal() * A.adjoint();
  R = 0.5 * (R + R.adjoint()).eval();
  const double tr = R.trace().real();
  if (loading > 0.0) R.diagonal().array() += loading * tr / static_cast<double>(D);
  Eigen::LLT<CMatrix> llt(R);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const RVector d = CMatrix(llt.matrixL()).diagonal().real();
    ok = d.minCoeff() * d.minCoeff() >
         d.maxCoeff() * d.maxCoeff() * 1e3 * D * std::numeric_limits<double>::epsilon();
  }
  if (!ok) {
    R.diagonal().array() += 1e-10 * tr / static_cast<double>(D);
    llt.compute(R);
    loaded = true;
  }
  return llt;
}

// Shared IAA loop. With own_beam, direction k is estimated from column k of
// Y only; otherwise powers are averaged over all columns.
inline IaaResult iaa_iterate(const CMatrix& Y, const CMatrix& A, int iterations, double loading, bool own_beam) {
  require(iterations >= 1, ErrorCode::invalid_argument, "IAA needs at least one iteration");
  require(loading >= 0.0, ErrorCode::invalid_argument, "IAA loading must be >= 0");
  require(Y.rows() == A.rows(), ErrorCode::dimension_mismatch, "snapshot and manifold sizes differ");
  require(!own_beam || Y.cols() == A.cols(), ErrorCode::dimension_mismatch,
          "one snapshot per direction is required");
  const Eigen::Index Kb = A.cols();
  const double S = static_cast<double>(Y.cols());
  IaaResult res;
  res.power = RVector::Zero(Kb);
  res.iterations = iterations;
  if (Y.isZero(0.0)) return res;

  auto power_of = [&](const CMatrix& num, Eigen::Index k) {
    return own_beam ? std::norm(num(k, k)) : num.row(k).squaredNorm() / S;
  };
  const RVector norms = A.colwise().squaredNorm().transpose();
  const CMatrix mf = A.adjoint() * Y;  // Kb x S
  for (Eigen::Index k = 0; k < Kb; ++k) res.power(k) = power_of(mf, k) / (norms(k) * norms(k));

  for (int it = 0; it < iterations; ++it) {
    const auto llt = factor_iaa_model(A, res.power, loading, res.loaded);
    const CMatrix RiA = llt.solve(A);
    const CMatrix num = RiA.adjoint() * Y;  // a_k^H R^-1 y_s
    for (Eigen::Index k = 0; k < Kb; ++k) {
      const cplx denom = A.col(k).dot(RiA.col(k));
      res.power(k) = power_of(num, k) / std::norm(denom);
    }
  }
  return res;
}

}  // namespace detail

/// Iterative adaptive approach over the columns of Y (snapshots, D x S)
/// with manifold A (D x Kbar). Powers start from the matched filter
/// |a^H y|^2 / |a|^4 averaged over snapshots and are refined `iterations`
/// times. `loading` adds loading * trace / D to the model covariance.
inline IaaResult iaa_powers(const CMatrix& Y, const CMatrix& A, int iterations, double loading = 0.0) {
  return detail::iaa_iterate(Y, A, iterations, loading, false);
}

/// IAA where direction k is estimated from its own beam, column k of Y
/// (D x Kbar), through the weights R^-1 a_k / (a_k^H R^-1 a_k).
inline IaaResult iaa_multibeam_powers(const CMatrix& Y, const CMatrix& A, int iterations, double loading = 0.0) {
  return detail::iaa_iterate(Y, A, iterations, loading, true);
}

/// Amplitude estimates sqrt(P_k) for a single snapshot y.
inline RVector iaa_scanline(const CVector& y, const CMatrix& A, int iterations = 15) {
  const CMatrix Y = y;
  return iaa_powers(Y, A, iterations).power.cwiseSqrt();
}

struct IaaOptions {
  int iterations = 15;
  int beams = 0;          // Butler beams kept; 0: M/2 + 1
  double loading = 1e-3;  // times trace / beams, added to the model covariance
};

/// IAA image: per depth, the K phase-compensated beams are projected on the
/// lowest-order Butler beams; direction k takes amplitude sqrt(P_k)
/// estimated from beam k.
inline RfImage iaa_beamform(const RawDataCube& cube, const ProbeGeometry& geom,
                            const IaaOptions& opt, const ScanPlan& scan, const SampleGrid& grid,
                            int* loaded_depths = nullptr) {
  require(cube.is_compensated, ErrorCode::invalid_argument, "IAA needs a delay-compensated cube");
  require(cube.emissions() == scan.num_lines() && cube.samples() == grid.num_samples &&
              cube.channels() == geom.num_elements,
          ErrorCode::dimension_mismatch, "cube does not match the probe/scan plan");
  require(opt.loading >= 0.0, ErrorCode::invalid_argument, "IAA loading must be >= 0");
  const int M = cube.channels(), N = cube.samples(), K = cube.emissions();
  const int Nb = opt.beams > 0 ? opt.beams : std::min(M, M / 2 + 1);
  require(Nb >= 1 && Nb <= M, ErrorCode::invalid_argument, "beam count must lie in [1, M]");
  const CMatrix Bs = detail::butler_rows(M, Nb);

  RfImage img;
  img.data = CMatrix::Zero(K, N);
  img.scan = scan;
  img.grid = grid;
  img.provenance["method"] = "iaa";
  img.provenance["iterations"] = std::to_string(opt.iterations);
  img.provenance["beams"] = std::to_string(Nb);
  img.provenance["loading"] = std::to_string(opt.loading);
  std::atomic<int> loaded{0};
  parallel_for(0, N, [&](int n) {
    CMatrix Y, A;
    detail::multibeam_snapshots(cube, scan, grid, geom, n, Y, A);
    const auto res = iaa_multibeam_powers(Bs * Y, Bs * A, opt.iterations, opt.loading);
    if (res.loaded) loaded.fetch_add(1);
    img.data.col(n) = res.power.cwiseSqrt().cast<cplx>();
  });
  if (loaded_depths) *loaded_depths = loaded.load();
  img.provenance["loaded_depths"] = std::to_string(loaded.load());
  return img;
}

}  // namespace usbf
