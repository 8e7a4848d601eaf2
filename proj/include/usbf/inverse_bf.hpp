#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "usbf/classic_bf.hpp"
#include "usbf/parallel.hpp"

namespace usbf {

enum class Prior { laplacian_l1, gaussian_l2 };

struct SolveConfig {
  double reg_lambda = 0.5;
  Prior prior = Prior::laplacian_l1;
  int max_iters = 5000;
  /// The l1 solver stops once optimality_gap <= tol * ||G^H z||_inf.
  double tol = 1e-4;
  /// K/P, the number of emissions per kept emission.
  int decimation = 5;

  void validate() const {
    require(reg_lambda >= 0.0 && std::isfinite(reg_lambda), ErrorCode::invalid_argument,
            "reg_lambda must be a finite value >= 0");
    require(tol > 0.0, ErrorCode::invalid_argument, "tol must be positive");
    require(max_iters >= 1, ErrorCode::invalid_argument, "max_iters must be >= 1");
    require(decimation >= 1, ErrorCode::invalid_argument, "decimation factor must be >= 1");
  }
};

struct SolveReport {
  int iterations = 0;
  bool converged = true;
  double objective = 0.0;
};

struct ForwardModel {
  CMatrix G;  // P x K
  std::vector<int> kept;

  int num_unknowns() const { return static_cast<int>(G.cols()); }
  int num_observations() const { return static_cast<int>(G.rows()); }
  int decimation() const { return num_unknowns() / num_observations(); }
};

/// Row indices selected by a 0/1 decimation matrix, one per column.
inline std::vector<int> selected_rows(const RMatrix& D) {
  std::vector<int> rows(D.cols());
  for (Eigen::Index i = 0; i < D.cols(); ++i) {
    Eigen::Index r;
    D.col(i).maxCoeff(&r);
    require(D(r, i) == 1.0 && D.col(i).sum() == 1.0, ErrorCode::invalid_argument,
            "decimation matrix columns must each select exactly one row");
    rows[i] = static_cast<int>(r);
  }
  return rows;
}

/// G = (D^H A^H) A.
inline ForwardModel build_forward_model(const CMatrix& A, const RMatrix& D) {
  require(A.cols() == D.rows(), ErrorCode::dimension_mismatch,
          "steering matrix has " + std::to_string(A.cols()) + " columns but D has " +
              std::to_string(D.rows()) + " rows");
  require(D.cols() >= 1 && D.cols() <= D.rows(), ErrorCode::dimension_mismatch,
          "decimation must keep between 1 and K observations");
  ForwardModel fm;
  fm.kept = selected_rows(D);
  const CMatrix A_bs_h = D.cast<cplx>().transpose() * A.adjoint();
  fm.G = A_bs_h * A;
  return fm;
}

/// z = D^H s, reading only the kept entries of s.
inline CVector decimate_observation(const CVector& s, const std::vector<int>& kept) {
  CVector z(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    require(kept[i] >= 0 && kept[i] < s.size(), ErrorCode::index_out_of_range,
            "decimation index outside the scanline");
    z(static_cast<Eigen::Index>(i)) = s(kept[i]);
  }
  return z;
}

inline CVector decimate_observation(const CVector& s, const RMatrix& D) {
  require(D.rows() == s.size(), ErrorCode::dimension_mismatch,
          "scanline length does not match the decimation matrix");
  return decimate_observation(s, selected_rows(D));
}

/// ||z - G x||^2 + lambda * sum |x_k|.
inline double l1_objective(const CVector& z, const CMatrix& G, const CVector& x, double lambda) {
  return (z - G * x).squaredNorm() + lambda * x.cwiseAbs().sum();
}

/// Modulus shrinkage: x * max(0, 1 - t/|x|).
inline void complex_soft_threshold(CVector& x, double t) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = std::abs(x(i));
    x(i) = a <= t ? cplx(0.0, 0.0) : x(i) * ((a - t) / a);
  }
}

/// Distance of c = G^H (z - G x) from the set allowed at an optimum: |c_k|
/// <= lambda/2 where x_k = 0, c_k = (lambda/2) x_k/|x_k| elsewhere.
inline double optimality_gap(const CVector& c, const CVector& x, double lambda) {
  double gap = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double a = std::abs(x(k));
    const double v = a == 0.0 ? std::abs(c(k)) - 0.5 * lambda : std::abs(c(k) - (0.5 * lambda / a) * x(k));
    gap = std::max(gap, v);
  }
  return gap;
}

/// Largest squared singular value of G.
inline double spectral_norm_squared(const CMatrix& G) {
  const CMatrix gram = G.rows() <= G.cols() ? CMatrix(G * G.adjoint()) : CMatrix(G.adjoint() * G);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

/// l1-regularized least squares by accelerated proximal gradient. The
/// momentum is reset whenever the extrapolated step would raise the
/// objective, in which case a plain proximal step from the current iterate
/// is taken, so the objective never increases. `lipschitz_sq` may pass a
/// precomputed spectral_norm_squared(G).
inline CVector bp_solve(const CVector& z, const CMatrix& G, const SolveConfig& cfg,
                        SolveReport* report = nullptr,
                        std::optional<double> lipschitz_sq = std::nullopt) {
  cfg.validate();
  require(cfg.reg_lambda > 0.0, ErrorCode::invalid_argument,
          "basis pursuit needs reg_lambda > 0");
  require(z.size() == G.rows(), ErrorCode::dimension_mismatch,
          "observation length does not match the forward model");
  const Eigen::Index K = G.cols();
  const double lambda = cfg.reg_lambda;
  const double s2 = lipschitz_sq ? *lipschitz_sq : spectral_norm_squared(G);

  SolveReport rep;
  CVector x = CVector::Zero(K);
  // x = 0 is optimal exactly when lambda >= 2 ||G^H z||_inf.
  const double scale = (G.adjoint() * z).cwiseAbs().maxCoeff();
  if (s2 == 0.0 || scale == 0.0 || lambda >= 2.0 * scale) {
    rep.objective = z.squaredNorm();
    if (report) *report = rep;
    return x;
  }
  const double step = 1.0 / (2.0 * s2);
  const double thresh = step * lambda;

  auto prox_step = [&](const CVector& from) {
    CVector v = from + (2.0 * step) * (G.adjoint() * (z - G * from));
    complex_soft_threshold(v, thresh);
    return v;
  };
  // Objective change from x to `to`, formed from differences so that small
  // decreases are not lost against the size of the objective. r holds
  // z - G x; d receives G (to - x).
  CVector r = z, d;
  auto change = [&](const CVector& to) {
    d = G * (to - x);
    double dl1 = 0.0;
    for (Eigen::Index i = 0; i < K; ++i) dl1 += std::abs(to(i)) - std::abs(x(i));
    return d.squaredNorm() - 2.0 * r.dot(d).real() + lambda * dl1;
  };

  CVector y = x;
  double theta = 1.0;
  rep.converged = false;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    rep.iterations = it;
    CVector cand = prox_step(y);
    double dJ = change(cand);
    if (dJ > 0.0) {
      cand = prox_step(x);
      dJ = change(cand);
      theta = 1.0;
      if (dJ > 0.0) {  // no descent even from x: x is numerically optimal
        rep.converged = true;
        break;
      }
      y = cand;
    } else {
      const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
      y = cand + ((theta - 1.0) / theta_next) * (cand - x);
      theta = theta_next;
    }
    x = std::move(cand);
    r -= d;
    if (optimality_gap(G.adjoint() * r, x, lambda) <= cfg.tol * scale) {
      rep.converged = true;
      break;
    }
  }
  const double J = l1_objective(z, G, x, lambda);
  rep.objective = J;
  if (report) *report = rep;
  return x;
}

/// Tikhonov solve x = (G^H G + lambda I)^-1 G^H z, factored once and reused
/// across right-hand sides. With fewer observations than unknowns and
/// lambda > 0 the equivalent P x P system G^H (G G^H + lambda I)^-1 z is
/// factored instead.
class LsSolver {
 public:
  LsSolver(const CMatrix& G, double lambda) : G_(G), lambda_(lambda) {
    require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::invalid_argument,
            "reg_lambda must be a finite value >= 0");
    const Eigen::Index P = G.rows(), K = G.cols();
    dual_ = lambda > 0.0 && P < K;
    const Eigen::Index n = dual_ ? P : K;
    CMatrix H = dual_ ? CMatrix(G * G.adjoint()) : CMatrix(G.adjoint() * G);
    H.diagonal().array() += lambda;
    llt_.compute(H);
    bool ok = llt_.info() == Eigen::Success;
    if (ok) {
      const RVector d = CMatrix(llt_.matrixL()).diagonal().real();
      const double hi = d.cwiseAbs().maxCoeff();
      const double lo = d.cwiseAbs().minCoeff();
      ok = hi > 0.0 && lo * lo > hi * hi * 64.0 * n * std::numeric_limits<double>::epsilon();
    }
    require(ok, ErrorCode::singular_matrix,
            "G^H G + lambda I is singular; use reg_lambda > 0");
  }

  CVector solve(const CVector& z) const {
    require(z.size() == G_.rows(), ErrorCode::dimension_mismatch,
            "observation length does not match the forward model");
    if (dual_) return G_.adjoint() * llt_.solve(z);
    return llt_.solve(G_.adjoint() * z);
  }

  bool uses_dual_form() const { return dual_; }

 private:
  CMatrix G_;
  double lambda_;
  bool dual_ = false;
  Eigen::LLT<CMatrix> llt_;
};

inline CVector ls_solve(const CVector& z, const CMatrix& G, const SolveConfig& cfg) {
  cfg.validate();
  return LsSolver(G, cfg.reg_lambda).solve(z);
}

/// Phase that maps a centered-aperture DAS scanline onto the element-0
/// referenced model: line k is multiplied by exp(j*beta*sin(theta_k)) with
/// beta = 2*pi*spacing*(M-1)/2, and, for lateral scans, by
/// exp(-j*2*kappa*(r_k - z)) to remove the range offset of off-axis lines.
inline cplx scanline_alignment(const ScanPlan& scan, int k, double depth, int M,
                               double spacing_in_wavelengths, double wavenumber) {
  const double beta = 2.0 * kPi * spacing_in_wavelengths * 0.5 * (M - 1);
  double phase = beta * std::sin(scan.angle(k, depth));
  if (scan.mode == ScanMode::lateral) {
    const Point2 q = scan.point(k, depth);
    phase -= 2.0 * wavenumber * (std::hypot(q.x, q.z) - depth);
  }
  return std::polar(1.0, phase);
}

struct InverseReport {
  int nonconverged_depths = 0;
  int max_iterations = 0;
  int emissions_used = 0;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Solves one depth per column with model(n) giving (G, sigma^2) for that depth.
template <typename ModelFor>
CMatrix solve_depths(const CMatrix& Z, const SolveConfig& cfg, ModelFor&& model, bool shared,
                     InverseReport& report) {
  const int N = static_cast<int>(Z.cols());
  CMatrix X(model(0).first.cols(), N);
  std::atomic<int> nonconverged{0};
  std::atomic<int> max_iter{0};
  std::optional<LsSolver> shared_ls;
  std::optional<std::pair<CMatrix, double>> shared_model;
  if (shared) {
    shared_model = model(0);
    if (cfg.prior == Prior::gaussian_l2) shared_ls.emplace(shared_model->first, cfg.reg_lambda);
  }
  parallel_for(0, N, [&](int n) {
    const CVector z = Z.col(n);
    if (z.isZero(0.0)) {
      X.col(n).setZero();
      return;
    }
    std::pair<CMatrix, double> local;
    const auto& gm = shared ? *shared_model : (local = model(n));
    if (cfg.prior == Prior::gaussian_l2) {
      X.col(n) = shared ? shared_ls->solve(z) : LsSolver(gm.first, cfg.reg_lambda).solve(z);
      return;
    }
    SolveReport rep;
    X.col(n) = bp_solve(z, gm.first, cfg, &rep, gm.second);
    if (!rep.converged) nonconverged.fetch_add(1);
    int seen = max_iter.load();
    while (rep.iterations > seen && !max_iter.compare_exchange_weak(seen, rep.iterations)) {
    }
  });
  report.nonconverged_depths = nonconverged.load();
  report.max_iterations = max_iter.load();
  return X;
}

inline RfImage finish_inverse(const RfImage& das, CMatrix X, const SolveConfig& cfg, int P,
                              const InverseReport& report) {
  RfImage out;
  out.data = std::move(X);
  out.scan = das.scan;
  out.grid = das.grid;
  out.provenance["method"] = cfg.prior == Prior::laplacian_l1 ? "bp" : "ls";
  out.provenance["reg_lambda"] = format_number(cfg.reg_lambda);
  out.provenance["decimation"] = std::to_string(cfg.decimation);
  out.provenance["emissions_used"] = std::to_string(P);
  if (cfg.prior == Prior::laplacian_l1) {
    out.provenance["max_iterations"] = std::to_string(report.max_iterations);
    out.provenance["nonconverged_depths"] = std::to_string(report.nonconverged_depths);
  }
  return out;
}

}  // namespace detail

/// Per-depth inversion of a K x N DAS image with a fixed steering matrix A
/// (M x K) and decimation D (K x P). Only the rows of `das` selected by D
/// are read. Observations are scaled by the DAS gain 1/M and normalized to
/// unit peak before solving; the output is rescaled to the input level.
inline RfImage inverse_beamform(const RfImage& das, const CMatrix& A, const RMatrix& D,
                                const SolveConfig& cfg, InverseReport* report = nullptr) {
  cfg.validate();
  require(das.kind == ImageKind::rf, ErrorCode::invalid_argument,
          "inverse beamforming needs an rf image");
  require(das.num_lines() == A.cols(), ErrorCode::dimension_mismatch,
          "image has " + std::to_string(das.num_lines()) + " lines but A has " +
              std::to_string(A.cols()) + " columns");
  ForwardModel fm = build_forward_model(A, D);
  fm.G /= static_cast<double>(A.rows());
  const int P = fm.num_observations();
  CMatrix Z(P, das.num_samples());
  for (int i = 0; i < P; ++i) Z.row(i) = das.data.row(fm.kept[i]);
  const double peak = Z.cwiseAbs().maxCoeff();
  InverseReport rep;
  rep.emissions_used = P;
  if (peak == 0.0) {
    if (report) *report = rep;
    return detail::finish_inverse(das, CMatrix::Zero(das.num_lines(), das.num_samples()), cfg, P, rep);
  }
  Z /= peak;
  const double s2 = cfg.prior == Prior::laplacian_l1 ? spectral_norm_squared(fm.G) : 0.0;
  CMatrix X = detail::solve_depths(
      Z, cfg, [&](int) { return std::pair<CMatrix, double>(fm.G, s2); }, true, rep);
  X *= peak;
  if (report) *report = rep;
  return detail::finish_inverse(das, std::move(X), cfg, P, rep);
}

/// Inversion driven by the image's scan plan: steering angles follow each
/// scanline's direction (per depth for lateral scans), and scanline phases
/// are aligned to the steering model before solving and restored after.
inline RfImage inverse_beamform(const RfImage& das, const ProbeGeometry& geom,
                                const SolveConfig& cfg, InverseReport* report = nullptr) {
  cfg.validate();
  require(das.kind == ImageKind::rf, ErrorCode::invalid_argument,
          "inverse beamforming needs an rf image");
  const int K = das.num_lines();
  const int N = das.num_samples();
  const int M = geom.num_elements;
  require(das.scan.num_lines() == K && das.grid.num_samples == N, ErrorCode::dimension_mismatch,
          "image does not match its scan plan");
  require(K % cfg.decimation == 0, ErrorCode::invalid_argument,
          "K=" + std::to_string(K) + " is not divisible by the decimation factor " +
              std::to_string(cfg.decimation));
  const int P = K / cfg.decimation;
  const RMatrix D = decimation_matrix(K, P);
  const auto kept = decimation_indices(K, P);
  const double spacing = geom.spacing_in_wavelengths();
  const double wavenumber = 2.0 * kPi / geom.wavelength();

  CMatrix Z(P, N);
  for (int n = 0; n < N; ++n) {
    const double depth = das.grid.depth(n);
    for (int i = 0; i < P; ++i)
      Z(i, n) = das.data(kept[i], n) *
                scanline_alignment(das.scan, kept[i], depth, M, spacing, wavenumber);
  }
  InverseReport rep;
  rep.emissions_used = P;
  const double peak = Z.cwiseAbs().maxCoeff();
  if (peak == 0.0) {
    if (report) *report = rep;
    return detail::finish_inverse(das, CMatrix::Zero(K, N), cfg, P, rep);
  }
  Z /= peak;

  const bool shared = das.scan.mode == ScanMode::angle;
  auto model = [&](int n) {
    std::vector<double> angles(K);
    const double depth = das.grid.depth(n);
    for (int k = 0; k < K; ++k) angles[k] = das.scan.angle(k, depth);
    ForwardModel fm = build_forward_model(steering_matrix(angles, M, spacing), D);
    fm.G /= static_cast<double>(M);
    const double s2 = cfg.prior == Prior::laplacian_l1 ? spectral_norm_squared(fm.G) : 0.0;
    return std::pair<CMatrix, double>(std::move(fm.G), s2);
  };
  CMatrix X = detail::solve_depths(Z, cfg, model, shared, rep);

  const double beta = 2.0 * kPi * spacing * 0.5 * (M - 1);
  for (int n = 0; n < N; ++n) {
    const double depth = das.grid.depth(n);
    for (int k = 0; k < K; ++k)
      X(k, n) *= peak * std::polar(1.0, -beta * std::sin(das.scan.angle(k, depth)));
  }
  if (report) *report = rep;
  return detail::finish_inverse(das, std::move(X), cfg, P, rep);
}

}  // namespace usbf
