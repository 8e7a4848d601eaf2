#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <optional>
#include <span>
#include <vector>

#include "usbf/types.hpp"

namespace usbf {

/// Linear array description. All lengths in meters, frequencies in Hz.
struct ProbeGeometry {
  int num_elements = 32;
  double pitch = 256e-6;
  double center_frequency = 3e6;
  double sampling_frequency = 100e6;
  double sound_speed = 1540.0;

  double wavelength() const { return sound_speed / center_frequency; }

  /// Element spacing expressed in wavelengths (0.5 for a half-wavelength pitch).
  double spacing_in_wavelengths() const { return pitch / wavelength(); }

  void validate() const {
    require(num_elements >= 2, ErrorCode::invalid_argument, "probe needs at least 2 elements");
    require(pitch > 0.0, ErrorCode::invalid_argument, "pitch must be positive");
    require(center_frequency > 0.0 && sound_speed > 0.0, ErrorCode::invalid_argument,
            "center frequency and sound speed must be positive");
    require(sampling_frequency > 2.0 * center_frequency, ErrorCode::invalid_argument,
            "sampling frequency must exceed twice the center frequency");
  }
};

/// p_m = (m - (M-1)/2) * pitch, symmetric about the array center.
inline std::vector<double> element_positions(const ProbeGeometry& geom) {
  geom.validate();
  const int M = geom.num_elements;
  std::vector<double> p(M);
  for (int m = 0; m < M; ++m) p[m] = (m - 0.5 * (M - 1)) * geom.pitch;
  // Mirror the upper half so that p_m + p_{M-1-m} == 0 holds bit-exactly.
  for (int m = 0; m < M / 2; ++m) p[M - 1 - m] = -p[m];
  if (M % 2 == 1) p[M / 2] = 0.0;
  return p;
}

/// Far-field manifold referenced to element 0: entry m is
/// exp(-j * m * 2*pi*spacing * sin(theta)). With the default half-wavelength
/// spacing this is exp(-j*m*pi*sin(theta)).
inline CVector steering_vector(double theta, int M, double spacing_in_wavelengths = 0.5) {
  require(M >= 1, ErrorCode::invalid_argument, "steering vector needs M >= 1");
  require(std::abs(theta) <= kPi / 2 + 1e-12, ErrorCode::invalid_argument,
          "steering angle must satisfy |theta| <= pi/2");
  const double step = 2.0 * kPi * spacing_in_wavelengths * std::sin(theta);
  CVector a(M);
  a(0) = cplx(1.0, 0.0);
  for (int m = 1; m < M; ++m) a(m) = std::polar(1.0, -m * step);
  return a;
}

/// Columns are steering_vector(angles[k], M).
inline CMatrix steering_matrix(std::span<const double> angles, int M,
                               double spacing_in_wavelengths = 0.5) {
  require(!angles.empty(), ErrorCode::invalid_argument, "steering matrix needs K >= 1");
  CMatrix A(M, static_cast<Eigen::Index>(angles.size()));
  for (std::size_t k = 0; k < angles.size(); ++k)
    A.col(static_cast<Eigen::Index>(k)) = steering_vector(angles[k], M, spacing_in_wavelengths);
  return A;
}

/// K angles uniformly spaced over [-half_span, +half_span].
inline std::vector<double> uniform_angles(int K, double half_span) {
  require(K >= 1, ErrorCode::invalid_argument, "need at least one angle");
  std::vector<double> out(K, 0.0);
  if (K == 1) return out;
  for (int k = 0; k < K; ++k) out[k] = -half_span + 2.0 * half_span * k / (K - 1);
  return out;
}

/// M x M Butler matrix, b_mn = exp(j*2*pi/M*(m - 1/2)*n) / sqrt(M), 0-based.
inline CMatrix butler_matrix(int M) {
  require(M >= 1, ErrorCode::invalid_argument, "Butler matrix needs M >= 1");
  CMatrix B(M, M);
  const double scale = 1.0 / std::sqrt(static_cast<double>(M));
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < M; ++n)
      B(m, n) = std::polar(scale, 2.0 * kPi / M * (m - 0.5) * n);
  return B;
}

/// Row indices of the `count` Butler beams with the lowest spatial frequency
/// |m - 1/2| (wrapped), returned in increasing order.
inline std::vector<int> lowest_order_beams(int M, int count) {
  require(count >= 1 && count <= M, ErrorCode::invalid_argument,
          "beam count must lie in [1, M]");
  std::vector<int> order(M);
  for (int m = 0; m < M; ++m) order[m] = m;
  auto freq = [M](int m) {
    double f = std::fmod(m - 0.5 + 0.5 * M, static_cast<double>(M));
    if (f < 0) f += M;
    return std::abs(f - 0.5 * M);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return freq(a) < freq(b); });
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

/// Emission indices kept by a K/P decimation: j = (K/P) * i, i = 0..P-1.
inline std::vector<int> decimation_indices(int K, int P) {
  require(P >= 1 && K >= P, ErrorCode::invalid_argument, "decimation needs 1 <= P <= K");
  require(K % P == 0, ErrorCode::invalid_argument,
          "decimation factor K/P must be an integer (K=" + std::to_string(K) +
              ", P=" + std::to_string(P) + ")");
  const int factor = K / P;
  std::vector<int> idx(P);
  for (int i = 0; i < P; ++i) idx[i] = factor * i;
  return idx;
}

/// K x P selection matrix with d(j, i) = 1 for j = (K/P) * i.
inline RMatrix decimation_matrix(int K, int P) {
  const auto idx = decimation_indices(K, P);
  RMatrix D = RMatrix::Zero(K, P);
  for (int i = 0; i < P; ++i) D(idx[i], i) = 1.0;
  return D;
}

/// Steering quantities for one set of directions.
struct SteeringSet {
  std::vector<double> angles;
  CMatrix A;     // M x K
  CMatrix A_bs;  // M x P, columns of A kept by D
  RMatrix D;     // K x P
  std::optional<CMatrix> B;

  static SteeringSet make(std::span<const double> angles, int M, int P,
                          double spacing_in_wavelengths = 0.5, bool with_butler = false) {
    SteeringSet s;
    s.angles.assign(angles.begin(), angles.end());
    s.A = steering_matrix(angles, M, spacing_in_wavelengths);
    const int K = static_cast<int>(angles.size());
    s.D = decimation_matrix(K, P);
    const auto idx = decimation_indices(K, P);
    s.A_bs.resize(M, P);
    for (int i = 0; i < P; ++i) s.A_bs.col(i) = s.A.col(idx[i]);
    if (with_butler) s.B = butler_matrix(M);
    return s;
  }
};

}  // namespace usbf
