#pragma once

#include <map>
#include <string>
#include <vector>

#include "usbf/cube.hpp"
#include "usbf/parallel.hpp"

namespace usbf {

enum class ImageKind { rf, envelope, bmode };

inline std::string to_string(ImageKind k) {
  switch (k) {
    case ImageKind::rf: return "rf";
    case ImageKind::envelope: return "envelope";
    case ImageKind::bmode: return "bmode";
  }
  return "unknown";
}

/// Beamformed image on the (scanline, depth) grid. Row k is scanline k,
/// column n is depth sample n.
struct RfImage {
  CMatrix data;
  ImageKind kind = ImageKind::rf;
  ScanPlan scan;
  SampleGrid grid;
  std::map<std::string, std::string> provenance;

  int num_lines() const { return static_cast<int>(data.rows()); }
  int num_samples() const { return static_cast<int>(data.cols()); }

  bool operator==(const RfImage& o) const {
    return kind == o.kind && data.rows() == o.data.rows() && data.cols() == o.data.cols() &&
           data == o.data && provenance == o.provenance;
  }
};

enum class Apodization { none, hanning, hamming };

inline std::string to_string(Apodization a) {
  switch (a) {
    case Apodization::none: return "none";
    case Apodization::hanning: return "hanning";
    case Apodization::hamming: return "hamming";
  }
  return "unknown";
}

/// Receive weights normalized to unit sum. Hanning/Hamming use the
/// symmetric M-point definition; for Hanning the zero end points are dropped
/// by evaluating on M+2 points so every element contributes.
inline RVector apodization_weights(int M, Apodization kind) {
  require(M >= 1, ErrorCode::invalid_argument, "apodization needs M >= 1");
  RVector w(M);
  for (int m = 0; m < M; ++m) {
    switch (kind) {
      case Apodization::none: w(m) = 1.0; break;
      case Apodization::hanning: w(m) = 0.5 - 0.5 * std::cos(2.0 * kPi * (m + 1) / (M + 1)); break;
      case Apodization::hamming:
        w(m) = M == 1 ? 1.0 : 0.54 - 0.46 * std::cos(2.0 * kPi * m / (M - 1));
        break;
    }
  }
  return w / w.sum();
}

/// Delay-and-sum: line k, sample n is the weighted sum over channels of the
/// compensated cube. Lines not listed in `lines` (when non-empty) stay zero.
inline RfImage das_beamform(const RawDataCube& cube, Apodization apod, const ScanPlan& scan,
                            const SampleGrid& grid, const std::vector<int>& lines = {}) {
  require(cube.is_compensated, ErrorCode::invalid_argument,
          "delay-and-sum needs a delay-compensated cube");
  require(cube.emissions() == scan.num_lines() && cube.samples() == grid.num_samples,
          ErrorCode::dimension_mismatch, "cube does not match the scan plan");
  const int M = cube.channels();
  const int N = cube.samples();
  const RVector w = apodization_weights(M, apod);

  std::vector<int> todo = lines;
  if (todo.empty())
    for (int k = 0; k < cube.emissions(); ++k) todo.push_back(k);

  RfImage img;
  img.data = CMatrix::Zero(cube.emissions(), N);
  img.scan = scan;
  img.grid = grid;
  img.provenance["method"] = "das";
  img.provenance["apodization"] = to_string(apod);
  parallel_for(0, static_cast<int>(todo.size()), [&](int i) {
    const int k = todo[i];
    for (int m = 0; m < M; ++m) {
      const auto tr = cube.trace(m, k);
      for (int n = 0; n < N; ++n) img.data(k, n) += w(m) * cplx(tr[n].real(), tr[n].imag());
    }
  });
  return img;
}

/// Values of all scanlines at depth sample n.
inline CVector extract_lateral_scanline(const RfImage& img, int n) {
  require(n >= 0 && n < img.num_samples(), ErrorCode::index_out_of_range,
          "depth index " + std::to_string(n) + " outside [0, " +
              std::to_string(img.num_samples()) + ")");
  return img.data.col(n);
}

}  // namespace usbf
