#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "usbf/scan.hpp"

namespace usbf {

/// Channel data of shape M x N x K (channels x samples x emissions).
/// Storage is single precision, traces contiguous: index ((k*M + m)*N + n).
class RawDataCube {
 public:
  RawDataCube() = default;
  RawDataCube(int channels, int samples, int emissions, double sampling_frequency,
              int first_sample = 0)
      : M_(channels), N_(samples), K_(emissions), fs_(sampling_frequency),
        first_sample_(first_sample),
        data_(static_cast<std::size_t>(channels) * samples * emissions) {
    require(channels >= 1 && samples >= 1 && emissions >= 1, ErrorCode::invalid_argument,
            "cube dimensions must be positive");
    require(sampling_frequency > 0.0, ErrorCode::invalid_argument,
            "sampling frequency must be positive");
  }

  int channels() const { return M_; }
  int samples() const { return N_; }
  int emissions() const { return K_; }
  double sampling_frequency() const { return fs_; }
  int first_sample() const { return first_sample_; }
  double t0() const { return first_sample_ / fs_; }

  bool is_analytic = false;
  bool is_compensated = false;

  cplxf& at(int m, int n, int k) { return data_[offset(m, k) + n]; }
  const cplxf& at(int m, int n, int k) const { return data_[offset(m, k) + n]; }

  std::span<cplxf> trace(int m, int k) { return {data_.data() + offset(m, k), std::size_t(N_)}; }
  std::span<const cplxf> trace(int m, int k) const {
    return {data_.data() + offset(m, k), std::size_t(N_)};
  }

  /// Emission k viewed as an N x M column-major matrix (column m = channel m).
  Eigen::Map<const Eigen::MatrixXcf> emission(int k) const {
    return {data_.data() + offset(0, k), N_, M_};
  }
  Eigen::Map<Eigen::MatrixXcf> emission(int k) { return {data_.data() + offset(0, k), N_, M_}; }

  std::vector<cplxf>& data() { return data_; }
  const std::vector<cplxf>& data() const { return data_; }

  /// Same dimensions, flags and sampling, zero data.
  RawDataCube zeros_like() const {
    RawDataCube out(M_, N_, K_, fs_, first_sample_);
    out.is_analytic = is_analytic;
    out.is_compensated = is_compensated;
    return out;
  }

  bool operator==(const RawDataCube& o) const {
    return M_ == o.M_ && N_ == o.N_ && K_ == o.K_ && fs_ == o.fs_ &&
           first_sample_ == o.first_sample_ && is_analytic == o.is_analytic &&
           is_compensated == o.is_compensated && data_ == o.data_;
  }

 private:
  std::size_t offset(int m, int k) const {
    return (static_cast<std::size_t>(k) * M_ + m) * static_cast<std::size_t>(N_);
  }

  int M_ = 0, N_ = 0, K_ = 0;
  double fs_ = 1.0;
  int first_sample_ = 0;
  std::vector<cplxf> data_;
};

namespace binio {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
  }
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorCode::format_error, "unexpected end of file");
  return to_little(v);
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::io_error, "cannot open for writing: " + path.string());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::io_error, "cannot open for reading: " + path.string());
  return is;
}

}  // namespace binio

inline constexpr std::array<char, 8> kCubeMagic{'U', 'S', 'B', 'F', 'C', 'U', 'B', 'E'};
inline constexpr std::uint32_t kCubeVersion = 1;
inline constexpr std::uint32_t kLayoutChannelMajor = 0;

/// Binary cube file: magic, version, M, N, K, fs, t0, first_sample, flags,
/// layout, then little-endian float32 samples (re,im pairs when analytic,
/// real singles otherwise) in trace order.
inline void write_cube(const RawDataCube& cube, const std::filesystem::path& path) {
  auto os = binio::open_out(path);
  os.write(kCubeMagic.data(), kCubeMagic.size());
  binio::put<std::uint32_t>(os, kCubeVersion);
  binio::put<std::uint32_t>(os, cube.channels());
  binio::put<std::uint32_t>(os, cube.samples());
  binio::put<std::uint32_t>(os, cube.emissions());
  binio::put<double>(os, cube.sampling_frequency());
  binio::put<double>(os, cube.t0());
  binio::put<std::int32_t>(os, cube.first_sample());
  const std::uint32_t flags = (cube.is_analytic ? 1u : 0u) | (cube.is_compensated ? 2u : 0u);
  binio::put<std::uint32_t>(os, flags);
  binio::put<std::uint32_t>(os, kLayoutChannelMajor);

  const bool complex_samples = cube.is_analytic;
  std::vector<float> buf;
  buf.reserve(cube.data().size() * (complex_samples ? 2 : 1));
  for (const auto& v : cube.data()) {
    buf.push_back(binio::to_little(v.real()));
    if (complex_samples) buf.push_back(binio::to_little(v.imag()));
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

inline RawDataCube read_cube(const std::filesystem::path& path) {
  auto is = binio::open_in(path);
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCubeMagic) throw Error(ErrorCode::format_error, "not a cube file: " + path.string());
  const auto version = binio::get<std::uint32_t>(is);
  if (version != kCubeVersion)
    throw Error(ErrorCode::format_error, "unsupported cube version " + std::to_string(version));
  const auto M = binio::get<std::uint32_t>(is);
  const auto N = binio::get<std::uint32_t>(is);
  const auto K = binio::get<std::uint32_t>(is);
  const auto fs = binio::get<double>(is);
  (void)binio::get<double>(is);  // t0, redundant with first_sample
  const auto first = binio::get<std::int32_t>(is);
  const auto flags = binio::get<std::uint32_t>(is);
  const auto layout = binio::get<std::uint32_t>(is);
  if (layout != kLayoutChannelMajor) throw Error(ErrorCode::format_error, "unknown cube layout");
  if (M == 0 || N == 0 || K == 0) throw Error(ErrorCode::format_error, "empty cube dimensions");

  RawDataCube cube(static_cast<int>(M), static_cast<int>(N), static_cast<int>(K), fs, first);
  cube.is_analytic = flags & 1u;
  cube.is_compensated = flags & 2u;
  const std::size_t count = cube.data().size() * (cube.is_analytic ? 2 : 1);
  std::vector<float> buf(count);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!is) throw Error(ErrorCode::format_error, "truncated cube payload: " + path.string());
  std::size_t j = 0;
  for (auto& v : cube.data()) {
    const float re = binio::to_little(buf[j++]);
    const float im = cube.is_analytic ? binio::to_little(buf[j++]) : 0.0f;
    v = cplxf(re, im);
  }
  return cube;
}

}  // namespace usbf
