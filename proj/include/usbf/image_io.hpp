#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "usbf/classic_bf.hpp"
#include "usbf/cube.hpp"

namespace usbf {

inline constexpr std::array<char, 8> kImageMagic{'U', 'S', 'B', 'F', 'I', 'M', 'G', 'E'};
inline constexpr std::uint32_t kImageVersion = 1;

/// Binary image file: magic, version, kind, K, N, scan plan (mode, depth
/// range, focus, K line positions), sample grid, provenance as JSON text,
/// then K*N little-endian float64 (re, im) pairs, line by line.
inline void write_image(const RfImage& img, const std::filesystem::path& path) {
  auto os = binio::open_out(path);
  os.write(kImageMagic.data(), kImageMagic.size());
  binio::put<std::uint32_t>(os, kImageVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(img.kind));
  binio::put<std::uint32_t>(os, img.num_lines());
  binio::put<std::uint32_t>(os, img.num_samples());
  binio::put<std::uint32_t>(os, img.scan.mode == ScanMode::angle ? 1u : 0u);
  binio::put<double>(os, img.scan.depth_min);
  binio::put<double>(os, img.scan.depth_max);
  binio::put<double>(os, img.scan.focus_depth);
  for (double v : img.scan.lines) binio::put<double>(os, v);
  binio::put<std::int32_t>(os, img.grid.first_sample);
  binio::put<double>(os, img.grid.sampling_frequency);
  binio::put<double>(os, img.grid.sound_speed);
  const std::string prov = nlohmann::json(img.provenance).dump();
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(prov.size()));
  os.write(prov.data(), static_cast<std::streamsize>(prov.size()));
  for (int k = 0; k < img.num_lines(); ++k)
    for (int n = 0; n < img.num_samples(); ++n) {
      binio::put<double>(os, img.data(k, n).real());
      binio::put<double>(os, img.data(k, n).imag());
    }
  if (!os) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

inline RfImage read_image(const std::filesystem::path& path) {
  auto is = binio::open_in(path);
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kImageMagic)
    throw Error(ErrorCode::format_error, "not an image file: " + path.string());
  const auto version = binio::get<std::uint32_t>(is);
  if (version != kImageVersion)
    throw Error(ErrorCode::format_error, "unsupported image version " + std::to_string(version));
  RfImage img;
  const auto kind = binio::get<std::uint32_t>(is);
  if (kind > 2) throw Error(ErrorCode::format_error, "unknown image kind");
  img.kind = static_cast<ImageKind>(kind);
  const auto K = binio::get<std::uint32_t>(is);
  const auto N = binio::get<std::uint32_t>(is);
  if (K == 0 || N == 0 || K > (1u << 20) || N > (1u << 24))
    throw Error(ErrorCode::format_error, "implausible image dimensions");
  img.scan.mode = binio::get<std::uint32_t>(is) == 1u ? ScanMode::angle : ScanMode::lateral;
  img.scan.depth_min = binio::get<double>(is);
  img.scan.depth_max = binio::get<double>(is);
  img.scan.focus_depth = binio::get<double>(is);
  img.scan.lines.resize(K);
  for (auto& v : img.scan.lines) v = binio::get<double>(is);
  img.grid.first_sample = binio::get<std::int32_t>(is);
  img.grid.num_samples = static_cast<int>(N);
  img.grid.sampling_frequency = binio::get<double>(is);
  img.grid.sound_speed = binio::get<double>(is);
  const auto len = binio::get<std::uint32_t>(is);
  if (len > (1u << 24)) throw Error(ErrorCode::format_error, "implausible provenance length");
  std::string prov(len, '\0');
  is.read(prov.data(), len);
  if (!is) throw Error(ErrorCode::format_error, "truncated image header");
  try {
    img.provenance = nlohmann::json::parse(prov).get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format_error, std::string("bad provenance block: ") + e.what());
  }
  img.data.resize(K, N);
  for (std::uint32_t k = 0; k < K; ++k)
    for (std::uint32_t n = 0; n < N; ++n) {
      const double re = binio::get<double>(is);
      const double im = binio::get<double>(is);
      img.data(k, n) = cplx(re, im);
    }
  return img;
}

}  // namespace usbf
