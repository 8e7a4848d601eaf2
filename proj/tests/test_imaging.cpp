#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include <gtest/gtest.h>

#include "usbf/imaging.hpp"

using namespace usbf;

namespace {

RfImage rf_image(int K, int N) {
  RfImage img;
  img.scan = ScanPlan::uniform_lateral(K, 0.5e-3 * (K - 1), 0.030, 0.030 + 1e-3 * N, 0.035);
  img.grid.first_sample = 30;
  img.grid.num_samples = N;
  img.grid.sound_speed = 1540.0;
  img.grid.sampling_frequency = 770e3;  // 1 mm per sample
  img.data = CMatrix::Zero(K, N);
  img.provenance["method"] = "das";
  return img;
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "usbf_test_imaging";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Envelope, Modulus) {
  RfImage img = rf_image(2, 2);
  img.data(0, 0) = cplx(3.0, 4.0);
  img.data(1, 1) = cplx(0.0, -2.0);
  const RfImage env = envelope(img);
  EXPECT_EQ(env.kind, ImageKind::envelope);
  EXPECT_EQ(env.data(0, 0), cplx(5.0, 0.0));
  EXPECT_EQ(env.data(1, 1), cplx(2.0, 0.0));
  EXPECT_EQ(env.data(0, 1), cplx(0.0, 0.0));
  EXPECT_TRUE(envelope(rf_image(3, 4)).data.isZero(0.0));
  EXPECT_THROW(envelope(env), Error);
}

TEST(Envelope, GlobalPhaseInvariance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  RfImage img = rf_image(5, 6);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = cplx(g(rng), g(rng));
  RfImage rot = img;
  rot.data *= std::polar(1.0, 1.234);
  EXPECT_LT((envelope(rot).data - envelope(img).data).norm(), 1e-14);
}

TEST(LogCompress, DecadeAndClamp) {
  RfImage img = rf_image(3, 1);
  img.data(0, 0) = 1.0;
  img.data(1, 0) = 0.1;
  img.data(2, 0) = 1e-9;
  const auto b = log_compress(envelope(img), 60.0);
  EXPECT_DOUBLE_EQ(b.pixels(0, 0), 0.0);
  EXPECT_NEAR(b.pixels(1, 0), -20.0, 1e-12);
  EXPECT_DOUBLE_EQ(b.pixels(2, 0), -60.0);
  EXPECT_EQ(b.dynamic_range, 60.0);
}

TEST(LogCompress, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RfImage img = rf_image(7, 9);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = u(rng);
  RfImage scaled = img;
  scaled.data *= 1234.5;
  const auto a = log_compress(envelope(img), 40.0);
  const auto b = log_compress(envelope(scaled), 40.0);
  EXPECT_LT((a.pixels - b.pixels).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_DOUBLE_EQ(a.pixels.maxCoeff(), 0.0);
  EXPECT_GE(a.pixels.minCoeff(), -40.0);
}

TEST(LogCompress, RejectsZeroImageAndBadRange) {
  EXPECT_THROW(log_compress(envelope(rf_image(2, 2)), 60.0), Error);
  RfImage img = rf_image(2, 2);
  img.data.setOnes();
  EXPECT_THROW(log_compress(envelope(img), 0.0), Error);
}

TEST(Pgm, HeaderPixelsAndSidecar) {
  RfImage img = rf_image(3, 2);
  img.data(0, 0) = 1.0;
  img.data(1, 0) = 0.1;    // -20 dB
  img.data(2, 1) = 1e-6;   // clamped
  img.data(0, 1) = 0.001;  // -60 dB
  const auto path = temp_path("img.pgm");
  write_pgm(log_compress(envelope(img), 60.0), path);
  const std::string bytes = slurp(path);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  auto px = [&](int k, int n) { return static_cast<unsigned char>(bytes[header.size() + 3 * n + k]); };
  EXPECT_EQ(px(0, 0), 255);
  EXPECT_EQ(px(1, 0), 170);  // round(255 * 40 / 60)
  EXPECT_EQ(px(2, 0), 0);    // zero envelope
  EXPECT_EQ(px(0, 1), 0);
  EXPECT_EQ(px(2, 1), 0);

  const auto meta = nlohmann::json::parse(slurp(path.string() + ".json"));
  EXPECT_EQ(meta.at("width"), 3);
  EXPECT_EQ(meta.at("height"), 2);
  EXPECT_EQ(meta.at("dynamic_range_db"), 60.0);
  EXPECT_EQ(meta.at("provenance").at("method"), "das");
  EXPECT_EQ(meta.at("scan_mode"), "lateral");
  EXPECT_NEAR(meta.at("depth_first_m").get<double>(), 0.030, 1e-12);
  EXPECT_NEAR(meta.at("depth_last_m").get<double>(), 0.031, 1e-12);
  EXPECT_NEAR(meta.at("lateral_first_m").get<double>(), -1e-3, 1e-12);
}

TEST(Pgm, UnwritablePathIsIoError) {
  RfImage img = rf_image(2, 2);
  img.data.setOnes();
  try {
    write_pgm(log_compress(envelope(img)), "/nonexistent_dir_usbf/x.pgm");
    FAIL() << "expected io_error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io_error);
  }
}

TEST(Profile, ConstantImageIsFlat) {
  RfImage img = rf_image(9, 20);
  img.data.setConstant(3.0);
  const auto p = lateral_profile(envelope(img), 0.040, 5);
  ASSERT_EQ(p.size(), 9u);
  for (int k = 0; k < 9; ++k) {
    EXPECT_DOUBLE_EQ(p[k].amplitude_db, 0.0);
    EXPECT_NEAR(p[k].lateral, 1e-3 * (k - 4), 1e-12);
  }
}

TEST(Profile, AveragesCenteredWindow) {
  RfImage img = rf_image(2, 20);
  // Line 0 constant 1; line 1 ramps with depth so its window mean is known.
  for (int n = 0; n < 20; ++n) {
    img.data(0, n) = 1.0;
    img.data(1, n) = 0.1 * n;
  }
  // 40 mm is sample 10; three samples 9..11 average 1.0 on line 1.
  const auto p = lateral_profile(envelope(img), 0.040, 3);
  EXPECT_NEAR(p[0].amplitude_db, 0.0, 1e-12);
  EXPECT_NEAR(p[1].amplitude_db, 0.0, 1e-12);
  const auto q = lateral_profile(envelope(img), 0.035, 1);  // sample 5
  EXPECT_NEAR(q[1].amplitude_db, 20.0 * std::log10(0.5), 1e-12);
}

TEST(Profile, DepthOutsideImage) {
  RfImage img = rf_image(3, 10);
  img.data.setOnes();
  for (double depth : {0.020, 0.045}) {
    try {
      lateral_profile(envelope(img), depth, 1);
      FAIL() << "depth " << depth << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::index_out_of_range);
    }
  }
  EXPECT_THROW(lateral_profile(envelope(img), 0.030, 3), Error);  // window clipped
}

TEST(Profile, CsvFormat) {
  RfImage img = rf_image(2, 5);
  img.data.setOnes();
  img.data(1, 2) = 0.1;
  const auto path = temp_path("profile.csv");
  write_profile_csv(lateral_profile(envelope(img), 0.032), path);
  EXPECT_EQ(slurp(path), "lateral_m,amplitude_db\n-0.0005,0.000000\n0.0005,-20.000000\n");
}
