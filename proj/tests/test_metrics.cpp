#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "svf/image.hpp"
#include "svf/metrics.hpp"

using namespace svf;

namespace {

Image checker(int w, int h, double a, double b) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = ((x + y) % 2 == 0) ? a : b;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  }
  return img;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("mse matches a hand computation and rejects size mismatches") {
  Image a(2, 1);
  Image b(2, 1);
  // Differences: pixel 0 all channels +0.1, pixel 1 channel 2 is -0.4.
  for (int c = 0; c < 3; ++c) a.at(0, 0, c) = 0.6;
  for (int c = 0; c < 3; ++c) b.at(0, 0, c) = 0.5;
  b.at(1, 0, 2) = 0.4;
  double expect = (3 * 0.1 * 0.1 + 0.4 * 0.4) / 6.0;
  CHECK(image_mse(a, b) == doctest::Approx(expect).epsilon(1e-12));

  Image wrong(3, 1);
  CHECK_THROWS(image_mse(a, wrong));
}

TEST_CASE("psnr caps at 99 for identical images and hits 20 dB at 0.1 error") {
  Image a = checker(8, 8, 0.2, 0.7);
  CHECK(psnr(a, a) == doctest::Approx(99.0).epsilon(1e-12));

  Image b = a;
  for (double& v : b.data) v += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("ssim is 1 for identical images and degrades with noise") {
  Image a = checker(32, 32, 0.25, 0.75);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  Image noisy = a;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-0.2, 0.2);
  for (double& v : noisy.data) v = std::clamp(v + dist(rng), 0.0, 1.0);
  double s = ssim(a, noisy);
  CHECK(s < 0.99);
  CHECK(s > -1.0);
  // A tiny image falls back to one global window instead of throwing.
  Image small = checker(4, 4, 0.1, 0.9);
  CHECK(ssim(small, small) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("2x downsample averages blocks and drops odd edges") {
  Image img(5, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 5; ++x) {
      img.at(x, y, 0) = x;
      img.at(x, y, 1) = y;
      img.at(x, y, 2) = 10.0 * x + y;
    }
  }
  Image down = downsample2x(img);
  REQUIRE(down.width == 2);
  REQUIRE(down.height == 1);
  // Block (0,0) covers x in {0,1}, y in {0,1}.
  CHECK(down.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(down.at(0, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(down.at(1, 0, 0) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(down.at(1, 0, 2) == doctest::Approx(25.5).epsilon(1e-12));
}

TEST_CASE("gamma helpers are inverses on the unit interval") {
  for (double v : {0.0, 0.01, 0.2, 0.5, 0.73, 1.0}) {
    CHECK(srgb_gamma_to_linear(linear_to_srgb_gamma(v)) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("ppm files round-trip up to 8-bit quantization") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "svf_test_roundtrip.ppm";

  Image img(6, 4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& v : img.data) v = dist(rng);

  save_ppm(path.string(), img);
  Image back = load_ppm(path.string());
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  // One quantization step in gamma space bounds the linear error loosely.
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(std::fabs(back.data[i] - img.data[i]) < 0.02);
  }

  // Quantization is idempotent: a second trip is bit-exact.
  save_ppm(path.string(), back);
  Image twice = load_ppm(path.string());
  CHECK(std::memcmp(twice.data.data(), back.data.data(),
                    back.data.size() * sizeof(double)) == 0);
  fs::remove(path);
  CHECK_THROWS(load_ppm(path.string()));
}

TEST_CASE("pgm files round-trip grayscale buffers") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "svf_test_roundtrip.pgm";

  std::vector<double> values = {0.0, 0.25, 0.5, 0.75, 1.0, 0.1};
  save_pgm(path.string(), values, 3, 2);
  int w = 0, h = 0;
  std::vector<double> back = load_pgm(path.string(), w, h);
  REQUIRE(w == 3);
  REQUIRE(h == 2);
  REQUIRE(back.size() == values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    CHECK(std::fabs(back[i] - values[i]) < 1.0 / 254.0);
  }
  fs::remove(path);
}

TEST_CASE("png output agrees with the support flag") {
  namespace fs = std::filesystem;
  fs::path path = fs::temp_directory_path() / "svf_test_out.png";
  Image img = checker(8, 8, 0.3, 0.6);
  bool wrote = save_png16(path.string(), img);
  CHECK(wrote == png_supported());
  if (wrote) {
    CHECK(fs::file_size(path) > 0);
    fs::remove(path);
  }
}

} // TEST_SUITE
