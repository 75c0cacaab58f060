#pragma once

#include <string>
#include <vector>

namespace svf {

// Images are linear-light RGB doubles in memory. Gamma 2.2 is applied when
// writing 8-bit files and removed when reading them back.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data; // rgb interleaved, row-major

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

  double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

constexpr double kGamma = 2.2;

double linear_to_srgb_gamma(double v);
double srgb_gamma_to_linear(double v);

void save_ppm(const std::string& path, const Image& img);
Image load_ppm(const std::string& path);

// Grayscale helpers: values are clamped to [0,1] and written linearly (no gamma).
void save_pgm(const std::string& path, const std::vector<double>& values, int width, int height);
std::vector<double> load_pgm(const std::string& path, int& width, int& height);

// 16-bit PNG output; available when built with libpng. Returns false otherwise.
bool save_png16(const std::string& path, const Image& img);
bool png_supported();

} // namespace svf
