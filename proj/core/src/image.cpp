#include "svf/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#ifdef SVF_HAVE_PNG
#include <png.h>
#endif

namespace svf {

double linear_to_srgb_gamma(double v) {
  return std::pow(std::clamp(v, 0.0, 1.0), 1.0 / kGamma);
}

double srgb_gamma_to_linear(double v) {
  return std::pow(std::clamp(v, 0.0, 1.0), kGamma);
}

namespace {

struct FileCloser {
  void operator()(FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

// Reads one whitespace/comment-delimited token of a PNM header.
std::string pnm_token(FILE* f) {
  std::string tok;
  int c;
  while ((c = std::fgetc(f)) != EOF) {
    if (c == '#') {
      while ((c = std::fgetc(f)) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw std::runtime_error("truncated PNM header");
  return tok;
}

} // namespace

void save_ppm(const std::string& path, const Image& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(f.get(), "P6\n%d %d\n255\n", img.width, img.height);
  std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double g = linear_to_srgb_gamma(img.at(x, y, c));
        row[static_cast<size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(g * 255.0));
      }
    }
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
      throw std::runtime_error("short write: " + path);
  }
}

Image load_ppm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open: " + path);
  if (pnm_token(f.get()) != "P6") throw std::runtime_error("not a P6 PPM: " + path);
  int w = std::stoi(pnm_token(f.get()));
  int h = std::stoi(pnm_token(f.get()));
  int maxval = std::stoi(pnm_token(f.get()));
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PPM header: " + path);
  Image img(w, h);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    if (std::fread(row.data(), 1, row.size(), f.get()) != row.size())
      throw std::runtime_error("short read: " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = srgb_gamma_to_linear(row[static_cast<size_t>(x) * 3 + c] / 255.0);
  }
  return img;
}

void save_pgm(const std::string& path, const std::vector<double>& values, int width, int height) {
  if (values.size() != static_cast<size_t>(width) * height)
    throw std::runtime_error("value count does not match dimensions: " + path);
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", width, height);
  std::vector<unsigned char> row(static_cast<size_t>(width));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = std::clamp(values[static_cast<size_t>(y) * width + x], 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size())
      throw std::runtime_error("short write: " + path);
  }
}

std::vector<double> load_pgm(const std::string& path, int& width, int& height) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open: " + path);
  if (pnm_token(f.get()) != "P5") throw std::runtime_error("not a P5 PGM: " + path);
  width = std::stoi(pnm_token(f.get()));
  height = std::stoi(pnm_token(f.get()));
  int maxval = std::stoi(pnm_token(f.get()));
  if (width <= 0 || height <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PGM header: " + path);
  std::vector<unsigned char> raw(static_cast<size_t>(width) * height);
  if (std::fread(raw.data(), 1, raw.size(), f.get()) != raw.size())
    throw std::runtime_error("short read: " + path);
  std::vector<double> values(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) values[i] = raw[i] / 255.0;
  return values;
}

bool png_supported() {
#ifdef SVF_HAVE_PNG
  return true;
#else
  return false;
#endif
}

bool save_png16(const std::string& path, const Image& img) {
#ifdef SVF_HAVE_PNG
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, 16, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_uint_16> row(static_cast<size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double g = linear_to_srgb_gamma(img.at(x, y, c));
        png_uint_16 v = static_cast<png_uint_16>(std::lround(g * 65535.0));
        // PNG 16-bit samples are big-endian.
        row[static_cast<size_t>(x) * 3 + c] =
            static_cast<png_uint_16>((v >> 8) | ((v & 0xFF) << 8));
      }
    }
    png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
#else
  (void)path;
  (void)img;
  return false;
#endif
}

} // namespace svf
