#include "svf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace svf {

namespace {

void require_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("image size mismatch");
  }
}

std::vector<double> luma_of(const Image& img) {
  std::vector<double> out(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out[static_cast<size_t>(y) * img.width + x] =
          0.2126 * img.at(x, y, 0) + 0.7152 * img.at(x, y, 1) + 0.0722 * img.at(x, y, 2);
    }
  }
  return out;
}

} // namespace

double image_mse(const Image& a, const Image& b) {
  require_same_size(a, b);
  if (a.data.empty()) {
    throw std::invalid_argument("image_mse on empty images");
  }
  double sum = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  double mse = image_mse(a, b);
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b);
  const std::vector<double> la = luma_of(a);
  const std::vector<double> lb = luma_of(b);
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;

  const int win = 11;
  const double sigma = 1.5;
  std::vector<double> kernel(static_cast<size_t>(win) * win);
  double ksum = 0.0;
  for (int v = 0; v < win; ++v) {
    for (int u = 0; u < win; ++u) {
      double du = u - (win - 1) / 2.0;
      double dv = v - (win - 1) / 2.0;
      double k = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
      kernel[static_cast<size_t>(v) * win + u] = k;
      ksum += k;
    }
  }
  for (double& k : kernel) k /= ksum;

  // Tiny images get one uniform global window instead of a sliding one.
  if (a.width < win || a.height < win) {
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < la.size(); ++i) {
      ma += la[i];
      mb += lb[i];
    }
    ma /= static_cast<double>(la.size());
    mb /= static_cast<double>(lb.size());
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (size_t i = 0; i < la.size(); ++i) {
      va += (la[i] - ma) * (la[i] - ma);
      vb += (lb[i] - mb) * (lb[i] - mb);
      cov += (la[i] - ma) * (lb[i] - mb);
    }
    va /= static_cast<double>(la.size());
    vb /= static_cast<double>(lb.size());
    cov /= static_cast<double>(la.size());
    return ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }

  double total = 0.0;
  int count = 0;
  for (int y = 0; y + win <= a.height; ++y) {
    for (int x = 0; x + win <= a.width; ++x) {
      double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int v = 0; v < win; ++v) {
        for (int u = 0; u < win; ++u) {
          double k = kernel[static_cast<size_t>(v) * win + u];
          double pa = la[static_cast<size_t>(y + v) * a.width + (x + u)];
          double pb = lb[static_cast<size_t>(y + v) * a.width + (x + u)];
          ma += k * pa;
          mb += k * pb;
          saa += k * pa * pa;
          sbb += k * pb * pb;
          sab += k * pa * pb;
        }
      }
      double va = saa - ma * ma;
      double vb = sbb - mb * mb;
      double cov = sab - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Image downsample2x(const Image& img) {
  Image out(img.width / 2, img.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                  img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
      }
    }
  }
  return out;
}

} // namespace svf
