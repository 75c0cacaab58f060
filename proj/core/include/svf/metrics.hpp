#pragma once

#include "svf/image.hpp"

namespace svf {

// Mean squared error over all channels of two equally sized linear images.
// Throws std::invalid_argument on a size mismatch.
double image_mse(const Image& a, const Image& b);

// 10 * log10(1 / mse) for [0,1] images, capped at 99 dB so identical images
// stay finite.
double psnr(const Image& a, const Image& b);

// Mean structural similarity over luma with an 11x11 Gaussian window
// (sigma 1.5), averaged over fully valid window positions only. Images
// smaller than the window fall back to a single global window.
double ssim(const Image& a, const Image& b);

// Box-filter 2x downsample; odd trailing rows or columns are dropped.
Image downsample2x(const Image& img);

} // namespace svf
