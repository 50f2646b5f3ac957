#pragma once

#include "mcl/tensor.hpp"

namespace mcl {

// 10*log10(peak^2 / mse), capped at 100 dB when mse < 1e-12 so identical
// images never produce infinities in logs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean structural similarity over all fully interior 11x11 windows
// (Gaussian weighting, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2 on the [0,1]
// range). Requires spatial dims >= 11.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace mcl
