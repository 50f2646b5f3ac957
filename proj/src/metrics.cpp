#include "mcl/metrics.hpp"

#include <array>
#include <cmath>

namespace mcl {

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + a.shape().str() +
                         " and " + b.shape().str() + " differ");
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  const int r = kWin / 2;
  double sum = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v =
          std::exp(-static_cast<double>(x * x + y * y) /
                   (2.0 * kSigma * kSigma));
      w[(y + r) * kWin + (x + r)] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same("psnr", a, b);
  const double mse = (a.array() - b.array()).square().mean();
  if (mse < 1e-12) return 100.0;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
  require_same("ssim", a, b);
  const Shape& s = a.shape();
  if (s.h < kWin || s.w < kWin)
    throw DimensionError("ssim: image " + s.str() +
                         " is smaller than the 11x11 window");

  static const std::array<double, kWin * kWin> w = gaussian_window();

  double total = 0.0;
  long windows = 0;
  for (long n = 0; n < s.n; ++n)
    for (long c = 0; c < s.c; ++c) {
      const double* pa = a.raw() + (n * s.c + c) * s.h * s.w;
      const double* pb = b.raw() + (n * s.c + c) * s.h * s.w;
      for (long y0 = 0; y0 + kWin <= s.h; ++y0)
        for (long x0 = 0; x0 + kWin <= s.w; ++x0) {
          double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
          for (int dy = 0; dy < kWin; ++dy)
            for (int dx = 0; dx < kWin; ++dx) {
              const double wv = w[dy * kWin + dx];
              const double va = pa[(y0 + dy) * s.w + (x0 + dx)];
              const double vb = pb[(y0 + dy) * s.w + (x0 + dx)];
              mx += wv * va;
              my += wv * vb;
              xx += wv * va * va;
              yy += wv * vb * vb;
              xy += wv * va * vb;
            }
          const double vx = xx - mx * mx;
          const double vy = yy - my * my;
          const double cxy = xy - mx * my;
          const double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
          const double den =
              (mx * mx + my * my + kC1) * (vx + vy + kC2);
          total += num / den;
          ++windows;
        }
    }
  return total / static_cast<double>(windows);
}

}  // namespace mcl
