#include "mcl/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mcl/rng.hpp"

namespace mcl {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

long clamp_idx(long i, long n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Smooth pseudo-random field: a small sum of seeded cosine products. Shared
// by the clean-image base layer and the haze depth field.
void fill_cosine_field(double* plane, long h, long w, Rng& rng) {
  struct Wave {
    double a, fx, fy, px, py;
  };
  Wave waves[3];
  for (Wave& wv : waves) {
    wv.a = rng.range(0.5, 1.0);
    wv.fx = rng.range(0.5, 2.0);
    wv.fy = rng.range(0.5, 2.0);
    wv.px = rng.range(0.0, 2.0 * kPi);
    wv.py = rng.range(0.0, 2.0 * kPi);
  }
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double v = 0.0;
      for (const Wave& wv : waves)
        v += wv.a *
             std::cos(2.0 * kPi * wv.fx * static_cast<double>(x) / w + wv.px) *
             std::cos(2.0 * kPi * wv.fy * static_cast<double>(y) / h + wv.py);
      plane[y * w + x] = v;
    }
}

void normalize_field(double* plane, long n, double lo, double hi) {
  double mn = plane[0], mx = plane[0];
  for (long i = 1; i < n; ++i) {
    mn = std::min(mn, plane[i]);
    mx = std::max(mx, plane[i]);
  }
  if (mx == mn) {
    std::fill(plane, plane + n, 0.5 * (lo + hi));
    return;
  }
  const double s = (hi - lo) / (mx - mn);
  for (long i = 0; i < n; ++i) plane[i] = lo + (plane[i] - mn) * s;
}

void synth_plane(double* plane, long size, Rng& rng) {
  fill_cosine_field(plane, size, size, rng);
  normalize_field(plane, size * size, 0.1, 0.9);

  const long n_rect = 2 + static_cast<long>(rng.below(3));
  for (long r = 0; r < n_rect; ++r) {
    const long x0 = static_cast<long>(rng.below(size));
    const long y0 = static_cast<long>(rng.below(size));
    const long rw = rng.int_range(size / 8, size / 3);
    const long rh = rng.int_range(size / 8, size / 3);
    const double v = rng.range(0.0, 1.0);
    for (long y = y0; y < std::min(y0 + rh, size); ++y)
      for (long x = x0; x < std::min(x0 + rw, size); ++x)
        plane[y * size + x] = v;
  }

  const long n_disk = 1 + static_cast<long>(rng.below(3));
  for (long d = 0; d < n_disk; ++d) {
    const long cx = static_cast<long>(rng.below(size));
    const long cy = static_cast<long>(rng.below(size));
    const long rad = rng.int_range(size / 10, size / 4);
    const double v = rng.range(0.0, 1.0);
    for (long y = std::max(0L, cy - rad); y <= std::min(size - 1, cy + rad);
         ++y)
      for (long x = std::max(0L, cx - rad); x <= std::min(size - 1, cx + rad);
           ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
          plane[y * size + x] = v;
  }

  const long n_stroke = 2 + static_cast<long>(rng.below(3));
  for (long s = 0; s < n_stroke; ++s) {
    const double x0 = rng.range(0.0, static_cast<double>(size));
    const double y0 = rng.range(0.0, static_cast<double>(size));
    const double ang = rng.range(0.0, 2.0 * kPi);
    const long len = rng.int_range(size / 4, 3 * size / 4);
    const double v = rng.range(0.0, 1.0);
    const double dx = std::cos(ang), dy = std::sin(ang);
    for (long i = 0; i < len; ++i) {
      const long px = std::lround(x0 + i * dx);
      const long py = std::lround(y0 + i * dy);
      if (px >= 0 && px < size && py >= 0 && py < size)
        plane[py * size + px] = v;
    }
  }

  for (long i = 0; i < size * size; ++i) plane[i] = clamp01(plane[i]);
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::SR2x:
      return "sr2x";
    case Task::SR4x:
      return "sr4x";
    case Task::Haze:
      return "haze";
    case Task::Rain:
      return "rain";
    case Task::Blur:
      return "blur";
  }
  throw ContractError("unreachable task");
}

Task task_from_string(const std::string& s) {
  if (s == "sr2x") return Task::SR2x;
  if (s == "sr4x") return Task::SR4x;
  if (s == "haze") return Task::Haze;
  if (s == "rain") return Task::Rain;
  if (s == "blur") return Task::Blur;
  throw ConfigError("unknown task '" + s +
                    "' (expected sr2x, sr4x, haze, rain or blur)");
}

void DatasetSpec::validate() const {
  if (count < 1) throw ConfigError("dataset.count must be >= 1");
  if (size < 16) throw ConfigError("dataset.size must be >= 16");
  if (channels != 1 && channels != 3)
    throw ConfigError("dataset.channels must be 1 or 3");
  if (task == Task::SR2x && size % 2 != 0)
    throw ConfigError("dataset.size must be even for the sr2x task");
  if (task == Task::SR4x && size % 4 != 0)
    throw ConfigError("dataset.size must be divisible by 4 for sr4x");
  auto range_ok = [](double lo, double hi, double dom_lo, double dom_hi) {
    return lo <= hi && lo >= dom_lo && hi <= dom_hi;
  };
  if (!range_ok(beta_min, beta_max, 0.4, 2.0))
    throw ConfigError("haze beta range must lie inside [0.4, 2.0]");
  if (!range_ok(airlight_min, airlight_max, 0.7, 1.0))
    throw ConfigError("haze airlight range must lie inside [0.7, 1.0]");
  if (!(density_min > 0.0) || !range_ok(density_min, density_max, 0.0, 0.2))
    throw ConfigError("rain density range must lie inside (0, 0.2]");
  if (angle_min > angle_max)
    throw ConfigError("rain angle range is inverted");
  if (!range_ok(sigma_min, sigma_max, 0.5, 3.0))
    throw ConfigError("blur sigma range must lie inside [0.5, 3.0]");
}

Tensor synth_clean(int size, std::uint64_t seed) {
  return synth_clean(size, 1, seed);
}

Tensor synth_clean(int size, int channels, std::uint64_t seed) {
  if (size < 16) throw ConfigError("clean image size must be >= 16");
  if (channels != 1 && channels != 3)
    throw ConfigError("clean image channels must be 1 or 3");
  Tensor img = Tensor::zeros({1, channels, size, size});
  for (int c = 0; c < channels; ++c) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    synth_plane(img.raw() + static_cast<long>(c) * size * size, size, rng);
  }
  return img;
}

std::array<double, 4> bicubic_weights(double frac) {
  // Catmull-Rom: a = -0.5. Taps sit at offsets {-1, 0, 1, 2} from the
  // integer base, so their distances to the sample are {1+f, f, 1-f, 2-f}.
  auto near = [](double d) { return (1.5 * d - 2.5) * d * d + 1.0; };
  auto far = [](double d) { return ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0; };
  return {far(1.0 + frac), near(frac), near(1.0 - frac), far(2.0 - frac)};
}

namespace {

// One separable resampling pass along the row axis of a (rows x cols)
// plane; columns are untouched. Used twice with a transpose-free swap of
// roles by resampling rows, then rows of the transposed intermediate.
void resample_rows(const double* in, long rows, long cols, double scale,
                   long out_rows, double* out) {
  for (long o = 0; o < out_rows; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const double base = std::floor(src);
    const long i0 = static_cast<long>(base);
    const std::array<double, 4> w = bicubic_weights(src - base);
    const long idx[4] = {clamp_idx(i0 - 1, rows), clamp_idx(i0, rows),
                         clamp_idx(i0 + 1, rows), clamp_idx(i0 + 2, rows)};
    for (long x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += w[k] * in[idx[k] * cols + x];
      out[o * cols + x] = acc;
    }
  }
}

void transpose(const double* in, long rows, long cols, double* out) {
  for (long y = 0; y < rows; ++y)
    for (long x = 0; x < cols; ++x) out[x * rows + y] = in[y * cols + x];
}

}  // namespace

Tensor bicubic_resample(const Tensor& img, double scale) {
  if (scale != 0.25 && scale != 0.5 && scale != 2.0 && scale != 4.0) {
    std::ostringstream os;
    os << "bicubic scale must be one of 1/4, 1/2, 2, 4; got " << scale;
    throw ConfigError(os.str());
  }
  const Shape& s = img.shape();
  const double ho_f = s.h * scale, wo_f = s.w * scale;
  const long ho = std::lround(ho_f), wo = std::lround(wo_f);
  if (std::abs(ho_f - ho) > 1e-9 || std::abs(wo_f - wo) > 1e-9 || ho < 1 ||
      wo < 1) {
    std::ostringstream os;
    os << "bicubic output size is not integral: " << s.h << "x" << s.w
       << " at scale " << scale;
    throw ConfigError(os.str());
  }

  Tensor out = Tensor::zeros({s.n, s.c, ho, wo});
  std::vector<double> pass1(static_cast<std::size_t>(ho) * s.w);
  std::vector<double> pass1t(static_cast<std::size_t>(s.w) * ho);
  std::vector<double> pass2(static_cast<std::size_t>(wo) * ho);
  for (long b = 0; b < s.n; ++b)
    for (long c = 0; c < s.c; ++c) {
      const double* plane = img.raw() + (b * s.c + c) * s.h * s.w;
      resample_rows(plane, s.h, s.w, scale, ho, pass1.data());
      transpose(pass1.data(), ho, s.w, pass1t.data());
      resample_rows(pass1t.data(), s.w, ho, scale, wo, pass2.data());
      double* dst = out.raw() + (b * s.c + c) * ho * wo;
      // pass2 is (wo x ho): transpose back while clamping
      for (long y = 0; y < ho; ++y)
        for (long x = 0; x < wo; ++x)
          dst[y * wo + x] = clamp01(pass2[x * ho + y]);
    }
  return out;
}

Tensor depth_field(long h, long w, std::uint64_t seed) {
  Tensor d = Tensor::zeros({1, 1, h, w});
  Rng rng(seed);
  fill_cosine_field(d.raw(), h, w, rng);
  normalize_field(d.raw(), h * w, 0.0, 1.0);
  return d;
}

Tensor haze_with_depth(const Tensor& img, const Tensor& depth, double beta,
                       double airlight) {
  const Shape& s = img.shape();
  if (depth.shape().h != s.h || depth.shape().w != s.w)
    throw DimensionError("haze: depth field spatial size " +
                         depth.shape().str() + " does not match image " +
                         s.str());
  Tensor out = Tensor::zeros(s);
  const double* d = depth.raw();
  for (long b = 0; b < s.n; ++b)
    for (long c = 0; c < s.c; ++c) {
      const double* src = img.raw() + (b * s.c + c) * s.h * s.w;
      double* dst = out.raw() + (b * s.c + c) * s.h * s.w;
      for (long i = 0; i < s.h * s.w; ++i) {
        const double t = std::exp(-beta * d[i]);
        dst[i] = clamp01(src[i] * t + airlight * (1.0 - t));
      }
    }
  return out;
}

Tensor apply_haze(const Tensor& img, double beta, double airlight,
                  std::uint64_t seed) {
  // beta == 0 is the explicit "no haze" degenerate case; anything else
  // must sit in the physically sensible band.
  if (beta != 0.0 && (beta < 0.4 || beta > 2.0)) {
    std::ostringstream os;
    os << "haze beta must be 0 or in [0.4, 2.0], got " << beta;
    throw ConfigError(os.str());
  }
  if (airlight < 0.7 || airlight > 1.0) {
    std::ostringstream os;
    os << "haze airlight must lie in [0.7, 1.0], got " << airlight;
    throw ConfigError(os.str());
  }
  return haze_with_depth(img, depth_field(img.shape().h, img.shape().w, seed),
                         beta, airlight);
}

Tensor apply_rain(const Tensor& img, double density, double angle_deg,
                  std::uint64_t seed) {
  if (density == 0.0) return img.clone_detached();  // explicit identity
  if (density < 0.0 || density > 0.2) {
    std::ostringstream os;
    os << "rain density must be 0 or in (0, 0.2], got " << density;
    throw ConfigError(os.str());
  }
  const Shape& s = img.shape();
  Tensor out = img.clone_detached();
  Rng rng(seed);
  const double rad = angle_deg * kPi / 180.0;
  const double dx = std::sin(rad), dy = std::cos(rad);
  // one streak covers ~12 pixels on average, so this hits roughly
  // `density` coverage
  const long streaks = std::max<long>(
      1, std::llround(density * static_cast<double>(s.h * s.w) / 12.0));
  for (long k = 0; k < streaks; ++k) {
    const double x0 = rng.range(0.0, static_cast<double>(s.w));
    const double y0 = rng.range(0.0, static_cast<double>(s.h));
    const long len = rng.int_range(8, 16);
    const double bright = rng.range(0.2, 0.5);
    for (long i = 0; i < len; ++i) {
      const long px = std::lround(x0 + i * dx);
      const long py = std::lround(y0 + i * dy);
      if (px < 0 || px >= s.w || py < 0 || py >= s.h) continue;
      for (long b = 0; b < s.n; ++b)
        for (long c = 0; c < s.c; ++c)
          out.at(b, c, py, px) += bright;
    }
  }
  out.array() = out.array().min(1.0).max(0.0);
  return out;
}

Tensor apply_blur(const Tensor& img, double sigma) {
  if (sigma < 0.5 || sigma > 3.0) {
    std::ostringstream os;
    os << "blur sigma must lie in [0.5, 3.0], got " << sigma;
    throw ConfigError(os.str());
  }
  const long r = std::max<long>(1, static_cast<long>(std::floor(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (long i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;

  const Shape& s = img.shape();
  Tensor out = Tensor::zeros(s);
  std::vector<double> tmp(static_cast<std::size_t>(s.h) * s.w);
  for (long b = 0; b < s.n; ++b)
    for (long c = 0; c < s.c; ++c) {
      const double* src = img.raw() + (b * s.c + c) * s.h * s.w;
      double* dst = out.raw() + (b * s.c + c) * s.h * s.w;
      // horizontal pass
      for (long y = 0; y < s.h; ++y)
        for (long x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (long i = -r; i <= r; ++i)
            acc += k[i + r] * src[y * s.w + clamp_idx(x + i, s.w)];
          tmp[y * s.w + x] = acc;
        }
      // vertical pass
      for (long y = 0; y < s.h; ++y)
        for (long x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (long i = -r; i <= r; ++i)
            acc += k[i + r] * tmp[clamp_idx(y + i, s.h) * s.w + x];
          dst[y * s.w + x] = clamp01(acc);
        }
    }
  return out;
}

Tensor quantize8(const Tensor& img) {
  Tensor out = Tensor::zeros(img.shape());
  const double* src = img.raw();
  double* dst = out.raw();
  for (long i = 0; i < img.numel(); ++i)
    dst[i] = static_cast<double>(std::lround(clamp01(src[i]) * 255.0)) / 255.0;
  return out;
}

Tensor reapply(const Tensor& hq, const DegradeMeta& meta) {
  switch (meta.task) {
    case Task::SR2x:
      return bicubic_resample(bicubic_resample(hq, 0.5), 2.0);
    case Task::SR4x:
      return bicubic_resample(bicubic_resample(hq, 0.25), 4.0);
    case Task::Haze:
      return apply_haze(hq, meta.beta, meta.airlight, meta.field_seed);
    case Task::Rain:
      return apply_rain(hq, meta.density, meta.angle_deg, meta.field_seed);
    case Task::Blur:
      return apply_blur(hq, meta.sigma);
  }
  throw ContractError("unreachable task");
}

std::vector<ImagePair> make_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<ImagePair> pairs;
  pairs.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    // independent streams per pair, so pair i never depends on how many
    // pairs precede it
    const std::uint64_t idx = static_cast<std::uint64_t>(i);
    DegradeMeta meta;
    meta.task = spec.task;
    meta.clean_seed = derive_seed(spec.seed, 0x10000 + idx);
    meta.field_seed = derive_seed(spec.seed, 0x20000 + idx);
    Rng prng(derive_seed(spec.seed, 0x30000 + idx));
    switch (spec.task) {
      case Task::SR2x:
        meta.scale = 2;
        break;
      case Task::SR4x:
        meta.scale = 4;
        break;
      case Task::Haze:
        meta.beta = prng.range(spec.beta_min, spec.beta_max);
        meta.airlight = prng.range(spec.airlight_min, spec.airlight_max);
        break;
      case Task::Rain:
        meta.density = prng.range(spec.density_min, spec.density_max);
        meta.angle_deg = prng.range(spec.angle_min, spec.angle_max);
        break;
      case Task::Blur:
        meta.sigma = prng.range(spec.sigma_min, spec.sigma_max);
        break;
    }

    ImagePair pair;
    pair.task = spec.task;
    pair.meta = meta;
    // snap both images to the 8-bit grid so PGM fixtures round-trip
    // losslessly
    pair.hq = quantize8(synth_clean(spec.size, spec.channels, meta.clean_seed));
    pair.lq = quantize8(reapply(pair.hq, meta));
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void write_pnm(const std::string& path, const Tensor& img) {
  const Shape& s = img.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3))
    throw ContractError("write_pnm: image must be (1, 1|3, h, w), got " +
                        s.str());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << (s.c == 1 ? "P5" : "P6") << "\n" << s.w << " " << s.h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(s.w) * s.c);
  for (long y = 0; y < s.h; ++y) {
    for (long x = 0; x < s.w; ++x)
      for (long c = 0; c < s.c; ++c)
        row[x * s.c + c] = static_cast<unsigned char>(
            std::lround(clamp01(img.at(0, c, y, x)) * 255.0));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("failed writing '" + path + "'");
}

namespace {

// Reads one whitespace-delimited header token, honoring '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Tensor read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  const std::string magic = pnm_token(f);
  long channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw IoError("'" + path + "' is not a binary PGM/PPM file");

  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(pnm_token(f));
    h = std::stol(pnm_token(f));
    maxval = std::stol(pnm_token(f));
  } catch (const std::exception&) {
    throw IoError("malformed header in '" + path + "'");
  }
  if (w < 1 || h < 1) throw IoError("bad dimensions in '" + path + "'");
  if (maxval != 255)
    throw IoError("'" + path + "' has maxval " + std::to_string(maxval) +
                  "; only 255 is supported");

  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("'" + path + "' is truncated");

  Tensor img = Tensor::zeros({1, channels, h, w});
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (long c = 0; c < channels; ++c)
        img.at(0, c, y, x) =
            static_cast<double>(raw[(y * w + x) * channels + c]) / 255.0;
  return img;
}

}  // namespace mcl
