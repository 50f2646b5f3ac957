#include "mcl/nets.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "mcl/rng.hpp"

namespace mcl {

namespace {

// Weight draw shared by every initializer here: uniform with the classic
// fan-in bound so pre-activation variance is roughly unit at any width.
Tensor fan_in_weight(const Shape& s, Rng& rng, bool requires_grad) {
  const double bound = std::sqrt(3.0 / static_cast<double>(s.c * s.h * s.w));
  return Tensor::uniform(s, rng, -bound, bound, requires_grad);
}

void push_conv(ParamSet& ps, const std::string& prefix, long c_out, long c_in,
               long k, Rng& rng, bool requires_grad) {
  ps.entries.emplace_back(prefix + ".w",
                          fan_in_weight({c_out, c_in, k, k}, rng,
                                        requires_grad));
  ps.entries.emplace_back(prefix + ".b",
                          Tensor::zeros({1, c_out, 1, 1}, requires_grad));
}

}  // namespace

void RestorationNetConfig::validate() const {
  if (depth < 1) throw ConfigError("net.depth must be >= 1");
  if (width < 1) throw ConfigError("net.width must be >= 1");
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError("net.kernel must be odd and positive");
  if (in_channels < 1) throw ConfigError("net.in_channels must be >= 1");
}

std::string RestorationNetConfig::arch_id() const {
  std::ostringstream os;
  os << "restore-d" << depth << "-w" << width << "-k" << kernel << "-c"
     << in_channels;
  return os.str();
}

RestorationNetConfig RestorationNetConfig::from_arch_id(
    const std::string& id) {
  RestorationNetConfig cfg;
  char tail = 0;
  const int got = std::sscanf(id.c_str(), "restore-d%d-w%d-k%d-c%d%c",
                              &cfg.depth, &cfg.width, &cfg.kernel,
                              &cfg.in_channels, &tail);
  if (got != 4)
    throw ContractError("not a restoration-net arch id: '" + id + "'");
  cfg.validate();
  return cfg;
}

void EmbeddingNetConfig::validate() const {
  if (taps < 1) throw ConfigError("embed.taps must be >= 1");
  if (width < 1) throw ConfigError("embed.width must be >= 1");
  if (in_channels < 1) throw ConfigError("embed.in_channels must be >= 1");
}

std::string EmbeddingNetConfig::arch_id() const {
  std::ostringstream os;
  os << "embed-t" << taps << "-w" << width << "-c" << in_channels << "-s"
     << seed;
  return os.str();
}

// --- ParamSet ----------------------------------------------------------------

Tensor& ParamSet::find(const std::string& name) {
  for (auto& [n, t] : entries)
    if (n == name) return t;
  throw ContractError("parameter '" + name + "' not found in " + arch_id);
}

const Tensor& ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw ContractError("parameter '" + name + "' not found in " + arch_id);
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return true;
  return false;
}

ParamSet ParamSet::clone_detached(bool requires_grad) const {
  ParamSet out;
  out.arch_id = arch_id;
  out.entries.reserve(entries.size());
  for (const auto& [n, t] : entries) {
    Tensor c = t.clone_detached();
    c.set_requires_grad(requires_grad);
    out.entries.emplace_back(n, c);
  }
  return out;
}

void ParamSet::clear_grads() {
  for (auto& [n, t] : entries) t.clear_grad();
}

long ParamSet::total_elements() const {
  long total = 0;
  for (const auto& [n, t] : entries) total += t.numel();
  return total;
}

// --- Restoration net ---------------------------------------------------------

ParamSet init_params(const RestorationNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet ps;
  ps.arch_id = cfg.arch_id();
  push_conv(ps, "head", cfg.width, cfg.in_channels, cfg.kernel, rng, true);
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string p = "block" + std::to_string(d);
    push_conv(ps, p + ".conv0", cfg.width, cfg.width, cfg.kernel, rng, true);
    push_conv(ps, p + ".conv1", cfg.width, cfg.width, cfg.kernel, rng, true);
  }
  push_conv(ps, "tail", cfg.in_channels, cfg.width, cfg.kernel, rng, true);
  return ps;
}

ParamSet reinit_like(const ParamSet& like, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet out;
  out.arch_id = like.arch_id;
  out.entries.reserve(like.entries.size());
  for (const auto& [n, t] : like.entries) {
    // entries ending in ".b" are biases and stay zero
    const bool is_bias = n.size() >= 2 && n.compare(n.size() - 2, 2, ".b") == 0;
    Tensor fresh = is_bias ? Tensor::zeros(t.shape(), false)
                           : fan_in_weight(t.shape(), rng, false);
    out.entries.emplace_back(n, fresh);
  }
  return out;
}

Tensor forward_restore(const ParamSet& params, const Tensor& input) {
  const RestorationNetConfig cfg =
      RestorationNetConfig::from_arch_id(params.arch_id);
  const Shape& is = input.shape();
  if (is.c != cfg.in_channels) {
    std::ostringstream os;
    os << "forward_restore: input channel axis (c=" << is.c
       << ") does not match the network's in_channels=" << cfg.in_channels;
    throw DimensionError(os.str());
  }
  if (is.h < cfg.kernel || is.w < cfg.kernel) {
    std::ostringstream os;
    os << "forward_restore: input " << is.str()
       << " is smaller than the kernel (" << cfg.kernel << ") on a spatial axis";
    throw DimensionError(os.str());
  }

  const int pad = cfg.kernel / 2;
  Tensor x = conv2d(input, params.find("head.w"), params.find("head.b"), 1,
                    pad);
  for (int d = 0; d < cfg.depth; ++d) {
    const std::string p = "block" + std::to_string(d);
    Tensor y = relu(conv2d(x, params.find(p + ".conv0.w"),
                           params.find(p + ".conv0.b"), 1, pad));
    y = conv2d(y, params.find(p + ".conv1.w"), params.find(p + ".conv1.b"), 1,
               pad);
    x = add(x, y);
  }
  Tensor delta = conv2d(x, params.find("tail.w"), params.find("tail.b"), 1,
                        pad);
  return add(input, delta);
}

ParamSet combine(const ParamSet& a, const ParamSet& b, double wa, double wb) {
  if (a.arch_id != b.arch_id)
    throw ContractError("combine: architecture mismatch ('" + a.arch_id +
                        "' vs '" + b.arch_id + "')");
  if (a.entries.size() != b.entries.size())
    throw ContractError("combine: entry count mismatch for " + a.arch_id);
  ParamSet out;
  out.arch_id = a.arch_id;
  out.entries.reserve(a.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& [na, ta] = a.entries[i];
    const auto& [nb, tb] = b.entries[i];
    if (na != nb || ta.shape() != tb.shape())
      throw ContractError("combine: entry mismatch at '" + na + "'");
    Tensor t = Tensor::zeros(ta.shape(), false);
    t.array() = wa * ta.array() + wb * tb.array();
    out.entries.emplace_back(na, t);
  }
  return out;
}

// --- Embedding net -----------------------------------------------------------

EmbeddingNet::EmbeddingNet(const EmbeddingNetConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  params_.arch_id = cfg.arch_id();
  push_conv(params_, "stage0", cfg.width, cfg.in_channels, 3, rng, false);
  for (int t = 1; t < cfg.taps; ++t)
    push_conv(params_, "stage" + std::to_string(t), cfg.width, cfg.width, 3,
              rng, false);
}

long EmbeddingNet::receptive_field() const {
  // Standard recurrence: each 3x3 conv widens the field by (k-1) * jump,
  // and the jump (input stride of one output step) multiplies by the
  // layer's stride. Stage 0 has stride 1, the rest stride 2.
  long r = 1, jump = 1;
  for (int t = 0; t < cfg_.taps; ++t) {
    r += 2 * jump;
    jump *= (t == 0 ? 1 : 2);
  }
  return r;
}

std::vector<Tensor> EmbeddingNet::features(const Tensor& image) const {
  const Shape& is = image.shape();
  if (is.c != cfg_.in_channels) {
    std::ostringstream os;
    os << "embed: image channel axis (c=" << is.c
       << ") does not match the embedding's in_channels=" << cfg_.in_channels;
    throw DimensionError(os.str());
  }
  const long rf = receptive_field();
  if (is.h < rf || is.w < rf) {
    std::ostringstream os;
    os << "embed: image " << is.str() << " is smaller than the final tap's "
       << rf << "-pixel receptive field";
    throw DimensionError(os.str());
  }

  std::vector<Tensor> taps;
  taps.reserve(cfg_.taps);
  Tensor x = image;
  for (int t = 0; t < cfg_.taps; ++t) {
    const std::string p = "stage" + std::to_string(t);
    const int stride = t == 0 ? 1 : 2;
    x = relu(conv2d(x, params_.find(p + ".w"), params_.find(p + ".b"), stride,
                    1));
    taps.push_back(x);
  }
  return taps;
}

std::vector<Tensor> embed(const EmbeddingNetConfig& cfg, const Tensor& image) {
  return EmbeddingNet(cfg).features(image);
}

}  // namespace mcl
