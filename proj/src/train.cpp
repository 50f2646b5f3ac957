#include "mcl/train.hpp"

#include <zlib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include "mcl/errors.hpp"
#include "mcl/metrics.hpp"

namespace mcl {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'L', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

// Derivation salts for the independent RNG streams of one run.
constexpr std::uint64_t kSaltParams = 1;
constexpr std::uint64_t kSaltBank = 2;
constexpr std::uint64_t kSaltSampler = 3;

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& buf, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  append_u64(buf, bits);
}

// Cursor over a loaded checkpoint; any read past the end is a truncation.
struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            "checkpoint ends mid-record");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

std::uint32_t payload_crc(const std::string& payload) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
}

void check_finite(double v, const char* term, long long t) {
  if (!std::isfinite(v)) throw CollapseDetected(t, v, term);
}

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda < 0.0)
    throw ConfigError("lambda must be >= 0");
  if (ema_w < 0.0 || ema_w >= 1.0)
    throw ConfigError("ema_w must lie in [0, 1)");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (total_iters < 1) throw ConfigError("total_iters must be positive");
  if (batch < 1) throw ConfigError("batch must be positive");
  if (eval_every < 1) throw ConfigError("eval_every must be positive");
  if (steps.empty()) throw ConfigError("steps must not be empty");
  for (int s : steps)
    if (s < 1) throw ConfigError("steps must all be positive");
  if (mode == NegativeMode::FixedPretrained && pretrained_path.empty())
    throw ConfigError(
        "fixed_pretrained mode needs a pretrained checkpoint path");
  net.validate();
  embed.validate();
  dataset.validate();
  if (dataset.channels != net.in_channels)
    throw ConfigError("dataset channels must match net.in_channels");
  if (dataset.channels != embed.in_channels)
    throw ConfigError("dataset channels must match embed.in_channels");
  if (dataset.count < 2)
    throw ConfigError(
        "dataset.count must be at least 2 to hold out an eval split");
}

std::string to_string(RunStatus s) {
  return s == RunStatus::Completed ? "Completed" : "Collapsed";
}

AdamState AdamState::like(const ParamSet& params) {
  AdamState st;
  st.m.reserve(params.entries.size());
  st.v.reserve(params.entries.size());
  for (const auto& [name, tensor] : params.entries) {
    st.m.push_back(Eigen::ArrayXd::Zero(tensor.numel()));
    st.v.push_back(Eigen::ArrayXd::Zero(tensor.numel()));
  }
  return st;
}

void adam_update(ParamSet& params, AdamState& state, double lr, double beta1,
                 double beta2, double eps) {
  if (state.m.size() != params.entries.size())
    throw ContractError("Adam state does not match the parameter set");
  state.t += 1;
  const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    Tensor& p = params.entries[i].second;
    Eigen::ArrayXd& m = state.m[i];
    Eigen::ArrayXd& v = state.v[i];
    if (p.has_grad()) {
      const Eigen::ArrayXd& g = p.grad();
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g.square();
    } else {
      m *= beta1;
      v *= beta2;
    }
    p.array() -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
  }
}

BatchSampler::BatchSampler(long long pool, long long batch,
                           std::uint64_t seed)
    : pool_(pool), batch_(batch), rng_(seed) {
  if (pool < 1) throw ContractError("sampler pool must not be empty");
  if (batch < 1) throw ContractError("batch size must be positive");
  order_ = rng_.permutation(static_cast<std::size_t>(pool_));
}

std::vector<long> BatchSampler::next() {
  std::vector<long> idx(static_cast<std::size_t>(batch_));
  for (long long b = 0; b < batch_; ++b) {
    if (pos_ == order_.size()) {
      order_ = rng_.permutation(static_cast<std::size_t>(pool_));
      pos_ = 0;
    }
    idx[static_cast<std::size_t>(b)] = static_cast<long>(order_[pos_++]);
  }
  return idx;
}

Tensor stack_batch(const std::vector<ImagePair>& pairs,
                   const std::vector<long>& idx, bool take_lq) {
  if (idx.empty()) throw ContractError("batch index list is empty");
  const Shape one = take_lq ? pairs.at(0).lq.shape() : pairs.at(0).hq.shape();
  Tensor out = Tensor::zeros(
      {static_cast<long>(idx.size()), one.c, one.h, one.w});
  const long plane = one.numel();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const ImagePair& p = pairs.at(static_cast<std::size_t>(idx[b]));
    const Tensor& src = take_lq ? p.lq : p.hq;
    if (!(src.shape() == one))
      throw DimensionError("pairs in one batch must share a shape");
    out.array().segment(static_cast<long>(b) * plane, plane) = src.array();
  }
  return out;
}

LossBreakdown train_step(ParamSet& params, NegativeBank& bank,
                         AdamState& adam, const Tensor& batch_lq,
                         const Tensor& batch_hq, const EmbeddingNet& embed,
                         const TrainConfig& cfg, long long t) {
  if (t < 1) throw ContractError("iteration counter starts at 1");

  LossBreakdown out;
  Tape tape;
  {
    TapeGuard guard(tape);
    Tensor restored = forward_restore(params, batch_lq);
    std::vector<Tensor> negatives = bank.generate_negatives(batch_lq);
    Tensor rec_t = reconstruction_loss(restored, batch_hq, cfg.loss_kind);
    auto [neg_t, per] = negative_loss(restored, negatives, embed);
    Tensor total_t = total_loss(rec_t, neg_t, cfg.lambda);

    out.rec = rec_t.value();
    out.neg = neg_t.value();
    out.total = total_t.value();
    out.per_negative = std::move(per);
    check_finite(out.rec, "reconstruction", t);
    check_finite(out.neg, "negative", t);
    check_finite(out.total, "total", t);

    params.clear_grads();
    backward(total_t, tape);
  }
  adam_update(params, adam, cfg.lr);
  bank.maybe_update(params, t);
  return out;
}

long long train_pool_count(long long n) {
  return n - std::max<long long>(1, n / 4);
}

std::pair<double, double> eval_single(const ParamSet& params,
                                      const Tensor& lq, const Tensor& hq) {
  NoGradGuard guard;
  Tensor restored = forward_restore(params, lq);
  restored.array() = restored.array().max(0.0).min(1.0);
  return {psnr(restored, hq), ssim(restored, hq)};
}

std::pair<double, double> eval_range(const ParamSet& params,
                                     const std::vector<ImagePair>& pairs,
                                     std::size_t begin, std::size_t end) {
  if (begin >= end || end > pairs.size())
    throw ContractError("bad eval range");
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    auto [p, s] = eval_single(params, pairs[i].lq, pairs[i].hq);
    psnr_sum += p;
    ssim_sum += s;
  }
  const double n = static_cast<double>(end - begin);
  return {psnr_sum / n, ssim_sum / n};
}

TrainReport fit(const TrainConfig& cfg, const ParamSet* warm_start) {
  cfg.validate();
  const std::vector<ImagePair> pairs = make_dataset(cfg.dataset);
  const long long train_count =
      train_pool_count(static_cast<long long>(pairs.size()));
  if (train_count < 1)
    throw ConfigError("dataset too small to hold out an eval split");

  ParamSet params = warm_start
                        ? warm_start->clone_detached(true)
                        : init_params(cfg.net, derive_seed(cfg.seed, kSaltParams));
  if (params.arch_id != cfg.net.arch_id())
    throw ContractError("warm start parameters do not match net config");

  std::optional<ParamSet> pretrained;
  if (cfg.mode == NegativeMode::FixedPretrained)
    pretrained = load_checkpoint(cfg.pretrained_path).params;

  NegativeBank bank = NegativeBank::new_bank(
      cfg.mode, params, scale_steps(cfg.steps, cfg.total_iters), cfg.ema_w,
      derive_seed(cfg.seed, kSaltBank), pretrained);
  AdamState adam = AdamState::like(params);
  EmbeddingNet embed(cfg.embed);
  BatchSampler sampler(train_count, cfg.batch,
                       derive_seed(cfg.seed, kSaltSampler));

  TrainReport report;
  for (long long t = 1; t <= cfg.total_iters; ++t) {
    const auto tic = std::chrono::steady_clock::now();
    const std::vector<long> idx = sampler.next();
    const Tensor blq = stack_batch(pairs, idx, true);
    const Tensor bhq = stack_batch(pairs, idx, false);

    MetricsRecord rec;
    rec.iter = t;
    try {
      LossBreakdown b =
          train_step(params, bank, adam, blq, bhq, embed, cfg, t);
      rec.rec_loss = b.rec;
      rec.neg_loss = b.neg;
      rec.total_loss = b.total;
    } catch (const CollapseDetected& e) {
      report.status = RunStatus::Collapsed;
      report.collapse_iter = e.iter;
      report.collapse_term = e.term;
      break;
    }
    if (t % cfg.eval_every == 0 || t == cfg.total_iters) {
      auto [p, s] = eval_range(params, pairs,
                               static_cast<std::size_t>(train_count),
                               pairs.size());
      rec.eval_psnr = p;
      rec.eval_ssim = s;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - tic)
                      .count();
    report.records.push_back(rec);
  }
  report.params = std::move(params);
  return report;
}

void save_checkpoint(const std::string& path, const ParamSet& params,
                     long long iter) {
  std::string payload;
  append_u32(payload, kVersion);
  append_u32(payload, static_cast<std::uint32_t>(params.arch_id.size()));
  payload.append(params.arch_id);
  append_u64(payload, static_cast<std::uint64_t>(iter));
  append_u32(payload, static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& [name, tensor] : params.entries) {
    append_u32(payload, static_cast<std::uint32_t>(name.size()));
    payload.append(name);
    const Shape& s = tensor.shape();
    append_u64(payload, static_cast<std::uint64_t>(s.n));
    append_u64(payload, static_cast<std::uint64_t>(s.c));
    append_u64(payload, static_cast<std::uint64_t>(s.h));
    append_u64(payload, static_cast<std::uint64_t>(s.w));
    const double* raw = tensor.raw();
    for (long i = 0; i < tensor.numel(); ++i) append_f64(payload, raw[i]);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof kMagic);
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::string crc;
  append_u32(crc, payload_crc(payload));
  f.write(crc.data(), static_cast<std::streamsize>(crc.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < sizeof kMagic)
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "file shorter than the magic header");
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(CheckpointError::Kind::BadMagic,
                          "not a checkpoint file");
  if (buf.size() < sizeof kMagic + 4 + 4)
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "file too short for version and checksum");

  const std::string payload =
      buf.substr(sizeof kMagic, buf.size() - sizeof kMagic - 4);
  Reader tail{buf, buf.size() - 4};
  const std::uint32_t stored_crc = tail.u32();

  Reader r{payload, 0};
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version");
  if (payload_crc(payload) != stored_crc)
    throw CheckpointError(CheckpointError::Kind::BadCrc,
                          "checkpoint checksum mismatch");

  LoadedCheckpoint out;
  out.params.arch_id = r.bytes(r.u32());
  out.iter = static_cast<long long>(r.u64());
  const std::uint32_t count = r.u32();
  out.params.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    Shape s{static_cast<long>(r.u64()), static_cast<long>(r.u64()),
            static_cast<long>(r.u64()), static_cast<long>(r.u64())};
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            "checkpoint tensor has a bad shape");
    Tensor t = Tensor::zeros(s);
    for (long j = 0; j < t.numel(); ++j) t.raw()[j] = r.f64();
    out.params.entries.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != payload.size())
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "trailing bytes after the last tensor");
  return out;
}

std::string metrics_csv_text(const std::vector<MetricsRecord>& records) {
  std::string out =
      "iter,rec_loss,neg_loss,total_loss,eval_psnr,eval_ssim,wall_ms\n";
  for (const MetricsRecord& r : records) {
    out += std::to_string(r.iter);
    out += ',';
    out += format_g9(r.rec_loss);
    out += ',';
    out += format_g9(r.neg_loss);
    out += ',';
    out += format_g9(r.total_loss);
    out += ',';
    if (r.eval_psnr) out += format_g9(*r.eval_psnr);
    out += ',';
    if (r.eval_ssim) out += format_g9(*r.eval_ssim);
    out += ',';
    out += format_g9(r.wall_ms);
    out += '\n';
  }
  return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open metrics csv for writing: " + path);
  const std::string text = metrics_csv_text(records);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("failed writing metrics csv: " + path);
}

}  // namespace mcl
