#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mcl/degrade.hpp"
#include "mcl/loss.hpp"
#include "mcl/negbank.hpp"
#include "mcl/nets.hpp"
#include "mcl/rng.hpp"
#include "mcl/tensor.hpp"

namespace mcl {

// Everything a run needs. Field defaults are the library's reference
// settings; the config file in `cli` maps onto these one key per field.
struct TrainConfig {
  double lambda = 1e-4;  // weight of the push-away term in the total loss
  double ema_w = 0.1;    // shadow retention per EMA refresh
  std::vector<int> steps{100, 500, 1000, 2000};  // shadow refresh periods
  NegativeMode mode = NegativeMode::Latency;
  LossKind loss_kind = LossKind::MAE;
  double lr = 1e-3;
  long long total_iters = 5000;
  long long batch = 8;
  std::uint64_t seed = 1;
  long long eval_every = 250;
  std::string pretrained_path;  // checkpoint for FixedPretrained mode
  RestorationNetConfig net;
  EmbeddingNetConfig embed;
  DatasetSpec dataset;

  void validate() const;
};

// One CSV row: losses every iteration, eval metrics only on eval
// iterations.
struct MetricsRecord {
  long long iter = 0;
  double rec_loss = 0.0;
  double neg_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> eval_psnr;
  std::optional<double> eval_ssim;
  double wall_ms = 0.0;
};

enum class RunStatus { Completed, Collapsed };
std::string to_string(RunStatus s);

struct TrainReport {
  ParamSet params;
  std::vector<MetricsRecord> records;
  RunStatus status = RunStatus::Completed;
  long long collapse_iter = 0;  // meaningful when status == Collapsed
  std::string collapse_term;    // which loss went non-finite
};

// Adam first/second moments, one slot per ParamSet entry in entry order.
struct AdamState {
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
  long long t = 0;

  static AdamState like(const ParamSet& params);
};

// Standard bias-corrected Adam. Entries without an accumulated gradient
// are treated as having a zero one. epsilon sits outside the square root.
void adam_update(ParamSet& params, AdamState& state, double lr,
                 double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

// Epoch-shuffled minibatch index stream over [0, pool): a seeded
// permutation is consumed `batch` indices at a time and redrawn when it
// runs out, so every epoch visits each pair once before repeating any.
class BatchSampler {
 public:
  BatchSampler(long long pool, long long batch, std::uint64_t seed);
  std::vector<long> next();

 private:
  long long pool_;
  long long batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// Stacks the selected pairs' lq (or hq) planes into one (B,C,H,W) batch.
Tensor stack_batch(const std::vector<ImagePair>& pairs,
                   const std::vector<long>& idx, bool take_lq);

// One optimization step: forward, generate negatives (detached), compose
// losses, backward, Adam, then the shadow refresh for iteration t. Throws
// CollapseDetected the moment any loss scalar is non-finite, before any
// parameter is touched.
LossBreakdown train_step(ParamSet& params, NegativeBank& bank,
                         AdamState& adam, const Tensor& batch_lq,
                         const Tensor& batch_hq, const EmbeddingNet& embed,
                         const TrainConfig& cfg, long long t);

// How many of n generated pairs are trained on; the rest (at least one)
// are the held-out eval split. Shared with the CLI so both sides agree on
// the split boundary.
long long train_pool_count(long long n);

// PSNR/SSIM of the restored image against hq, after clamping the
// restoration to [0,1]. Runs with recording disabled.
std::pair<double, double> eval_single(const ParamSet& params,
                                      const Tensor& lq, const Tensor& hq);

// Mean of eval_single over pairs[begin, end).
std::pair<double, double> eval_range(const ParamSet& params,
                                     const std::vector<ImagePair>& pairs,
                                     std::size_t begin, std::size_t end);

// Full run: build dataset, split, train total_iters steps, evaluate every
// eval_every iterations and on the last one. A collapse terminates the run
// with the records gathered so far. `warm_start` (when given) replaces the
// seeded parameter initialization — shapes must match cfg.net.
TrainReport fit(const TrainConfig& cfg,
                const ParamSet* warm_start = nullptr);

// Binary parameter snapshot: magic, format version, architecture id,
// iteration, named raw-f64 tensors, CRC32 trailer over everything after
// the magic. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const ParamSet& params,
                     long long iter);

struct LoadedCheckpoint {
  ParamSet params;  // tensors loaded frozen (requires_grad false)
  long long iter = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// CSV with header iter,rec_loss,neg_loss,total_loss,eval_psnr,eval_ssim,
// wall_ms; scalars at 9 significant digits, absent eval fields empty.
void write_metrics_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records);
std::string metrics_csv_text(const std::vector<MetricsRecord>& records);

}  // namespace mcl
