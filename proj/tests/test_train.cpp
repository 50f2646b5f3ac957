#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "mcl/metrics.hpp"
#include "mcl/train.hpp"

using mcl::AdamState;
using mcl::BatchSampler;
using mcl::ParamSet;
using mcl::Shape;
using mcl::Tensor;
using mcl::TrainConfig;

namespace {

// Small all-round config used by most cases here: everything tiny, but with
// every moving part switched on.
TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.net.depth = 1;
  cfg.net.width = 4;
  cfg.embed.taps = 2;
  cfg.embed.width = 4;
  cfg.batch = 2;
  cfg.total_iters = 6;
  cfg.eval_every = 3;
  cfg.dataset.task = mcl::Task::SR2x;
  cfg.dataset.count = 4;
  cfg.dataset.size = 16;
  cfg.dataset.seed = 5;
  cfg.seed = 11;
  return cfg;
}

bool same_entries(const ParamSet& a, const ParamSet& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].first != b.entries[i].first) return false;
    if (!(a.entries[i].second.array() == b.entries[i].second.array()).all())
      return false;
  }
  return true;
}

double max_abs_gap(const ParamSet& a, const ParamSet& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.entries.size(); ++i)
    worst = std::max(worst, (a.entries[i].second.array() -
                             b.entries[i].second.array())
                                .abs()
                                .maxCoeff());
  return worst;
}

ParamSet one_scalar_param(double v) {
  ParamSet p;
  p.arch_id = "single";
  p.entries.emplace_back("p", Tensor::full({1, 1, 1, 1}, v, true));
  return p;
}

}  // namespace

TEST_CASE("config validation rejects each out-of-range field") {
  CHECK_NOTHROW(tiny_config().validate());

  auto expect_bad = [](TrainConfig cfg) {
    CHECK_THROWS_AS(cfg.validate(), mcl::ConfigError);
  };
  TrainConfig cfg = tiny_config();
  cfg.lambda = -1e-6;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.ema_w = 1.0;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.ema_w = -0.2;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.lr = 0.0;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.total_iters = 0;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.batch = 0;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.eval_every = 0;
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.steps.clear();
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.steps = {100, 0};
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.mode = mcl::NegativeMode::FixedPretrained;  // no path given
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.dataset.channels = 3;  // net still expects 1
  expect_bad(cfg);
  cfg = tiny_config();
  cfg.dataset.count = 1;  // nothing left after the eval split
  expect_bad(cfg);
}

TEST_CASE("adam leaves parameters and moments alone under zero gradients") {
  ParamSet params = mcl::init_params({.depth = 1, .width = 3}, 3);
  ParamSet before = params.clone_detached(false);
  AdamState st = AdamState::like(params);

  // grads allocated but zero for half the entries, absent for the rest
  for (std::size_t i = 0; i < params.entries.size(); i += 2)
    params.entries[i].second.ensure_grad();

  mcl::adam_update(params, st, 0.1);
  CHECK(same_entries(params, before));
  for (const auto& m : st.m) CHECK((m == 0.0).all());
  for (const auto& v : st.v) CHECK((v == 0.0).all());
}

TEST_CASE("adam single step matches hand arithmetic") {
  ParamSet params = one_scalar_param(1.0);
  AdamState st = AdamState::like(params);
  params.entries[0].second.ensure_grad();
  params.entries[0].second.grad()(0) = 0.5;

  mcl::adam_update(params, st, 0.1);

  const double m1 = (1.0 - 0.9) * 0.5;
  const double v1 = (1.0 - 0.999) * 0.5 * 0.5;
  const double mhat = m1 / (1.0 - 0.9);
  const double vhat = v1 / (1.0 - 0.999);
  const double expected = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(params.entries[0].second.value() ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(st.t == 1);
}

TEST_CASE("adam trajectory matches an independent per-element loop") {
  const std::vector<double> init{0.3, -0.7, 1.2, 0.0, -2.5};
  const std::vector<std::vector<double>> grads{
      {0.1, -0.2, 0.4, 0.0, 1.0},
      {-0.3, 0.5, 0.4, -0.1, 0.2},
      {0.05, 0.05, -0.4, 2.0, -1.0},
  };

  ParamSet params;
  params.arch_id = "vec";
  params.entries.emplace_back(
      "p", Tensor::from({1, 1, 1, 5}, init, true));
  AdamState st = AdamState::like(params);

  // reference: scalar Adam recurrences written out longhand
  std::vector<double> theta = init, m(5, 0.0), v(5, 0.0);
  for (std::size_t step = 0; step < grads.size(); ++step) {
    Tensor& p = params.entries[0].second;
    p.clear_grad();
    p.ensure_grad();
    for (int i = 0; i < 5; ++i) p.grad()(i) = grads[step][i];
    mcl::adam_update(params, st, 0.01);

    const double t = static_cast<double>(step + 1);
    for (int i = 0; i < 5; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[step][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[step][i] * grads[step][i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, t));
      const double vhat = v[i] / (1.0 - std::pow(0.999, t));
      theta[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(params.entries[0].second.raw()[i] ==
            doctest::Approx(theta[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("batch sampler visits every pair once per epoch") {
  BatchSampler sampler(5, 2, 77);
  std::vector<long> draws;
  for (int i = 0; i < 5; ++i)
    for (long v : sampler.next()) draws.push_back(v);
  REQUIRE(draws.size() == 10);
  std::set<long> first(draws.begin(), draws.begin() + 5);
  std::set<long> second(draws.begin() + 5, draws.end());
  CHECK(first == std::set<long>{0, 1, 2, 3, 4});
  CHECK(second == std::set<long>{0, 1, 2, 3, 4});

  BatchSampler replay(5, 2, 77);
  std::vector<long> draws2;
  for (int i = 0; i < 5; ++i)
    for (long v : replay.next()) draws2.push_back(v);
  CHECK(draws == draws2);

  // batch larger than the pool wraps across epochs
  BatchSampler wide(3, 7, 9);
  std::vector<long> bulk = wide.next();
  REQUIRE(bulk.size() == 7);
  std::set<long> epoch1(bulk.begin(), bulk.begin() + 3);
  std::set<long> epoch2(bulk.begin() + 3, bulk.begin() + 6);
  CHECK(epoch1 == std::set<long>{0, 1, 2});
  CHECK(epoch2 == std::set<long>{0, 1, 2});
}

TEST_CASE("stack_batch assembles the selected planes in order") {
  std::vector<mcl::ImagePair> pairs(2);
  pairs[0].lq = Tensor::full({1, 1, 2, 2}, 0.1);
  pairs[0].hq = Tensor::full({1, 1, 2, 2}, 0.2);
  pairs[1].lq = Tensor::full({1, 1, 2, 2}, 0.3);
  pairs[1].hq = Tensor::full({1, 1, 2, 2}, 0.4);

  Tensor lq = mcl::stack_batch(pairs, {1, 0, 1}, true);
  Tensor hq = mcl::stack_batch(pairs, {1, 0, 1}, false);
  CHECK(lq.shape() == Shape{3, 1, 2, 2});
  CHECK(lq.at(0, 0, 0, 0) == 0.3);
  CHECK(lq.at(1, 0, 0, 0) == 0.1);
  CHECK(lq.at(2, 0, 1, 1) == 0.3);
  CHECK(hq.at(0, 0, 0, 0) == 0.4);
  CHECK(hq.at(1, 0, 1, 1) == 0.2);
}

TEST_CASE("a fresh shadow bank yields an exactly zero push-away loss") {
  TrainConfig cfg = tiny_config();
  ParamSet params = mcl::init_params(cfg.net, 21);
  mcl::NegativeBank bank = mcl::NegativeBank::new_bank(
      mcl::NegativeMode::Latency, params, {2, 3}, 0.5, 1);
  AdamState adam = AdamState::like(params);
  mcl::EmbeddingNet embed(cfg.embed);

  mcl::Rng rng(4);
  Tensor lq = Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0);
  Tensor hq = Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0);

  mcl::LossBreakdown b =
      mcl::train_step(params, bank, adam, lq, hq, embed, cfg, 1);
  CHECK(b.neg == 0.0);
  REQUIRE(b.per_negative.size() == 2);
  CHECK(b.per_negative[0] == 0.0);
  CHECK(b.per_negative[1] == 0.0);
  CHECK(b.total == b.rec);

  // the optimizer moved the target, so the shadows now trail it
  mcl::LossBreakdown b2 =
      mcl::train_step(params, bank, adam, lq, hq, embed, cfg, 2);
  CHECK(b2.neg > 0.0);
}

TEST_CASE("shadow refresh happens after the optimizer step") {
  TrainConfig cfg = tiny_config();
  ParamSet params = mcl::init_params(cfg.net, 22);
  // w = 0 makes a refreshed shadow an exact copy of the *current* target
  mcl::NegativeBank bank = mcl::NegativeBank::new_bank(
      mcl::NegativeMode::Latency, params, {2, 3}, 0.0, 1);
  AdamState adam = AdamState::like(params);
  mcl::EmbeddingNet embed(cfg.embed);

  mcl::Rng rng(5);
  Tensor lq = Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0);
  Tensor hq = Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0);

  ParamSet at_init = params.clone_detached(false);
  mcl::train_step(params, bank, adam, lq, hq, embed, cfg, 1);
  // t=1 divides neither period: both shadows still equal the initial params
  CHECK(same_entries(bank.shadows()[0].params, at_init));
  CHECK(same_entries(bank.shadows()[1].params, at_init));

  mcl::train_step(params, bank, adam, lq, hq, embed, cfg, 2);
  // period 2 fired and copied the target as it stands after this step
  CHECK(same_entries(bank.shadows()[0].params, params));
  CHECK(same_entries(bank.shadows()[1].params, at_init));
}

TEST_CASE("shadows strictly trail the target once training moves on") {
  TrainConfig cfg = tiny_config();
  cfg.ema_w = 0.1;
  ParamSet params = mcl::init_params(cfg.net, 23);
  mcl::NegativeBank bank = mcl::NegativeBank::new_bank(
      mcl::NegativeMode::Latency, params, {2, 3}, cfg.ema_w, 1);
  AdamState adam = AdamState::like(params);
  mcl::EmbeddingNet embed(cfg.embed);

  mcl::Rng rng(6);
  Tensor lq = Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0);
  Tensor hq = Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0);

  const std::vector<int> first_refresh{2, 3};
  for (long long t = 1; t <= 8; ++t) {
    mcl::train_step(params, bank, adam, lq, hq, embed, cfg, t);
    for (std::size_t i = 0; i < bank.shadows().size(); ++i)
      if (t > first_refresh[i])
        CHECK(max_abs_gap(bank.shadows()[i].params, params) > 0.0);
  }
}

TEST_CASE("with a zero push-away weight the trajectory is plain training") {
  TrainConfig cfg = tiny_config();
  cfg.lambda = 0.0;
  ParamSet a = mcl::init_params(cfg.net, 31);
  ParamSet b = a.clone_detached(true);
  mcl::NegativeBank bank = mcl::NegativeBank::new_bank(
      mcl::NegativeMode::Latency, a, {2}, 0.5, 1);
  AdamState adam_a = AdamState::like(a);
  AdamState adam_b = AdamState::like(b);
  mcl::EmbeddingNet embed(cfg.embed);

  mcl::Rng rng(7);
  std::vector<std::pair<Tensor, Tensor>> batches;
  for (int i = 0; i < 8; ++i)
    batches.emplace_back(Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0),
                         Tensor::uniform({2, 1, 12, 12}, rng, 0.0, 1.0));

  for (long long t = 1; t <= 8; ++t) {
    const auto& [lq, hq] = batches[static_cast<std::size_t>(t - 1)];
    mcl::LossBreakdown br =
        mcl::train_step(a, bank, adam_a, lq, hq, embed, cfg, t);
    CHECK(br.total == br.rec);

    // reference: reconstruction-only training, no negative machinery at all
    {
      mcl::Tape tape;
      mcl::TapeGuard guard(tape);
      Tensor restored = mcl::forward_restore(b, lq);
      Tensor rec = mcl::reconstruction_loss(restored, hq, cfg.loss_kind);
      b.clear_grads();
      mcl::backward(rec, tape);
    }
    mcl::adam_update(b, adam_b, cfg.lr);

    CAPTURE(t);
    CHECK(same_entries(a, b));
  }
}

TEST_CASE("a non-finite loss stops the step before any update") {
  TrainConfig cfg = tiny_config();
  ParamSet params = mcl::init_params(cfg.net, 41);
  params.entries[0].second.raw()[0] =
      std::numeric_limits<double>::quiet_NaN();
  ParamSet poisoned = params.clone_detached(false);
  mcl::NegativeBank bank = mcl::NegativeBank::new_bank(
      mcl::NegativeMode::Latency, params, {2}, 0.5, 1);
  AdamState adam = AdamState::like(params);
  mcl::EmbeddingNet embed(cfg.embed);

  mcl::Rng rng(8);
  Tensor lq = Tensor::uniform({1, 1, 12, 12}, rng, 0.0, 1.0);
  Tensor hq = Tensor::uniform({1, 1, 12, 12}, rng, 0.0, 1.0);

  try {
    mcl::train_step(params, bank, adam, lq, hq, embed, cfg, 1);
    FAIL("expected a collapse");
  } catch (const mcl::CollapseDetected& e) {
    CHECK(e.iter == 1);
    CHECK(e.term == "reconstruction");
    CHECK(!std::isfinite(e.value));
  }
  // parameters were not touched by the aborted step (the poisoned slot is
  // checked by identity of its bit pattern, since NaN != NaN)
  CHECK(std::isnan(params.entries[0].second.raw()[0]));
  const auto& pa = params.entries[0].second.array();
  const auto& pb = poisoned.entries[0].second.array();
  CHECK((pa.segment(1, pa.size() - 1) == pb.segment(1, pb.size() - 1)).all());
  for (std::size_t i = 1; i < params.entries.size(); ++i)
    CHECK((params.entries[i].second.array() ==
           poisoned.entries[i].second.array())
              .all());
  CHECK(adam.t == 0);
}

TEST_CASE("fit reports a collapse from a poisoned warm start") {
  TrainConfig cfg = tiny_config();
  ParamSet warm = mcl::init_params(cfg.net, 42);
  // poison the head conv so the global residual carries the NaN to the
  // output no matter what the activations do with it
  warm.entries[0].second.raw()[1] =
      std::numeric_limits<double>::quiet_NaN();

  mcl::TrainReport report = mcl::fit(cfg, &warm);
  CHECK(report.status == mcl::RunStatus::Collapsed);
  CHECK(report.collapse_iter == 1);
  CHECK(report.records.empty());
}

TEST_CASE("fit is bitwise deterministic and keeps its loss identity") {
  TrainConfig cfg = tiny_config();
  mcl::TrainReport r1 = mcl::fit(cfg);
  mcl::TrainReport r2 = mcl::fit(cfg);

  CHECK(r1.status == mcl::RunStatus::Completed);
  CHECK(same_entries(r1.params, r2.params));
  REQUIRE(r1.records.size() == 6);
  REQUIRE(r2.records.size() == 6);
  for (std::size_t i = 0; i < r1.records.size(); ++i) {
    const auto& ra = r1.records[i];
    const auto& rb = r2.records[i];
    CHECK(ra.iter == rb.iter);
    CHECK(ra.rec_loss == rb.rec_loss);
    CHECK(ra.neg_loss == rb.neg_loss);
    CHECK(ra.total_loss == rb.total_loss);
    CHECK(ra.eval_psnr.has_value() == rb.eval_psnr.has_value());
    if (ra.eval_psnr) CHECK(*ra.eval_psnr == *rb.eval_psnr);
    if (ra.eval_ssim) CHECK(*ra.eval_ssim == *rb.eval_ssim);

    // reporting identity: total = rec - lambda * neg
    CHECK(std::abs(ra.total_loss -
                   (ra.rec_loss - cfg.lambda * ra.neg_loss)) < 1e-10);
    // eval fields appear exactly on schedule
    const bool should_eval =
        ra.iter % cfg.eval_every == 0 || ra.iter == cfg.total_iters;
    CHECK(ra.eval_psnr.has_value() == should_eval);
    CHECK(ra.eval_ssim.has_value() == should_eval);
  }
}

TEST_CASE("identity parameters evaluate to the degraded input's quality") {
  TrainConfig cfg = tiny_config();
  ParamSet zero = mcl::init_params(cfg.net, 3);
  for (auto& [name, t] : zero.entries) t.array().setZero();

  auto pairs = mcl::make_dataset(cfg.dataset);
  auto [p, s] = mcl::eval_single(zero, pairs[0].lq, pairs[0].hq);
  CHECK(p == doctest::Approx(mcl::psnr(pairs[0].lq, pairs[0].hq))
                 .epsilon(1e-12));
  CHECK(s == doctest::Approx(mcl::ssim(pairs[0].lq, pairs[0].hq))
                 .epsilon(1e-12));

  // perfect input caps the scale
  auto [pcap, scap] = mcl::eval_single(zero, pairs[0].hq, pairs[0].hq);
  CHECK(pcap == 100.0);
  CHECK(scap == doctest::Approx(1.0).epsilon(1e-12));

  // range mean equals the mean of singles
  auto [pm, sm] = mcl::eval_range(zero, pairs, 0, 2);
  auto [p0, s0] = mcl::eval_single(zero, pairs[0].lq, pairs[0].hq);
  auto [p1, s1] = mcl::eval_single(zero, pairs[1].lq, pairs[1].hq);
  CHECK(pm == doctest::Approx((p0 + p1) / 2.0).epsilon(1e-12));
  CHECK(sm == doctest::Approx((s0 + s1) / 2.0).epsilon(1e-12));
}

TEST_CASE("the eval split holds out the tail of the dataset") {
  CHECK(mcl::train_pool_count(16) == 12);
  CHECK(mcl::train_pool_count(4) == 3);
  CHECK(mcl::train_pool_count(2) == 1);
  CHECK(mcl::train_pool_count(5) == 4);
  CHECK(mcl::train_pool_count(100) == 75);
}

TEST_CASE("checkpoints round trip bitwise") {
  ParamSet params = mcl::init_params({.depth = 2, .width = 5}, 99);
  mcl::save_checkpoint("tmp_ckpt.bin", params, 1234);

  mcl::LoadedCheckpoint loaded = mcl::load_checkpoint("tmp_ckpt.bin");
  CHECK(loaded.iter == 1234);
  CHECK(loaded.params.arch_id == params.arch_id);
  REQUIRE(loaded.params.entries.size() == params.entries.size());
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    CHECK(loaded.params.entries[i].first == params.entries[i].first);
    CHECK(loaded.params.entries[i].second.shape() ==
          params.entries[i].second.shape());
    CHECK((loaded.params.entries[i].second.array() ==
           params.entries[i].second.array())
              .all());
    CHECK_FALSE(loaded.params.entries[i].second.requires_grad());
  }
  std::remove("tmp_ckpt.bin");
}

TEST_CASE("checkpoint loader distinguishes its failure modes") {
  ParamSet params = mcl::init_params({.depth = 1, .width = 3}, 7);
  mcl::save_checkpoint("tmp_ckpt2.bin", params, 5);

  auto slurp = [](const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  };
  auto spit = [](const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  const std::string good = slurp("tmp_ckpt2.bin");

  auto expect_kind = [](const std::string& path,
                        mcl::CheckpointError::Kind kind) {
    try {
      mcl::load_checkpoint(path);
      FAIL_CHECK("expected a checkpoint error for " << path);
    } catch (const mcl::CheckpointError& e) {
      CHECK(e.kind == kind);
    }
  };

  CHECK_THROWS_AS(mcl::load_checkpoint("tmp_missing.bin"), mcl::IoError);

  std::string bad = good;
  bad[bad.size() - 20] ^= 0x40;  // flip a bit inside tensor data
  spit("tmp_badcrc.bin", bad);
  expect_kind("tmp_badcrc.bin", mcl::CheckpointError::Kind::BadCrc);

  bad = good;
  bad[0] = 'X';
  spit("tmp_badmagic.bin", bad);
  expect_kind("tmp_badmagic.bin", mcl::CheckpointError::Kind::BadMagic);

  bad = good;
  bad[8] = 2;  // version field
  spit("tmp_badver.bin", bad);
  expect_kind("tmp_badver.bin", mcl::CheckpointError::Kind::BadVersion);

  spit("tmp_short1.bin", good.substr(0, 5));
  expect_kind("tmp_short1.bin", mcl::CheckpointError::Kind::Truncated);
  spit("tmp_short2.bin", good.substr(0, 13));
  expect_kind("tmp_short2.bin", mcl::CheckpointError::Kind::Truncated);

  for (const char* p : {"tmp_ckpt2.bin", "tmp_badcrc.bin", "tmp_badmagic.bin",
                        "tmp_badver.bin", "tmp_short1.bin", "tmp_short2.bin"})
    std::remove(p);
}

TEST_CASE("a trained checkpoint can seed the frozen-negative mode") {
  TrainConfig cfg = tiny_config();
  cfg.total_iters = 2;
  cfg.eval_every = 2;
  mcl::TrainReport report = mcl::fit(cfg);
  mcl::save_checkpoint("tmp_warm.bin", report.params, cfg.total_iters);

  TrainConfig cfg2 = tiny_config();
  cfg2.total_iters = 2;
  cfg2.eval_every = 2;
  cfg2.mode = mcl::NegativeMode::FixedPretrained;
  cfg2.pretrained_path = "tmp_warm.bin";
  cfg2.seed = 12;
  mcl::TrainReport r2 = mcl::fit(cfg2);
  CHECK(r2.status == mcl::RunStatus::Completed);
  CHECK(r2.records.size() == 2);
  // one frozen negative, giving a nonzero push-away signal from step one
  CHECK(r2.records[0].neg_loss > 0.0);

  std::remove("tmp_warm.bin");
}

TEST_CASE("metrics csv carries nine significant digits and blank evals") {
  std::vector<mcl::MetricsRecord> records(2);
  records[0].iter = 1;
  records[0].rec_loss = 0.123456789012;
  records[0].neg_loss = 1e-4;
  records[0].total_loss = 0.119;
  records[0].wall_ms = 2.5;
  records[1].iter = 2;
  records[1].rec_loss = 0.1;
  records[1].neg_loss = 0.0;
  records[1].total_loss = 0.1;
  records[1].eval_psnr = 25.1234567891;
  records[1].eval_ssim = 0.987654321123;
  records[1].wall_ms = 3.0;

  const std::string text = mcl::metrics_csv_text(records);
  CHECK(text ==
        "iter,rec_loss,neg_loss,total_loss,eval_psnr,eval_ssim,wall_ms\n"
        "1,0.123456789,0.0001,0.119,,,2.5\n"
        "2,0.1,0,0.1,25.1234568,0.987654321,3\n");

  mcl::write_metrics_csv("tmp_metrics.csv", records);
  std::ifstream f("tmp_metrics.csv", std::ios::binary);
  std::string disk((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  CHECK(disk == text);
  std::remove("tmp_metrics.csv");
}
