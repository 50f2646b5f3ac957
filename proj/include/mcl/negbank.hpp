#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcl/nets.hpp"
#include "mcl/tensor.hpp"

namespace mcl {

// Where negative samples come from:
//  - Latency:         EMA shadows of the target, refreshed on step boundaries
//  - Input:           the degraded input itself is the (single) negative
//  - FixedPretrained: one frozen set of externally trained parameters
//  - FixedRandom:     one frozen set of freshly initialized parameters
enum class NegativeMode { Latency, Input, FixedPretrained, FixedRandom };

std::string to_string(NegativeMode mode);
NegativeMode negative_mode_from_string(const std::string& s);

class NegativeBank {
 public:
  struct Shadow {
    int step;         // update period; meaningful in Latency mode only
    ParamSet params;  // frozen copy (requires_grad false throughout)
  };

  // Latency banks clone the target once per step value, so the negative
  // loss starts at exactly zero and grows as the target trains away from
  // its own past. Fixed modes carry a single frozen shadow; Input mode
  // carries none. `pretrained` is required for FixedPretrained.
  static NegativeBank new_bank(NegativeMode mode, const ParamSet& target,
                               const std::vector<int>& steps, double w,
                               std::uint64_t seed,
                               const std::optional<ParamSet>& pretrained = {});

  // Applies the shadow refresh rule for iteration t: every shadow whose
  // step divides t becomes w*shadow + (1-w)*target. Returns how many
  // changed. No-op (0) outside Latency mode.
  int maybe_update(const ParamSet& target, long long t);

  // Runs every shadow on the degraded input with recording disabled, so
  // negatives arrive detached: no gradient can flow into shadow parameters
  // or through a negative image. Input mode returns {input_lq}.
  std::vector<Tensor> generate_negatives(const Tensor& input_lq) const;

  NegativeMode mode() const { return mode_; }
  double w() const { return w_; }
  // N in the loss average: number of negatives produced per call.
  int count() const;
  const std::vector<Shadow>& shadows() const { return shadows_; }

 private:
  NegativeMode mode_ = NegativeMode::Latency;
  double w_ = 0.1;
  std::vector<Shadow> shadows_;
};

// Rescales the update periods for runs shorter than the 20k-iteration
// schedule they were tuned on: ceil(step * total_iters / 20000), floored at
// 1, deduplicated, sorted. Runs of 20k or more keep their steps.
std::vector<int> scale_steps(const std::vector<int>& steps,
                             long long total_iters);

}  // namespace mcl
