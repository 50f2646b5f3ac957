#include "mcl/negbank.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace mcl {

std::string to_string(NegativeMode mode) {
  switch (mode) {
    case NegativeMode::Latency:
      return "latency";
    case NegativeMode::Input:
      return "input";
    case NegativeMode::FixedPretrained:
      return "fixed_pretrained";
    case NegativeMode::FixedRandom:
      return "fixed_random";
  }
  throw ContractError("unreachable negative mode");
}

NegativeMode negative_mode_from_string(const std::string& s) {
  if (s == "latency") return NegativeMode::Latency;
  if (s == "input") return NegativeMode::Input;
  if (s == "fixed_pretrained") return NegativeMode::FixedPretrained;
  if (s == "fixed_random") return NegativeMode::FixedRandom;
  throw ConfigError(
      "unknown negative mode '" + s +
      "' (expected latency, input, fixed_pretrained or fixed_random)");
}

NegativeBank NegativeBank::new_bank(NegativeMode mode, const ParamSet& target,
                                    const std::vector<int>& steps, double w,
                                    std::uint64_t seed,
                                    const std::optional<ParamSet>& pretrained) {
  if (w < 0.0 || w >= 1.0) {
    std::ostringstream os;
    os << "ema weight must lie in [0, 1), got " << w;
    throw ConfigError(os.str());
  }

  NegativeBank bank;
  bank.mode_ = mode;
  bank.w_ = w;

  switch (mode) {
    case NegativeMode::Latency: {
      if (steps.empty())
        throw ConfigError("latency mode needs at least one update step");
      std::set<int> seen;
      for (int s : steps) {
        if (s < 1) throw ConfigError("update steps must be positive");
        if (!seen.insert(s).second) {
          std::ostringstream os;
          os << "duplicate update step " << s;
          throw ConfigError(os.str());
        }
      }
      for (int s : seen)  // std::set iterates ascending
        bank.shadows_.push_back({s, target.clone_detached(false)});
      break;
    }
    case NegativeMode::Input:
      break;  // no shadows; the input is the negative
    case NegativeMode::FixedRandom:
      bank.shadows_.push_back({1, reinit_like(target, seed)});
      break;
    case NegativeMode::FixedPretrained: {
      if (!pretrained.has_value())
        throw ConfigError(
            "fixed_pretrained mode needs a pretrained parameter set");
      if (pretrained->arch_id != target.arch_id)
        throw ContractError("pretrained negative architecture '" +
                            pretrained->arch_id + "' does not match target '" +
                            target.arch_id + "'");
      bank.shadows_.push_back({1, pretrained->clone_detached(false)});
      break;
    }
  }
  return bank;
}

int NegativeBank::maybe_update(const ParamSet& target, long long t) {
  if (mode_ != NegativeMode::Latency) return 0;
  if (t < 1) throw ContractError("maybe_update: iteration index must be >= 1");
  int updated = 0;
  for (Shadow& sh : shadows_) {
    if (t % sh.step != 0) continue;
    sh.params = combine(sh.params, target, w_, 1.0 - w_);
    ++updated;
  }
  return updated;
}

std::vector<Tensor> NegativeBank::generate_negatives(
    const Tensor& input_lq) const {
  if (mode_ == NegativeMode::Input) return {input_lq};
  NoGradGuard no_grad;
  std::vector<Tensor> out;
  out.reserve(shadows_.size());
  for (const Shadow& sh : shadows_)
    out.push_back(forward_restore(sh.params, input_lq));
  return out;
}

int NegativeBank::count() const {
  return mode_ == NegativeMode::Input ? 1
                                      : static_cast<int>(shadows_.size());
}

std::vector<int> scale_steps(const std::vector<int>& steps,
                             long long total_iters) {
  std::set<int> out;
  for (int s : steps) {
    long long scaled = s;
    if (total_iters < 20000) {
      // ceiling division keeps every step at least 1
      scaled = (static_cast<long long>(s) * total_iters + 19999) / 20000;
      if (scaled < 1) scaled = 1;
    }
    out.insert(static_cast<int>(scaled));
  }
  return {out.begin(), out.end()};
}

}  // namespace mcl
