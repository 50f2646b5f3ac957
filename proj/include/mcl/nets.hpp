#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcl/tensor.hpp"

namespace mcl {

// Architecture of the trainable restoration network: a conv head into
// `depth` residual blocks of `width` channels, and a conv tail back to
// image space, wrapped in a global residual connection.
struct RestorationNetConfig {
  int depth = 4;
  int width = 16;
  int kernel = 3;
  int in_channels = 1;

  void validate() const;
  // Compact id like "restore-d4-w16-k3-c1". Stored in ParamSets and
  // checkpoints so a parameter blob is self-describing.
  std::string arch_id() const;
  static RestorationNetConfig from_arch_id(const std::string& id);
};

// Frozen random feature extractor: one stride-1 stage followed by stride-2
// stages, each conv+relu, all outputs exposed as feature taps. Weights are
// drawn once from `seed` and never trained.
struct EmbeddingNetConfig {
  int taps = 3;
  int width = 8;
  int in_channels = 1;
  std::uint64_t seed = 7;

  void validate() const;
  std::string arch_id() const;
};

// An ordered, named collection of tensors. Order is the serialization
// order; names are unique. Two sets with the same arch_id always have the
// same entry names and shapes in the same order.
struct ParamSet {
  std::string arch_id;
  std::vector<std::pair<std::string, Tensor>> entries;

  Tensor& find(const std::string& name);
  const Tensor& find(const std::string& name) const;
  bool has(const std::string& name) const;

  // Deep copy; the copy's tensors get `requires_grad` as given (frozen
  // copies for the negative bank pass false).
  ParamSet clone_detached(bool requires_grad = false) const;
  void clear_grads();
  long total_elements() const;
};

// Seeded initialization: weights uniform in ±sqrt(3/fan_in), biases zero,
// everything requiring grad.
ParamSet init_params(const RestorationNetConfig& cfg, std::uint64_t seed);

// Same shapes as `like`, freshly drawn weights from `seed`, zero biases,
// requires_grad false. Used for the fixed random negative mode.
ParamSet reinit_like(const ParamSet& like, std::uint64_t seed);

// Runs the restoration net described by params.arch_id. Output has the
// input's shape; with all-zero parameters this is exactly the identity, so
// an untrained residual branch can only help, never destroy, the input.
Tensor forward_restore(const ParamSet& params, const Tensor& input);

// Elementwise wa*a + wb*b over two same-architecture sets. Never recorded
// on a tape; the result does not require grad.
ParamSet combine(const ParamSet& a, const ParamSet& b, double wa, double wb);

class EmbeddingNet {
 public:
  explicit EmbeddingNet(const EmbeddingNetConfig& cfg);

  // One feature tensor per tap, shallowest first. Gradients flow through
  // the frozen weights into the image, never into the weights.
  std::vector<Tensor> features(const Tensor& image) const;

  // Side length of the input patch one final-tap unit sees; images smaller
  // than this are rejected.
  long receptive_field() const;

  const EmbeddingNetConfig& config() const { return cfg_; }
  const ParamSet& params() const { return params_; }

 private:
  EmbeddingNetConfig cfg_;
  ParamSet params_;
};

// Convenience for tests and one-off calls: builds the frozen net and runs
// it. Deterministic given cfg.seed.
std::vector<Tensor> embed(const EmbeddingNetConfig& cfg, const Tensor& image);

}  // namespace mcl
