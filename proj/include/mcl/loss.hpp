#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcl/nets.hpp"
#include "mcl/tensor.hpp"

namespace mcl {

enum class LossKind { MAE, MSE };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

// Reporting record for one training step. `total` relates to the others as
// total = rec - lambda * neg, and neg is the mean of per_negative.
struct LossBreakdown {
  double rec = 0.0;
  double neg = 0.0;
  double total = 0.0;
  std::vector<double> per_negative;
};

// Pixel-space distance between the reconstruction and the clean target.
Tensor reconstruction_loss(const Tensor& rec, const Tensor& hq,
                           LossKind kind);

// Feature-space distance between the reconstruction and each negative:
// per negative, the mean over embedding taps of the mean absolute feature
// difference; the first return is the average over negatives. Negatives
// must arrive detached — gradients flow into `rec` only. The second return
// carries the per-negative values for reporting.
std::pair<Tensor, std::vector<double>> negative_loss(
    const Tensor& rec, const std::vector<Tensor>& negatives,
    const EmbeddingNet& net);

// Convenience overload that builds the frozen embedding on the fly.
std::pair<Tensor, std::vector<double>> negative_loss(
    const Tensor& rec, const std::vector<Tensor>& negatives,
    const EmbeddingNetConfig& cfg);

// total = rec_loss - lambda * neg_loss: the reconstruction is pulled toward
// the target and pushed away from the negatives' features.
Tensor total_loss(const Tensor& rec_loss, const Tensor& neg_loss,
                  double lambda);

}  // namespace mcl
