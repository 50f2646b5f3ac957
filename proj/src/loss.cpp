#include "mcl/loss.hpp"

#include <sstream>

namespace mcl {

std::string to_string(LossKind kind) {
  return kind == LossKind::MAE ? "mae" : "mse";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mae") return LossKind::MAE;
  if (s == "mse") return LossKind::MSE;
  throw ConfigError("unknown loss kind '" + s + "' (expected mae or mse)");
}

Tensor reconstruction_loss(const Tensor& rec, const Tensor& hq,
                           LossKind kind) {
  return kind == LossKind::MAE ? l1_mean(rec, hq) : mse_mean(rec, hq);
}

std::pair<Tensor, std::vector<double>> negative_loss(
    const Tensor& rec, const std::vector<Tensor>& negatives,
    const EmbeddingNet& net) {
  if (negatives.empty())
    throw ContractError("negative_loss: empty negative list");

  // Anchor features once, on the tape. Each negative's features are built
  // from detached images through frozen weights, so those forwards record
  // nothing and the distance gradients reach only `rec`.
  const std::vector<Tensor> f_rec = net.features(rec);
  const double inv_taps = 1.0 / static_cast<double>(f_rec.size());

  Tensor total;
  std::vector<double> per;
  per.reserve(negatives.size());
  for (const Tensor& neg : negatives) {
    const std::vector<Tensor> f_neg = net.features(neg);
    Tensor li = l1_mean(f_rec[0], f_neg[0]);
    for (std::size_t k = 1; k < f_rec.size(); ++k)
      li = add(li, l1_mean(f_rec[k], f_neg[k]));
    li = scale(li, inv_taps);
    per.push_back(li.value());
    total = total.defined() ? add(total, li) : li;
  }
  total = scale(total, 1.0 / static_cast<double>(negatives.size()));
  return {total, std::move(per)};
}

std::pair<Tensor, std::vector<double>> negative_loss(
    const Tensor& rec, const std::vector<Tensor>& negatives,
    const EmbeddingNetConfig& cfg) {
  return negative_loss(rec, negatives, EmbeddingNet(cfg));
}

Tensor total_loss(const Tensor& rec_loss, const Tensor& neg_loss,
                  double lambda) {
  if (lambda < 0.0) {
    std::ostringstream os;
    os << "lambda must be >= 0, got " << lambda;
    throw ConfigError(os.str());
  }
  return sub(rec_loss, scale(neg_loss, lambda));
}

}  // namespace mcl
