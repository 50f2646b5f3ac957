#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcl/errors.hpp"
#include "mcl/rng.hpp"

namespace mcl {

// All tensors are dense 4-D (batch, channels, height, width) of doubles in
// row-major order: flat index ((n*C + c)*H + h)*W + w.
struct Shape {
  long n = 0, c = 0, h = 0, w = 0;

  long numel() const { return n * c * h * w; }
  bool operator==(const Shape& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  Eigen::ArrayXd data;
  bool requires_grad = false;
  // Allocated lazily, and only ever for tensors with requires_grad set.
  std::unique_ptr<Eigen::ArrayXd> grad;
};
}  // namespace detail

// Value-semantics handle over shared storage: copies alias the same buffer,
// which is what lets the tape refer to operands cheaply. Use
// clone_detached() for a genuine deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, double v, bool requires_grad = false);
  static Tensor from(const Shape& s, const std::vector<double>& values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Elements drawn in flat index order so results are reproducible.
  static Tensor uniform(const Shape& s, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  long numel() const { return shape().numel(); }

  Eigen::ArrayXd& array();
  const Eigen::ArrayXd& array() const;
  double* raw();
  const double* raw() const;

  // Scalar accessors; throw ContractError unless numel() == 1.
  double value() const;

  double at(long n, long c, long h, long w) const;
  double& at(long n, long c, long h, long w);

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  bool has_grad() const;
  Eigen::ArrayXd& grad();
  const Eigen::ArrayXd& grad() const;
  // Allocates a zero grad buffer if absent. Only legal on requires_grad
  // tensors: everything else must never grow a grad array.
  void ensure_grad();
  void accumulate_grad(const Eigen::ArrayXd& g);
  void clear_grad();

  Tensor clone_detached() const;
  bool same_impl(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
  detail::TensorImpl& impl() const;
};

// Reverse-mode tape. Operations append nodes while a tape is active (see
// TapeGuard) and gradients are propagated by walking the nodes backwards.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    // Receives d(root)/d(output) and accumulates into the inputs' grads.
    std::function<void(const Eigen::ArrayXd&)> backward;
  };

  void record(Node n) { nodes_.push_back(std::move(n)); }
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // The tape operations currently record onto, or nullptr. Thread-local.
  static Tape* active();

 private:
  std::vector<Node> nodes_;
};

// Makes a tape the active one for the current scope (and thread).
class TapeGuard {
 public:
  explicit TapeGuard(Tape& t);
  ~TapeGuard();
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* prev_;
};

// Disables recording for the current scope, torch-style.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// --- Operations -----------------------------------------------------------
// Each op validates shapes, computes the forward value, and records a node
// when (a) a tape is active, (b) grads are enabled and (c) any input
// requires grad. Outputs of recorded nodes require grad themselves so that
// chains propagate.

// 2-D convolution. weight is (c_out, c_in, kh, kw); bias is (1, c_out, 1, 1)
// and may be a default-constructed Tensor to mean "no bias". Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
// Sum of all elements, as a 1x1x1x1 tensor.
Tensor sum(const Tensor& x);
// Mean absolute / squared difference, as 1x1x1x1 tensors. The l1 subgradient
// at a_i == b_i is 0, as is relu's at 0: deterministic tie-breaks.
Tensor l1_mean(const Tensor& a, const Tensor& b);
Tensor mse_mean(const Tensor& a, const Tensor& b);

// Propagates d(root)/d(ancestor) into every requires_grad ancestor's grad
// buffer (accumulating), then clears the tape. root must be scalar and must
// have been produced through `tape`.
void backward(const Tensor& root, Tape& tape);

}  // namespace mcl
