#include "mcl/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <utility>

namespace mcl {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

thread_local Tape* g_active_tape = nullptr;
thread_local bool g_grad_enabled = true;

bool recording_for(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr || !g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return;
  const char* axis = sa.n != sb.n   ? "batch (n)"
                     : sa.c != sb.c ? "channels (c)"
                     : sa.h != sb.h ? "height (h)"
                                    : "width (w)";
  std::ostringstream os;
  os << op << ": shapes " << sa.str() << " and " << sb.str()
     << " differ on the " << axis << " axis";
  throw DimensionError(os.str());
}

// Unpacks a (c_in*kh*kw) x (ho*wo) patch matrix from one image, zero-filling
// where the window overlaps the padding border.
void im2col(const double* img, long ci, long hi, long wi, long kh, long kw,
            long ho, long wo, int stride, int padding, Eigen::MatrixXd& K) {
  for (long c = 0; c < ci; ++c) {
    const double* plane = img + c * hi * wi;
    for (long ky = 0; ky < kh; ++ky) {
      for (long kx = 0; kx < kw; ++kx) {
        const long r = (c * kh + ky) * kw + kx;
        for (long oy = 0; oy < ho; ++oy) {
          const long iy = oy * stride - padding + ky;
          const bool row_ok = iy >= 0 && iy < hi;
          for (long ox = 0; ox < wo; ++ox) {
            const long ix = ox * stride - padding + kx;
            const bool ok = row_ok && ix >= 0 && ix < wi;
            K(r, oy * wo + ox) = ok ? plane[iy * wi + ix] : 0.0;
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds patch-matrix gradients back onto the
// image gradient, skipping positions that fell on padding.
void col2im_add(const Eigen::MatrixXd& cols, long ci, long hi, long wi,
                long kh, long kw, long ho, long wo, int stride, int padding,
                double* img_grad) {
  for (long c = 0; c < ci; ++c) {
    double* plane = img_grad + c * hi * wi;
    for (long ky = 0; ky < kh; ++ky) {
      for (long kx = 0; kx < kw; ++kx) {
        const long r = (c * kh + ky) * kw + kx;
        for (long oy = 0; oy < ho; ++oy) {
          const long iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= hi) continue;
          for (long ox = 0; ox < wo; ++ox) {
            const long ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= wi) continue;
            plane[iy * wi + ix] += cols(r, oy * wo + ox);
          }
        }
      }
    }
  }
}

}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << "(n=" << n << ", c=" << c << ", h=" << h << ", w=" << w << ")";
  return os.str();
}

// --- Tensor ----------------------------------------------------------------

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("tensor is undefined (default-constructed)");
  return *impl_;
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
    throw DimensionError("tensor shape must be non-negative, got " + s.str());
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = s;
  t.impl_->data = Eigen::ArrayXd::Zero(s.numel());
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(const Shape& s, double v, bool requires_grad) {
  Tensor t = zeros(s, requires_grad);
  t.array().setConstant(v);
  return t;
}

Tensor Tensor::from(const Shape& s, const std::vector<double>& values,
                    bool requires_grad) {
  if (static_cast<long>(values.size()) != s.numel()) {
    std::ostringstream os;
    os << "value count " << values.size() << " does not fill shape " << s.str();
    throw DimensionError(os.str());
  }
  Tensor t = zeros(s, requires_grad);
  std::copy(values.begin(), values.end(), t.raw());
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return full({1, 1, 1, 1}, v, requires_grad);
}

Tensor Tensor::uniform(const Shape& s, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  Tensor t = zeros(s, requires_grad);
  double* p = t.raw();
  const long n = s.numel();
  for (long i = 0; i < n; ++i) p[i] = rng.range(lo, hi);
  return t;
}

const Shape& Tensor::shape() const { return impl().shape; }
Eigen::ArrayXd& Tensor::array() { return impl().data; }
const Eigen::ArrayXd& Tensor::array() const { return impl().data; }
double* Tensor::raw() { return impl().data.data(); }
const double* Tensor::raw() const { return impl().data.data(); }

double Tensor::value() const {
  if (numel() != 1)
    throw ContractError("value(): tensor " + shape().str() + " is not scalar");
  return impl().data(0);
}

double Tensor::at(long n, long c, long h, long w) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 ||
      w >= s.w)
    throw ContractError("at(): index out of range for " + s.str());
  return impl().data(((n * s.c + c) * s.h + h) * s.w + w);
}

double& Tensor::at(long n, long c, long h, long w) {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 ||
      w >= s.w)
    throw ContractError("at(): index out of range for " + s.str());
  return impl().data(((n * s.c + c) * s.h + h) * s.w + w);
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  impl().requires_grad = rg;
  if (!rg) impl().grad.reset();
}

bool Tensor::has_grad() const { return impl().grad != nullptr; }

Eigen::ArrayXd& Tensor::grad() {
  if (!has_grad()) throw ContractError("grad(): no gradient present");
  return *impl().grad;
}

const Eigen::ArrayXd& Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad(): no gradient present");
  return *impl().grad;
}

void Tensor::ensure_grad() {
  detail::TensorImpl& im = impl();
  if (!im.requires_grad)
    throw ContractError(
        "ensure_grad(): tensor does not require grad; refusing to allocate");
  if (!im.grad)
    im.grad = std::make_unique<Eigen::ArrayXd>(
        Eigen::ArrayXd::Zero(im.shape.numel()));
}

void Tensor::accumulate_grad(const Eigen::ArrayXd& g) {
  ensure_grad();
  if (g.size() != impl().grad->size())
    throw DimensionError("accumulate_grad(): gradient length mismatch");
  *impl().grad += g;
}

void Tensor::clear_grad() { impl().grad.reset(); }

Tensor Tensor::clone_detached() const {
  Tensor t = zeros(shape(), false);
  t.array() = array();
  return t;
}

// --- Tape & guards ----------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

TapeGuard::TapeGuard(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeGuard::~TapeGuard() { g_active_tape = prev_; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

// --- Operations ------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.c != is.c) {
    std::ostringstream os;
    os << "conv2d: input channel axis (c=" << is.c
       << ") does not match weight input channels (c_in=" << ws.c << ")";
    throw DimensionError(os.str());
  }
  if (bias.defined()) {
    const Shape& bs = bias.shape();
    if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
      std::ostringstream os;
      os << "conv2d: bias must be (1, c_out=" << ws.n << ", 1, 1), got "
         << bs.str();
      throw DimensionError(os.str());
    }
  }
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (padding < 0) throw ContractError("conv2d: padding must be >= 0");

  const long n = is.n, ci = is.c, hi = is.h, wi = is.w;
  const long co = ws.n, kh = ws.h, kw = ws.w;
  if (hi + 2 * padding < kh || wi + 2 * padding < kw) {
    std::ostringstream os;
    os << "conv2d: kernel " << kh << "x" << kw
       << " does not fit padded input on the height/width axes " << is.str();
    throw DimensionError(os.str());
  }
  const long ho = (hi + 2 * padding - kh) / stride + 1;
  const long wo = (wi + 2 * padding - kw) / stride + 1;
  const long R = ci * kh * kw;   // patch rows
  const long J = ho * wo;        // output positions

  Tensor out = Tensor::zeros({n, co, ho, wo});

  // The weight's flat (co, ci, kh, kw) layout is exactly a row-major
  // co x (ci*kh*kw) matrix, and each output image is a row-major
  // co x (ho*wo) matrix, so the whole forward is one GEMM per image.
  ConstRowMap W(weight.raw(), co, R);
  const bool rec = recording_for({&input, &weight, &bias});
  auto patches = rec ? std::make_shared<std::vector<Eigen::MatrixXd>>()
                     : nullptr;

  Eigen::MatrixXd K(R, J);
  for (long b = 0; b < n; ++b) {
    im2col(input.raw() + b * ci * hi * wi, ci, hi, wi, kh, kw, ho, wo, stride,
           padding, K);
    RowMap O(out.raw() + b * co * J, co, J);
    O.noalias() = W * K;
    if (bias.defined()) {
      for (long o = 0; o < co; ++o) O.row(o).array() += bias.raw()[o];
    }
    if (patches) patches->push_back(K);
  }

  if (rec) {
    out.set_requires_grad(true);
    Tensor in_h = input, w_h = weight, b_h = bias;
    Tape::active()->record(
        {{input, weight, bias},
         out,
         [in_h, w_h, b_h, patches, n, ci, hi, wi, co, kh, kw, ho, wo, R, J,
          stride, padding](const Eigen::ArrayXd& g) mutable {
           ConstRowMap Wm(w_h.raw(), co, R);
           for (long b = 0; b < n; ++b) {
             ConstRowMap Gout(g.data() + b * co * J, co, J);
             if (w_h.requires_grad()) {
               w_h.ensure_grad();
               RowMap gW(w_h.grad().data(), co, R);
               gW.noalias() += Gout * (*patches)[b].transpose();
             }
             if (b_h.defined() && b_h.requires_grad()) {
               b_h.ensure_grad();
               for (long o = 0; o < co; ++o)
                 b_h.grad()(o) += Gout.row(o).sum();
             }
             if (in_h.requires_grad()) {
               in_h.ensure_grad();
               Eigen::MatrixXd cols(R, J);
               cols.noalias() = Wm.transpose() * Gout;
               col2im_add(cols, ci, hi, wi, kh, kw, ho, wo, stride, padding,
                          in_h.grad().data() + b * ci * hi * wi);
             }
           }
         }});
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  out.array() = x.array().max(0.0);
  if (recording_for({&x})) {
    out.set_requires_grad(true);
    Tensor xh = x;
    Tape::active()->record({{x},
                            out,
                            [xh](const Eigen::ArrayXd& g) mutable {
                              if (!xh.requires_grad()) return;
                              // strict '>' keeps the subgradient at 0 equal
                              // to 0
                              xh.accumulate_grad(
                                  (xh.array() > 0.0).cast<double>() * g);
                            }});
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.array() = a.array() + b.array();
  if (recording_for({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b;
    Tape::active()->record({{a, b},
                            out,
                            [ah, bh](const Eigen::ArrayXd& g) mutable {
                              if (ah.requires_grad()) ah.accumulate_grad(g);
                              if (bh.requires_grad()) bh.accumulate_grad(g);
                            }});
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.array() = a.array() - b.array();
  if (recording_for({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b;
    Tape::active()->record({{a, b},
                            out,
                            [ah, bh](const Eigen::ArrayXd& g) mutable {
                              if (ah.requires_grad()) ah.accumulate_grad(g);
                              if (bh.requires_grad()) bh.accumulate_grad(-g);
                            }});
  }
  return out;
}

Tensor scale(const Tensor& a, double k) {
  Tensor out = Tensor::zeros(a.shape());
  out.array() = k * a.array();
  if (recording_for({&a})) {
    out.set_requires_grad(true);
    Tensor ah = a;
    Tape::active()->record({{a},
                            out,
                            [ah, k](const Eigen::ArrayXd& g) mutable {
                              if (ah.requires_grad())
                                ah.accumulate_grad(k * g);
                            }});
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(x.array().sum());
  if (recording_for({&x})) {
    out.set_requires_grad(true);
    Tensor xh = x;
    Tape::active()->record({{x},
                            out,
                            [xh](const Eigen::ArrayXd& g) mutable {
                              if (!xh.requires_grad()) return;
                              xh.ensure_grad();
                              xh.grad() += g(0);
                            }});
  }
  return out;
}

namespace {

// Shared core of the two mean-reduced distances. `squared` selects MSE.
Tensor mean_distance(const char* name, const Tensor& a, const Tensor& b,
                     bool squared) {
  require_same_shape(name, a, b);
  const double n = static_cast<double>(a.numel());
  Eigen::ArrayXd d = a.array() - b.array();
  const double v = squared ? d.square().mean() : d.abs().mean();
  Tensor out = Tensor::scalar(v);
  if (recording_for({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ah = a, bh = b;
    Tape::active()->record(
        {{a, b},
         out,
         [ah, bh, n, squared](const Eigen::ArrayXd& g) mutable {
           Eigen::ArrayXd d = ah.array() - bh.array();
           Eigen::ArrayXd ga;
           if (squared) {
             ga = (2.0 / n) * d;
           } else {
             // sign with sign(0) == 0, the deterministic subgradient choice
             ga = ((d > 0.0).cast<double>() - (d < 0.0).cast<double>()) / n;
           }
           ga *= g(0);
           if (ah.requires_grad()) ah.accumulate_grad(ga);
           if (bh.requires_grad()) bh.accumulate_grad(-ga);
         }});
  }
  return out;
}

}  // namespace

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  return mean_distance("l1_mean", a, b, false);
}

Tensor mse_mean(const Tensor& a, const Tensor& b) {
  return mean_distance("mse_mean", a, b, true);
}

void backward(const Tensor& root, Tape& tape) {
  if (!root.defined())
    throw ContractError("backward: root tensor is undefined");
  if (root.numel() != 1)
    throw ContractError("backward: root must be a 1x1x1x1 scalar, got " +
                        root.shape().str());
  const auto& nodes = tape.nodes();
  const bool on_tape =
      std::any_of(nodes.begin(), nodes.end(),
                  [&](const Tape::Node& n) { return n.output.same_impl(root); });
  if (!on_tape)
    throw ContractError("backward: root was not produced on this tape");

  Tensor r = root;
  r.ensure_grad();
  r.grad()(0) += 1.0;

  // Nodes were appended in topological order, so one reverse sweep sees
  // every output's full gradient before consuming it. Outputs nothing
  // reached keep a null grad and are skipped.
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
  tape.clear();
}

}  // namespace mcl
