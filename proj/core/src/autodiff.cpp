#include "pact/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pact::ad {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const char* expect) {
  throw std::invalid_argument(std::string(op) + ": got shape " + shape_str(a) +
                              ", expected " + expect);
}

void require_same_tape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape())
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

double sigmoid_val(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
int64_t Tensor::size() const { return numel(shape()); }
const std::vector<double>& Tensor::values() const { return tape_->node(id_).val; }

double Tensor::value() const {
  const auto& v = values();
  if (v.size() != 1)
    throw std::logic_error("Tensor::value: tensor of size " + std::to_string(v.size()) +
                           " is not a scalar");
  return v[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!tape_->backward_done())
    throw std::logic_error("Tensor::grad: backward has not run on this tape");
  return tape_->node(id_).grad;
}

double Tensor::grad_value() const {
  const auto& g = grad();
  if (g.size() != 1) throw std::logic_error("Tensor::grad_value: not a scalar");
  return g[0];
}

Tensor Tape::leaf(Shape shape, std::vector<double> values) {
  if (numel(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("leaf: shape " + shape_str(shape) + " expects " +
                                std::to_string(numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  Node n;
  n.op = Op::kLeaf;
  n.shape = std::move(shape);
  n.val = std::move(values);
  return emit(std::move(n));
}

Tensor Tape::emit(Node&& n) {
  if (backward_done_)
    throw std::logic_error("Tape: recording after backward; reset() the tape first");
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// op constructors

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_tape("add", a, b);
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tape::Node n;
  n.op = Op::kAdd;
  n.shape = a.shape();
  n.p0 = a.id();
  n.p1 = b.id();
  n.val.resize(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = av[i] + bv[i];
  return a.tape()->emit(std::move(n));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_tape("sub", a, b);
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tape::Node n;
  n.op = Op::kSub;
  n.shape = a.shape();
  n.p0 = a.id();
  n.p1 = b.id();
  n.val.resize(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = av[i] - bv[i];
  return a.tape()->emit(std::move(n));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_tape("mul", a, b);
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tape::Node n;
  n.op = Op::kMul;
  n.shape = a.shape();
  n.p0 = a.id();
  n.p1 = b.id();
  n.val.resize(a.size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = av[i] * bv[i];
  return a.tape()->emit(std::move(n));
}

Tensor scale(const Tensor& a, double c) {
  Tape::Node n;
  n.op = Op::kScale;
  n.shape = a.shape();
  n.p0 = a.id();
  n.c0 = c;
  n.val.resize(a.size());
  const auto& av = a.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = av[i] * c;
  return a.tape()->emit(std::move(n));
}

Tensor add_scalar(const Tensor& a, double c) {
  Tape::Node n;
  n.op = Op::kAddScalar;
  n.shape = a.shape();
  n.p0 = a.id();
  n.c0 = c;
  n.val.resize(a.size());
  const auto& av = a.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = av[i] + c;
  return a.tape()->emit(std::move(n));
}

Tensor add_bcast(const Tensor& x, const Tensor& s) {
  require_same_tape("add_bcast", x, s);
  if (s.size() != 1) shape_error("add_bcast", s.shape(), "scalar");
  Tape::Node n;
  n.op = Op::kAddBcast;
  n.shape = x.shape();
  n.p0 = x.id();
  n.p1 = s.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  const double sv = s.values()[0];
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = xv[i] + sv;
  return x.tape()->emit(std::move(n));
}

Tensor mul_bcast(const Tensor& x, const Tensor& s) {
  require_same_tape("mul_bcast", x, s);
  if (s.size() != 1) shape_error("mul_bcast", s.shape(), "scalar");
  Tape::Node n;
  n.op = Op::kMulBcast;
  n.shape = x.shape();
  n.p0 = x.id();
  n.p1 = s.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  const double sv = s.values()[0];
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = xv[i] * sv;
  return x.tape()->emit(std::move(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_tape("matmul", a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    shape_error("matmul", as, bs);
  const int m = as[0], k = as[1], p = bs[1];
  Tape::Node n;
  n.op = Op::kMatmul;
  n.shape = {m, p};
  n.p0 = a.id();
  n.p1 = b.id();
  n.val.assign(static_cast<size_t>(m) * p, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < k; ++t) {
      const double av_it = av[i * k + t];
      for (int j = 0; j < p; ++j) n.val[i * p + j] += av_it * bv[t * p + j];
    }
  return a.tape()->emit(std::move(n));
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_same_tape("affine", x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 1 || ws.size() != 2 || ws[1] != xs[0]) shape_error("affine", ws, xs);
  const int m = ws[0], k = ws[1];
  if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != m))
    shape_error("affine bias", b.shape(), ws);
  Tape::Node n;
  n.op = Op::kAffine;
  n.shape = {m};
  n.p0 = x.id();
  n.p1 = w.id();
  n.p2 = b.defined() ? b.id() : -1;
  n.val.assign(m, 0.0);
  const auto& xv = x.values();
  const auto& wv = w.values();
  for (int i = 0; i < m; ++i) {
    double acc = b.defined() ? b.values()[i] : 0.0;
    for (int j = 0; j < k; ++j) acc += wv[i * k + j] * xv[j];
    n.val[i] = acc;
  }
  return x.tape()->emit(std::move(n));
}

Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  require_same_tape("conv3x3", x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3) shape_error("conv3x3 input", xs, "(C,H,W)");
  if (ws.size() != 4 || ws[2] != 3 || ws[3] != 3 || ws[1] != xs[0])
    shape_error("conv3x3 kernel", ws, xs);
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("conv3x3: stride must be 1 or 2");
  const int cin = xs[0], h = xs[1], wdt = xs[2], cout = ws[0];
  const int oh = (h + stride - 1) / stride, ow = (wdt + stride - 1) / stride;
  if (b.defined() && (b.shape().size() != 1 || b.shape()[0] != cout))
    shape_error("conv3x3 bias", b.shape(), ws);
  Tape::Node n;
  n.op = Op::kConv3x3;
  n.shape = {cout, oh, ow};
  n.p0 = x.id();
  n.p1 = w.id();
  n.p2 = b.defined() ? b.id() : -1;
  n.i0 = stride;
  n.val.assign(static_cast<size_t>(cout) * oh * ow, 0.0);
  const auto& xv = x.values();
  const auto& wv = w.values();
  for (int f = 0; f < cout; ++f) {
    const double bias = b.defined() ? b.values()[f] : 0.0;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias;
        const int iy0 = oy * stride - 1, ix0 = ox * stride - 1;
        for (int c = 0; c < cin; ++c)
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= wdt) continue;
              acc += wv[((f * cin + c) * 3 + ky) * 3 + kx] * xv[(c * h + iy) * wdt + ix];
            }
          }
        n.val[(f * oh + oy) * ow + ox] = acc;
      }
  }
  return x.tape()->emit(std::move(n));
}

Tensor mul_mask(const Tensor& x, const Tensor& mask) {
  require_same_tape("mul_mask", x, mask);
  const Shape& xs = x.shape();
  const Shape& ms = mask.shape();
  if (xs.size() != 3 || ms.size() != 2 || ms[0] != xs[1] || ms[1] != xs[2])
    shape_error("mul_mask", xs, ms);
  Tape::Node n;
  n.op = Op::kMulMask;
  n.shape = xs;
  n.p0 = x.id();
  n.p1 = mask.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  const auto& mv = mask.values();
  const int c = xs[0];
  const size_t hw = static_cast<size_t>(xs[1]) * xs[2];
  for (int ch = 0; ch < c; ++ch)
    for (size_t i = 0; i < hw; ++i) n.val[ch * hw + i] = xv[ch * hw + i] * mv[i];
  return x.tape()->emit(std::move(n));
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) shape_error("global_avg_pool", xs, "(C,H,W)");
  const int c = xs[0];
  const size_t hw = static_cast<size_t>(xs[1]) * xs[2];
  Tape::Node n;
  n.op = Op::kGlobalAvgPool;
  n.shape = {c};
  n.p0 = x.id();
  n.val.assign(c, 0.0);
  const auto& xv = x.values();
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (size_t i = 0; i < hw; ++i) acc += xv[ch * hw + i];
    n.val[ch] = acc / static_cast<double>(hw);
  }
  return x.tape()->emit(std::move(n));
}

Tensor avg_pool_patch(const Tensor& x, int patch) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) shape_error("avg_pool_patch", xs, "(H,W)");
  if (patch < 1 || xs[0] % patch != 0 || xs[1] % patch != 0)
    throw std::invalid_argument("avg_pool_patch: patch " + std::to_string(patch) +
                                " does not tile " + shape_str(xs));
  const int h = xs[0], w = xs[1], ph = h / patch, pw = w / patch;
  Tape::Node n;
  n.op = Op::kAvgPoolPatch;
  n.shape = {ph, pw};
  n.p0 = x.id();
  n.i0 = patch;
  n.val.assign(static_cast<size_t>(ph) * pw, 0.0);
  const auto& xv = x.values();
  const double inv = 1.0 / (patch * patch);
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px) {
      double acc = 0.0;
      for (int dy = 0; dy < patch; ++dy)
        for (int dx = 0; dx < patch; ++dx)
          acc += xv[(py * patch + dy) * w + (px * patch + dx)];
      n.val[py * pw + px] = acc * inv;
    }
  return x.tape()->emit(std::move(n));
}

Tensor repeat_patch(const Tensor& x, int patch) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) shape_error("repeat_patch", xs, "(H,W)");
  if (patch < 1) throw std::invalid_argument("repeat_patch: patch must be >= 1");
  const int ph = xs[0], pw = xs[1], h = ph * patch, w = pw * patch;
  Tape::Node n;
  n.op = Op::kRepeatPatch;
  n.shape = {h, w};
  n.p0 = x.id();
  n.i0 = patch;
  n.val.resize(static_cast<size_t>(h) * w);
  const auto& xv = x.values();
  for (int y = 0; y < h; ++y)
    for (int xw = 0; xw < w; ++xw)
      n.val[y * w + xw] = xv[(y / patch) * pw + (xw / patch)];
  return x.tape()->emit(std::move(n));
}

Tensor sigmoid(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kSigmoid;
  n.shape = x.shape();
  n.p0 = x.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = sigmoid_val(xv[i]);
  return x.tape()->emit(std::move(n));
}

Tensor tanh(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kTanh;
  n.shape = x.shape();
  n.p0 = x.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::tanh(xv[i]);
  return x.tape()->emit(std::move(n));
}

Tensor logit(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kLogit;
  n.shape = x.shape();
  n.p0 = x.id();
  n.val.resize(x.size());
  n.saved.resize(x.size());  // clamped probability, for the backward pass
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) {
    const double p = std::clamp(xv[i], kProbEps, 1.0 - kProbEps);
    n.saved[i] = (xv[i] >= kProbEps && xv[i] <= 1.0 - kProbEps) ? p : -1.0;
    n.val[i] = std::log(p / (1.0 - p));
  }
  return x.tape()->emit(std::move(n));
}

Tensor log(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kLog;
  n.shape = x.shape();
  n.p0 = x.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::log(xv[i]);
  return x.tape()->emit(std::move(n));
}

Tensor exp(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kExp;
  n.shape = x.shape();
  n.p0 = x.id();
  n.val.resize(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::exp(xv[i]);
  return x.tape()->emit(std::move(n));
}

Tensor sum(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kSum;
  n.shape = {1};
  n.p0 = x.id();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  n.val = {acc};
  return x.tape()->emit(std::move(n));
}

Tensor mean(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kMean;
  n.shape = {1};
  n.p0 = x.id();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  n.val = {acc / static_cast<double>(x.size())};
  return x.tape()->emit(std::move(n));
}

Tensor max_with(const Tensor& x, double c) {
  Tape::Node n;
  n.op = Op::kMaxWith;
  n.shape = x.shape();
  n.p0 = x.id();
  n.c0 = c;
  n.val.resize(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::max(xv[i], c);
  return x.tape()->emit(std::move(n));
}

Tensor min_with(const Tensor& x, double c) {
  Tape::Node n;
  n.op = Op::kMinWith;
  n.shape = x.shape();
  n.p0 = x.id();
  n.c0 = c;
  n.val.resize(x.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::min(xv[i], c);
  return x.tape()->emit(std::move(n));
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return min_with(max_with(x, lo), hi);
}

Tensor log_softmax(const Tensor& logits) {
  const Shape& s = logits.shape();
  if (s.size() != 1) shape_error("log_softmax", s, "(n)");
  Tape::Node n;
  n.op = Op::kLogSoftmax;
  n.shape = s;
  n.p0 = logits.id();
  n.val.resize(logits.size());
  const auto& xv = logits.values();
  const double mx = *std::max_element(xv.begin(), xv.end());
  double z = 0.0;
  for (double v : xv) z += std::exp(v - mx);
  const double logz = mx + std::log(z);
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = xv[i] - logz;
  return logits.tape()->emit(std::move(n));
}

Tensor softmax_cross_entropy(const Tensor& logits, int target) {
  const Shape& s = logits.shape();
  if (s.size() != 1) shape_error("softmax_cross_entropy", s, "(n)");
  if (target < 0 || target >= s[0])
    throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(target) +
                                " out of range for " + shape_str(s));
  Tape::Node n;
  n.op = Op::kSoftmaxXent;
  n.shape = {1};
  n.p0 = logits.id();
  n.i0 = target;
  const auto& xv = logits.values();
  const double mx = *std::max_element(xv.begin(), xv.end());
  double z = 0.0;
  for (double v : xv) z += std::exp(v - mx);
  const double logz = mx + std::log(z);
  n.saved.resize(xv.size());  // softmax probabilities
  for (size_t i = 0; i < xv.size(); ++i) n.saved[i] = std::exp(xv[i] - logz);
  n.val = {logz - xv[target]};
  return logits.tape()->emit(std::move(n));
}

Tensor pick(const Tensor& x, int index) {
  if (index < 0 || index >= x.size())
    throw std::invalid_argument("pick: index " + std::to_string(index) +
                                " out of range for " + shape_str(x.shape()));
  Tape::Node n;
  n.op = Op::kPick;
  n.shape = {1};
  n.p0 = x.id();
  n.i0 = index;
  n.val = {x.values()[index]};
  return x.tape()->emit(std::move(n));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  Tape::Node n;
  n.op = Op::kReshape;
  n.shape = std::move(shape);
  n.p0 = x.id();
  n.val = x.values();
  return x.tape()->emit(std::move(n));
}

Tensor stop_gradient(const Tensor& x) {
  Tape::Node n;
  n.op = Op::kStopGradient;
  n.shape = x.shape();
  n.p0 = x.id();
  n.val = x.values();
  return x.tape()->emit(std::move(n));
}

// ---------------------------------------------------------------------------
// backward

void Tape::backward(const Tensor& root) {
  if (backward_done_)
    throw std::logic_error("Tape::backward: tape already replayed; re-record before a second pass");
  if (root.tape() != this) throw std::invalid_argument("Tape::backward: root from another tape");
  if (root.size() != 1)
    throw std::invalid_argument("Tape::backward: root must be scalar, got shape " +
                                shape_str(root.shape()));
  backward_done_ = true;
  for (auto& n : nodes_) n.grad.assign(n.val.size(), 0.0);
  nodes_[root.id()].grad[0] = 1.0;

  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    const auto& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        auto& ga = nodes_[n.p0].grad;
        auto& gb = nodes_[n.p1].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        auto& ga = nodes_[n.p0].grad;
        auto& gb = nodes_[n.p1].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        auto& ga = nodes_[n.p0].grad;
        auto& gb = nodes_[n.p1].grad;
        const auto& av = nodes_[n.p0].val;
        const auto& bv = nodes_[n.p1].val;
        for (size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * bv[i];
          gb[i] += g[i] * av[i];
        }
        break;
      }
      case Op::kScale: {
        auto& ga = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.c0;
        break;
      }
      case Op::kAddScalar: {
        auto& ga = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::kAddBcast: {
        auto& gx = nodes_[n.p0].grad;
        auto& gs = nodes_[n.p1].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          gx[i] += g[i];
          gs[0] += g[i];
        }
        break;
      }
      case Op::kMulBcast: {
        auto& gx = nodes_[n.p0].grad;
        auto& gs = nodes_[n.p1].grad;
        const auto& xv = nodes_[n.p0].val;
        const double sv = nodes_[n.p1].val[0];
        for (size_t i = 0; i < g.size(); ++i) {
          gx[i] += g[i] * sv;
          gs[0] += g[i] * xv[i];
        }
        break;
      }
      case Op::kMatmul: {
        const int m = nodes_[n.p0].shape[0], k = nodes_[n.p0].shape[1], p = n.shape[1];
        auto& ga = nodes_[n.p0].grad;
        auto& gb = nodes_[n.p1].grad;
        const auto& av = nodes_[n.p0].val;
        const auto& bv = nodes_[n.p1].val;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) {
            const double gij = g[i * p + j];
            if (gij == 0.0) continue;
            for (int t = 0; t < k; ++t) {
              ga[i * k + t] += gij * bv[t * p + j];
              gb[t * p + j] += gij * av[i * k + t];
            }
          }
        break;
      }
      case Op::kAffine: {
        const int m = n.shape[0], k = nodes_[n.p0].shape[0];
        auto& gx = nodes_[n.p0].grad;
        auto& gw = nodes_[n.p1].grad;
        const auto& xv = nodes_[n.p0].val;
        const auto& wv = nodes_[n.p1].val;
        for (int i = 0; i < m; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          for (int j = 0; j < k; ++j) {
            gx[j] += gi * wv[i * k + j];
            gw[i * k + j] += gi * xv[j];
          }
          if (n.p2 >= 0) nodes_[n.p2].grad[i] += gi;
        }
        break;
      }
      case Op::kConv3x3: {
        const Shape& xs = nodes_[n.p0].shape;
        const int cin = xs[0], h = xs[1], wdt = xs[2];
        const int cout = n.shape[0], oh = n.shape[1], ow = n.shape[2];
        const int stride = n.i0;
        auto& gx = nodes_[n.p0].grad;
        auto& gw = nodes_[n.p1].grad;
        const auto& xv = nodes_[n.p0].val;
        const auto& wv = nodes_[n.p1].val;
        for (int f = 0; f < cout; ++f)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const double go = g[(f * oh + oy) * ow + ox];
              if (go == 0.0) continue;
              if (n.p2 >= 0) nodes_[n.p2].grad[f] += go;
              const int iy0 = oy * stride - 1, ix0 = ox * stride - 1;
              for (int c = 0; c < cin; ++c)
                for (int ky = 0; ky < 3; ++ky) {
                  const int iy = iy0 + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= wdt) continue;
                    gx[(c * h + iy) * wdt + ix] += go * wv[((f * cin + c) * 3 + ky) * 3 + kx];
                    gw[((f * cin + c) * 3 + ky) * 3 + kx] += go * xv[(c * h + iy) * wdt + ix];
                  }
                }
            }
        break;
      }
      case Op::kMulMask: {
        const Shape& xs = nodes_[n.p0].shape;
        const int c = xs[0];
        const size_t hw = static_cast<size_t>(xs[1]) * xs[2];
        auto& gx = nodes_[n.p0].grad;
        auto& gm = nodes_[n.p1].grad;
        const auto& xv = nodes_[n.p0].val;
        const auto& mv = nodes_[n.p1].val;
        for (int ch = 0; ch < c; ++ch)
          for (size_t i = 0; i < hw; ++i) {
            gx[ch * hw + i] += g[ch * hw + i] * mv[i];
            gm[i] += g[ch * hw + i] * xv[ch * hw + i];
          }
        break;
      }
      case Op::kGlobalAvgPool: {
        const Shape& xs = nodes_[n.p0].shape;
        const int c = xs[0];
        const size_t hw = static_cast<size_t>(xs[1]) * xs[2];
        auto& gx = nodes_[n.p0].grad;
        const double inv = 1.0 / static_cast<double>(hw);
        for (int ch = 0; ch < c; ++ch)
          for (size_t i = 0; i < hw; ++i) gx[ch * hw + i] += g[ch] * inv;
        break;
      }
      case Op::kAvgPoolPatch: {
        const int patch = n.i0;
        const Shape& xs = nodes_[n.p0].shape;
        const int w = xs[1], pw = n.shape[1];
        auto& gx = nodes_[n.p0].grad;
        const double inv = 1.0 / (patch * patch);
        for (int y = 0; y < xs[0]; ++y)
          for (int x = 0; x < w; ++x)
            gx[y * w + x] += g[(y / patch) * pw + (x / patch)] * inv;
        break;
      }
      case Op::kRepeatPatch: {
        const int patch = n.i0;
        const int w = n.shape[1], pw = nodes_[n.p0].shape[1];
        auto& gx = nodes_[n.p0].grad;
        for (int y = 0; y < n.shape[0]; ++y)
          for (int x = 0; x < w; ++x)
            gx[(y / patch) * pw + (x / patch)] += g[y * w + x];
        break;
      }
      case Op::kSigmoid: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
        break;
      }
      case Op::kTanh: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
        break;
      }
      case Op::kLogit: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) {
          const double p = n.saved[i];
          if (p >= 0.0) gx[i] += g[i] / (p * (1.0 - p));
          // clamped inputs get zero gradient, consistent with the clamp
        }
        break;
      }
      case Op::kLog: {
        auto& gx = nodes_[n.p0].grad;
        const auto& xv = nodes_[n.p0].val;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
        break;
      }
      case Op::kExp: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.val[i];
        break;
      }
      case Op::kSum: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
        break;
      }
      case Op::kMean: {
        auto& gx = nodes_[n.p0].grad;
        const double inv = 1.0 / static_cast<double>(gx.size());
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * inv;
        break;
      }
      case Op::kMaxWith: {
        auto& gx = nodes_[n.p0].grad;
        const auto& xv = nodes_[n.p0].val;
        for (size_t i = 0; i < g.size(); ++i)
          if (xv[i] > n.c0) gx[i] += g[i];
        break;
      }
      case Op::kMinWith: {
        auto& gx = nodes_[n.p0].grad;
        const auto& xv = nodes_[n.p0].val;
        for (size_t i = 0; i < g.size(); ++i)
          if (xv[i] < n.c0) gx[i] += g[i];
        break;
      }
      case Op::kLogSoftmax: {
        auto& gx = nodes_[n.p0].grad;
        double gsum = 0.0;
        for (double v : g) gsum += v;
        for (size_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] - std::exp(n.val[i]) * gsum;
        break;
      }
      case Op::kSoftmaxXent: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < gx.size(); ++i) {
          double d = n.saved[i];
          if (static_cast<int>(i) == n.i0) d -= 1.0;
          gx[i] += g[0] * d;
        }
        break;
      }
      case Op::kPick: {
        nodes_[n.p0].grad[n.i0] += g[0];
        break;
      }
      case Op::kReshape: {
        auto& gx = nodes_[n.p0].grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        break;
      }
      case Op::kStopGradient:
        break;
    }
  }
}

}  // namespace pact::ad
