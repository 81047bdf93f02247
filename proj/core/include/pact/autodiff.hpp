#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pact::ad {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] before logit so the
// log-odds stay finite. Library-wide constant.
inline constexpr double kProbEps = 1e-6;

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Handle to a node on a Tape. Cheap to copy; a default-constructed Tensor is
// null and only valid as an "absent" marker (e.g. optional bias).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool defined() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Shape& shape() const;
  int64_t size() const;
  const std::vector<double>& values() const;
  double value() const;  // requires size() == 1

  // Adjoint of this node after Tape::backward.
  const std::vector<double>& grad() const;
  double grad_value() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,        // x * c
  kAddScalar,    // x + c
  kAddBcast,     // x + broadcast(scalar s)
  kMulBcast,     // x * broadcast(scalar s)
  kMatmul,       // (m,k) x (k,n)
  kAffine,       // W x + b, W:(m,n) x:(n) b:(m) optional
  kConv3x3,      // w:(F,C,3,3) x:(C,H,W), padding 1, stride 1 or 2
  kMulMask,      // x:(C,H,W) * mask:(H,W) per channel
  kGlobalAvgPool,  // (C,H,W) -> (C)
  kAvgPoolPatch,   // (H,W) -> (H/n, W/n), mean over n x n patches
  kRepeatPatch,    // (H/n, W/n) -> (H,W), nearest-neighbour upsample
  kSigmoid,
  kTanh,
  kLogit,
  kLog,
  kExp,
  kSum,
  kMean,
  kMaxWith,  // max(x, c) elementwise
  kMinWith,  // min(x, c) elementwise
  kLogSoftmax,
  kSoftmaxXent,  // -log softmax(logits)[target]
  kPick,         // x[index] -> scalar
  kReshape,      // same element count, new extents
  kStopGradient,
};

// Append-only record of one forward pass. backward() replays the tape in
// reverse topological order exactly once; running it twice without reset()
// is an error rather than silent corruption.
class Tape {
 public:
  Tape() = default;
  // Tensors hold pointers into their tape; pin it in place.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Shape shape, std::vector<double> values);
  Tensor scalar(double v) { return leaf({1}, {v}); }
  Tensor constant(Shape shape, std::vector<double> values) {
    return leaf(std::move(shape), std::move(values));
  }

  // root must be scalar. Seeds the root adjoint with 1 and accumulates
  // adjoints into every node reachable from it.
  void backward(const Tensor& root);

  // Clears all nodes; existing Tensor handles become invalid.
  void reset();

  size_t node_count() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  struct Node {
    Op op = Op::kLeaf;
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;  // lazily allocated at backward time
    int p0 = -1, p1 = -1, p2 = -1;
    double c0 = 0.0;           // scalar constant (scale, clamp bound, ...)
    int i0 = 0;                // integer aux (stride, target, patch size, ...)
    std::vector<double> saved; // saved partials when cheaper than recompute
  };

  const Node& node(int id) const { return nodes_[id]; }
  Node& node(int id) { return nodes_[id]; }
  Tensor emit(Node&& n);

 private:
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise / shape-checked operators. Both operands must live on the same
// tape; shape mismatches throw std::invalid_argument naming the op and both
// shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor add_bcast(const Tensor& x, const Tensor& s);
Tensor mul_bcast(const Tensor& x, const Tensor& s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());
Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b = Tensor(),
               int stride = 1);
Tensor mul_mask(const Tensor& x, const Tensor& mask);
Tensor global_avg_pool(const Tensor& x);
Tensor avg_pool_patch(const Tensor& x, int patch);
Tensor repeat_patch(const Tensor& x, int patch);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor logit(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor max_with(const Tensor& x, double c);
Tensor min_with(const Tensor& x, double c);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor log_softmax(const Tensor& logits);
Tensor softmax_cross_entropy(const Tensor& logits, int target);
Tensor pick(const Tensor& x, int index);
Tensor reshape(const Tensor& x, Shape shape);
Tensor stop_gradient(const Tensor& x);

}  // namespace pact::ad
