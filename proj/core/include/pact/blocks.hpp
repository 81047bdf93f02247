#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pact/autodiff.hpp"
#include "pact/rng.hpp"

namespace pact {

enum class BlockMode { kDiscrete, kThresholded, kRelaxed, kAct };

const char* block_mode_name(BlockMode mode);
BlockMode block_mode_from_name(const std::string& name);

struct BlockConfig {
  int max_iterations = 1;      // L
  BlockMode mode = BlockMode::kRelaxed;
  double lambda = 2.0 / 3.0;   // relaxation temperature
  double delta = 0.01;         // stick clipping threshold (relaxed)
  double epsilon = 0.01;       // halting threshold complement (act)
  double tau = 0.0;            // per-block penalty, nats per iteration

  void validate() const;
};

// Runtime knobs shared by every block of a model forward pass.
struct BlockOptions {
  double lambda = 2.0 / 3.0;
  double delta = 0.01;
  double epsilon = 0.01;
};

// MAC counts used for the FLOPs ledger. The head cost is charged once per
// evaluated head; the forced final iteration has no head.
struct BlockCosts {
  double body_macs = 0.0;
  double head_macs = 0.0;
};

// u^l = body(l, u^{l-1}), 1-based l. All iterations must produce the same
// shape. head(l, u^l) returns the halting probability in (0,1).
using BodyFn = std::function<ad::Tensor(int l, const ad::Tensor& prev)>;
using HeadFn = std::function<ad::Tensor(int l, const ad::Tensor& u)>;

struct HaltingTrace {
  BlockMode mode = BlockMode::kRelaxed;
  std::vector<double> h;        // evaluated halting probabilities (final forced 1 included when reached)
  std::vector<double> weights;  // realized halting weights over iterations, sums to 1
  int executed = 0;             // body invocations actually performed
  int halt_index = 0;           // realized iteration z (one-hot modes), N (act), horizon (relaxed)
  double n_value = 0.0;         // expected iterations (relaxed/full) or realized count (others)
  double flops = 0.0;           // charged at inference-cost semantics
  ad::Tensor n;      // differentiable expected iterations (relaxed, discrete training path)
  ad::Tensor log_q;  // log q(z) along the realized path (discrete training path)
  ad::Tensor rho;    // ponder cost N + R (act)
};

struct BlockResult {
  ad::Tensor output;
  HaltingTrace trace;
};

// Sequential sampling, halts at the first fired gate; iterations beyond the
// halt are never evaluated.
BlockResult run_discrete(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                         const BlockConfig& cfg, const BlockCosts& costs, RngStream& rng);

// Training-path variant: evaluates the full iteration chain so the expected
// iteration count and log q(z) stay differentiable. The output and the
// charged FLOPs still follow the sampled halt.
BlockResult run_discrete_full(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                              const BlockConfig& cfg, const BlockCosts& costs, RngStream& rng);

// Deterministic: halts at the first iteration with h > 0.5 (strict).
BlockResult run_thresholded(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                            const BlockConfig& cfg, const BlockCosts& costs);

// Relaxed gates via the Concrete distribution; the output mixes iteration
// outputs by the stick-breaking weights. Execution stops once the remaining
// stick drops to delta or below; the clipped mass is folded into the last
// executed iteration so the weights still sum to one.
BlockResult run_relaxed(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                        const BlockConfig& cfg, const BlockCosts& costs, RngStream& rng);

// Deterministic halting-probability relaxation with ponder cost rho = N + R.
BlockResult run_act(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                    const BlockConfig& cfg, const BlockCosts& costs);

// Closed-form halting weights of the act transform; shared by run_act
// consumers that need the weights without executing a body.
struct ActWeights {
  int steps = 0;       // N
  double remainder = 0.0;  // R
  std::vector<double> weights;
  double rho = 0.0;
};
ActWeights act_weights(std::span<const double> h, double epsilon);

// Per-position multiplier that keeps a residual update alive until the
// position halts. Discrete gates give a hard {0,1} mask; relaxed gates give
// r * [r > delta] with r the remaining stick (strict comparison: r == delta
// clips to zero).
ad::Tensor active_mask_discrete(std::span<const ad::Tensor> gates);
ad::Tensor active_mask_relaxed(std::span<const ad::Tensor> gates, double delta);

// Ponder-cost curve rho(h1) for a fixed tail of halting probabilities,
// sampled on a uniform grid over [0,1].
std::vector<std::pair<double, double>> ponder_demo(std::span<const double> tail,
                                                   int grid_points = 201,
                                                   double epsilon = 0.01);

}  // namespace pact
