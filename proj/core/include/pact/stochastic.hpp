#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "pact/autodiff.hpp"
#include "pact/rng.hpp"

namespace pact {

// Geometric distribution over {1, ..., max_iterations} with log-linear
// penalty tau per iteration:
//   pmf(z) = (e^tau - 1) / (1 - e^{-tau L}) * e^{-tau z}
struct TruncatedGeometricPrior {
  double tau = 0.0;
  int max_iterations = 1;
  double log_normalizer = 0.0;  // log[(e^tau - 1) / (1 - e^{-tau L})]

  TruncatedGeometricPrior(double tau_penalty, int support);
  double log_pmf(int z) const;  // z in {1, ..., max_iterations}, else throws
  double pmf(int z) const;
};

enum class Estimator { kReinforce, kConcrete };

// Scalar moving-average baseline for the score-function estimator.
struct EstimatorState {
  Estimator kind = Estimator::kConcrete;
  double baseline = 0.0;
  double baseline_decay = 0.99;
  double temperature = 2.0 / 3.0;

  void update_baseline(double reward) {
    baseline = baseline_decay * baseline + (1.0 - baseline_decay) * reward;
  }
};

int sample_bernoulli(double h, RngStream& rng);

// Relaxed Bernoulli gate, elementwise over `h`:
//   eps ~ Uniform(0,1),  v = sigmoid((logit(h) + logit(eps)) / lambda)
// Differentiable w.r.t. h through the reparameterization. The uniform draw
// is clamped to (1e-12, 1 - 1e-12) before logit.
ad::Tensor sample_relaxed_bernoulli(const ad::Tensor& h, double lambda, RngStream& rng);
double sample_relaxed_bernoulli_value(double h, double lambda, RngStream& rng);

// The deterministic transform underneath the sampler, for a given uniform.
double relaxed_bernoulli_from_uniform(double h, double lambda, double eps);

// Stick-breaking weights z^l = gate^l * prod_{i<l} (1 - gate^i). The final
// gate must be 1; it absorbs the remaining stick so the weights always sum
// to one.
std::vector<double> stick_break(std::span<const double> gates);
std::vector<ad::Tensor> stick_break(std::span<const ad::Tensor> gates);

// Distribution over the halting iteration induced by independent gates with
// probabilities h (h.back() must be 1): q(z = l) = h^l prod_{i<l} (1 - h^i).
std::vector<double> halting_pmf(std::span<const double> h);

double expected_iterations(std::span<const double> h);
ad::Tensor expected_iterations(std::span<const ad::Tensor> h);

// E_q log p(z) = log_normalizer - tau * N, with N the expected iterations
// under the halting probabilities h.
double expected_log_prior(const TruncatedGeometricPrior& prior, std::span<const double> h);

// Surrogate LOSS whose gradient realizes the score-function estimator of
// -(log_likelihood - penalty) with the frozen baseline c:
//   loss = -log_likelihood - stop_grad(log_likelihood - c) * log_q + penalty
// The baseline itself is updated by the caller after the step.
ad::Tensor reinforce_surrogate(const ad::Tensor& log_likelihood, const ad::Tensor& log_q,
                               const ad::Tensor& penalty, const EstimatorState& state);

// Sliding-window probe of the per-parameter gradient variance. push() one
// flat gradient vector per step; log10_variance() reports the mean over
// parameters of the unbiased per-parameter variance across the window,
// in log base 10 (-inf when the gradients are identical).
class VarianceProbe {
 public:
  explicit VarianceProbe(size_t window = 16) : window_(window) {}

  void push(const std::vector<double>& grad);
  size_t samples() const { return buffer_.size(); }
  // Throws std::logic_error with fewer than 2 samples.
  double log10_variance() const;
  // Convenience: std::nullopt until 2 samples are available.
  std::optional<double> log10_variance_opt() const;

 private:
  size_t window_;
  std::deque<std::vector<double>> buffer_;
};

}  // namespace pact
