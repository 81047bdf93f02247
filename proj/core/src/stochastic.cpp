#include "pact/stochastic.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pact {

namespace {
constexpr double kUniformEps = 1e-12;  // keeps logit(eps) finite

double logit_val(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

TruncatedGeometricPrior::TruncatedGeometricPrior(double tau_penalty, int support)
    : tau(tau_penalty), max_iterations(support) {
  if (!(tau > 0.0)) throw std::invalid_argument("TruncatedGeometricPrior: tau must be > 0");
  if (support < 1) throw std::invalid_argument("TruncatedGeometricPrior: support must be >= 1");
  log_normalizer =
      std::log(std::expm1(tau)) - std::log1p(-std::exp(-tau * max_iterations));
}

double TruncatedGeometricPrior::log_pmf(int z) const {
  if (z < 1 || z > max_iterations)
    throw std::invalid_argument("TruncatedGeometricPrior::log_pmf: z = " + std::to_string(z) +
                                " outside {1,...," + std::to_string(max_iterations) + "}");
  return log_normalizer - tau * z;
}

double TruncatedGeometricPrior::pmf(int z) const { return std::exp(log_pmf(z)); }

int sample_bernoulli(double h, RngStream& rng) {
  if (!(h >= 0.0 && h <= 1.0))
    throw std::invalid_argument("sample_bernoulli: probability " + std::to_string(h) +
                                " outside [0,1]");
  return rng.next_uniform() < h ? 1 : 0;
}

ad::Tensor sample_relaxed_bernoulli(const ad::Tensor& h, double lambda, RngStream& rng) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("sample_relaxed_bernoulli: temperature must be > 0");
  std::vector<double> eps_logits(h.size());
  for (auto& e : eps_logits) {
    const double u = std::clamp(rng.next_uniform(), kUniformEps, 1.0 - kUniformEps);
    e = logit_val(u);
  }
  ad::Tensor noise = h.tape()->constant(h.shape(), std::move(eps_logits));
  return ad::sigmoid(ad::scale(ad::add(ad::logit(h), noise), 1.0 / lambda));
}

double relaxed_bernoulli_from_uniform(double h, double lambda, double eps) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("relaxed_bernoulli_from_uniform: temperature must be > 0");
  const double p = std::clamp(h, ad::kProbEps, 1.0 - ad::kProbEps);
  const double u = std::clamp(eps, kUniformEps, 1.0 - kUniformEps);
  const double l = logit_val(p) + logit_val(u);
  return 1.0 / (1.0 + std::exp(-l / lambda));
}

double sample_relaxed_bernoulli_value(double h, double lambda, RngStream& rng) {
  return relaxed_bernoulli_from_uniform(h, lambda, rng.next_uniform());
}

std::vector<double> stick_break(std::span<const double> gates) {
  if (gates.empty()) throw std::invalid_argument("stick_break: empty gate vector");
  if (gates.back() != 1.0)
    throw std::invalid_argument("stick_break: final gate must be exactly 1, got " +
                                std::to_string(gates.back()));
  std::vector<double> weights(gates.size());
  double stick = 1.0;
  for (size_t l = 0; l + 1 < gates.size(); ++l) {
    const double g = gates[l];
    if (!(g >= 0.0 && g <= 1.0))
      throw std::invalid_argument("stick_break: gate outside [0,1]");
    weights[l] = stick * g;
    stick *= (1.0 - g);
  }
  weights.back() = stick;  // final gate == 1 absorbs the remainder
  return weights;
}

std::vector<ad::Tensor> stick_break(std::span<const ad::Tensor> gates) {
  if (gates.empty()) throw std::invalid_argument("stick_break: empty gate vector");
  const ad::Tensor& last = gates.back();
  for (double v : last.values())
    if (v != 1.0)
      throw std::invalid_argument("stick_break: final gate must be exactly 1");
  std::vector<ad::Tensor> weights(gates.size());
  ad::Tape& tape = *gates.front().tape();
  ad::Tensor stick = tape.constant(gates.front().shape(),
                                   std::vector<double>(gates.front().size(), 1.0));
  for (size_t l = 0; l + 1 < gates.size(); ++l) {
    weights[l] = ad::mul(stick, gates[l]);
    stick = ad::mul(stick, ad::add_scalar(ad::scale(gates[l], -1.0), 1.0));
  }
  weights.back() = stick;
  return weights;
}

std::vector<double> halting_pmf(std::span<const double> h) {
  if (h.empty()) throw std::invalid_argument("halting_pmf: empty probability vector");
  if (h.back() != 1.0)
    throw std::invalid_argument("halting_pmf: final halting probability must be 1, got " +
                                std::to_string(h.back()));
  std::vector<double> pmf(h.size());
  double stick = 1.0;
  for (size_t l = 0; l + 1 < h.size(); ++l) {
    if (!(h[l] >= 0.0 && h[l] <= 1.0))
      throw std::invalid_argument("halting_pmf: probability outside [0,1]");
    pmf[l] = stick * h[l];
    stick *= (1.0 - h[l]);
  }
  pmf.back() = stick;
  return pmf;
}

double expected_iterations(std::span<const double> h) {
  const std::vector<double> pmf = halting_pmf(h);
  double n = 0.0;
  for (size_t l = 0; l < pmf.size(); ++l) n += static_cast<double>(l + 1) * pmf[l];
  return n;
}

ad::Tensor expected_iterations(std::span<const ad::Tensor> h) {
  if (h.empty()) throw std::invalid_argument("expected_iterations: empty probability vector");
  for (double v : h.back().values())
    if (v != 1.0)
      throw std::invalid_argument("expected_iterations: final halting probability must be 1");
  ad::Tape& tape = *h.front().tape();
  ad::Tensor stick =
      tape.constant(h.front().shape(), std::vector<double>(h.front().size(), 1.0));
  ad::Tensor n;
  for (size_t l = 0; l < h.size(); ++l) {
    ad::Tensor term = ad::scale(ad::mul(stick, h[l]), static_cast<double>(l + 1));
    n = n.defined() ? ad::add(n, term) : term;
    if (l + 1 < h.size())
      stick = ad::mul(stick, ad::add_scalar(ad::scale(h[l], -1.0), 1.0));
  }
  return n;
}

double expected_log_prior(const TruncatedGeometricPrior& prior, std::span<const double> h) {
  if (static_cast<int>(h.size()) != prior.max_iterations)
    throw std::invalid_argument("expected_log_prior: halting chain length " +
                                std::to_string(h.size()) + " != prior support " +
                                std::to_string(prior.max_iterations));
  return prior.log_normalizer - prior.tau * expected_iterations(h);
}

ad::Tensor reinforce_surrogate(const ad::Tensor& log_likelihood, const ad::Tensor& log_q,
                               const ad::Tensor& penalty, const EstimatorState& state) {
  ad::Tensor advantage =
      ad::stop_gradient(ad::add_scalar(log_likelihood, -state.baseline));
  ad::Tensor loss = ad::scale(log_likelihood, -1.0);
  loss = ad::sub(loss, ad::mul(advantage, log_q));
  if (penalty.defined()) loss = ad::add(loss, penalty);
  return loss;
}

void VarianceProbe::push(const std::vector<double>& grad) {
  if (!buffer_.empty() && buffer_.front().size() != grad.size())
    throw std::invalid_argument("VarianceProbe: gradient size changed mid-window");
  buffer_.push_back(grad);
  while (buffer_.size() > window_) buffer_.pop_front();
}

double VarianceProbe::log10_variance() const {
  if (buffer_.size() < 2)
    throw std::logic_error("VarianceProbe: need at least 2 samples in the window");
  const size_t n = buffer_.size();
  const size_t dim = buffer_.front().size();
  double mean_var = 0.0;
  for (size_t j = 0; j < dim; ++j) {
    double m = 0.0;
    for (const auto& g : buffer_) m += g[j];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& g : buffer_) {
      const double d = g[j] - m;
      ss += d * d;
    }
    mean_var += ss / static_cast<double>(n - 1);
  }
  mean_var /= static_cast<double>(dim);
  if (mean_var <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log10(mean_var);
}

std::optional<double> VarianceProbe::log10_variance_opt() const {
  if (buffer_.size() < 2) return std::nullopt;
  return log10_variance();
}

}  // namespace pact
