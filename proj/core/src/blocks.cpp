#include "pact/blocks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pact/stochastic.hpp"

namespace pact {

const char* block_mode_name(BlockMode mode) {
  switch (mode) {
    case BlockMode::kDiscrete: return "discrete";
    case BlockMode::kThresholded: return "thresholded";
    case BlockMode::kRelaxed: return "relaxed";
    case BlockMode::kAct: return "act";
  }
  return "?";
}

BlockMode block_mode_from_name(const std::string& name) {
  if (name == "discrete") return BlockMode::kDiscrete;
  if (name == "thresholded") return BlockMode::kThresholded;
  if (name == "relaxed") return BlockMode::kRelaxed;
  if (name == "act") return BlockMode::kAct;
  throw std::invalid_argument("unknown block mode '" + name + "'");
}

void BlockConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("BlockConfig: max_iterations must be >= 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("BlockConfig: lambda must be > 0");
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("BlockConfig: delta must be in [0,1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("BlockConfig: epsilon must be in (0,1)");
}

namespace {

double charged_flops(int bodies, int heads, const BlockCosts& costs) {
  return bodies * costs.body_macs + heads * costs.head_macs;
}

}  // namespace

BlockResult run_discrete(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                         const BlockConfig& cfg, const BlockCosts& costs, RngStream& rng) {
  cfg.validate();
  const int max_iter = cfg.max_iterations;
  BlockResult res;
  res.trace.mode = BlockMode::kDiscrete;
  ad::Tensor u = input;
  for (int l = 1; l <= max_iter; ++l) {
    u = body(l, u);
    ++res.trace.executed;
    double h = 1.0;
    if (l < max_iter) h = head(l, u).value();
    res.trace.h.push_back(h);
    if (sample_bernoulli(h, rng)) {
      res.trace.halt_index = l;
      break;
    }
  }
  const int z = res.trace.halt_index;
  res.output = u;
  res.trace.weights.assign(max_iter, 0.0);
  res.trace.weights[z - 1] = 1.0;
  res.trace.n_value = z;
  res.trace.flops = charged_flops(z, std::min(z, max_iter - 1), costs);
  return res;
}

BlockResult run_discrete_full(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                              const BlockConfig& cfg, const BlockCosts& costs, RngStream& rng) {
  cfg.validate();
  const int max_iter = cfg.max_iterations;
  ad::Tape& tape = *input.tape();
  BlockResult res;
  res.trace.mode = BlockMode::kDiscrete;

  std::vector<ad::Tensor> h_chain;
  h_chain.reserve(max_iter);
  ad::Tensor u = input;
  int z = 0;
  for (int l = 1; l <= max_iter; ++l) {
    u = body(l, u);
    ++res.trace.executed;
    ad::Tensor h = (l < max_iter) ? head(l, u) : tape.scalar(1.0);
    h_chain.push_back(h);
    res.trace.h.push_back(h.value());
    if (z == 0 && sample_bernoulli(h.value(), rng)) {
      z = l;
      res.output = u;
    }
  }
  res.trace.halt_index = z;
  res.trace.weights.assign(max_iter, 0.0);
  res.trace.weights[z - 1] = 1.0;
  res.trace.n = expected_iterations(std::span<const ad::Tensor>(h_chain));
  res.trace.n_value = z;  // realized count; the expectation lives in trace.n
  res.trace.flops = charged_flops(z, std::min(z, max_iter - 1), costs);

  // log q(z) = sum_{i<z} log(1 - h^i) + [z < L] log h^z
  ad::Tensor log_q = tape.scalar(0.0);
  for (int i = 0; i < z - 1; ++i) {
    ad::Tensor one_minus =
        ad::clamp(ad::add_scalar(ad::scale(h_chain[i], -1.0), 1.0), ad::kProbEps, 1.0);
    log_q = ad::add(log_q, ad::log(one_minus));
  }
  if (z < max_iter)
    log_q = ad::add(log_q, ad::log(ad::clamp(h_chain[z - 1], ad::kProbEps, 1.0)));
  res.trace.log_q = log_q;
  return res;
}

BlockResult run_thresholded(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                            const BlockConfig& cfg, const BlockCosts& costs) {
  cfg.validate();
  const int max_iter = cfg.max_iterations;
  BlockResult res;
  res.trace.mode = BlockMode::kThresholded;
  ad::Tensor u = input;
  for (int l = 1; l <= max_iter; ++l) {
    u = body(l, u);
    ++res.trace.executed;
    double h = 1.0;
    if (l < max_iter) h = head(l, u).value();
    res.trace.h.push_back(h);
    if (h > 0.5) {  // strict: h == 0.5 keeps going
      res.trace.halt_index = l;
      break;
    }
  }
  if (res.trace.halt_index == 0) res.trace.halt_index = max_iter;
  const int z = res.trace.halt_index;
  res.output = u;
  res.trace.weights.assign(max_iter, 0.0);
  res.trace.weights[z - 1] = 1.0;
  res.trace.n_value = z;
  res.trace.flops = charged_flops(z, std::min(z, max_iter - 1), costs);
  return res;
}

BlockResult run_relaxed(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                        const BlockConfig& cfg, const BlockCosts& costs, RngStream& rng) {
  cfg.validate();
  const int max_iter = cfg.max_iterations;
  ad::Tape& tape = *input.tape();
  BlockResult res;
  res.trace.mode = BlockMode::kRelaxed;

  ad::Tensor stick = tape.scalar(1.0);    // remaining stick of the sampled gates
  ad::Tensor h_stick = tape.scalar(1.0);  // remaining stick of the halting probabilities
  ad::Tensor out;
  ad::Tensor n;
  ad::Tensor u = input;
  ad::Tensor last_u;
  int horizon = max_iter;
  for (int l = 1; l <= max_iter; ++l) {
    u = body(l, u);
    last_u = u;
    ++res.trace.executed;
    ad::Tensor h = (l < max_iter) ? head(l, u) : tape.scalar(1.0);
    res.trace.h.push_back(h.value());
    ad::Tensor gate =
        (l < max_iter) ? sample_relaxed_bernoulli(h, cfg.lambda, rng) : tape.scalar(1.0);
    ad::Tensor weight = ad::mul(stick, gate);
    out = out.defined() ? ad::add(out, ad::mul_bcast(u, weight)) : ad::mul_bcast(u, weight);
    res.trace.weights.push_back(weight.value());
    ad::Tensor n_term = ad::scale(ad::mul(h_stick, h), static_cast<double>(l));
    n = n.defined() ? ad::add(n, n_term) : n_term;
    stick = ad::mul(stick, ad::add_scalar(ad::scale(gate, -1.0), 1.0));
    h_stick = ad::mul(h_stick, ad::add_scalar(ad::scale(h, -1.0), 1.0));
    if (l < max_iter && !(stick.value() > cfg.delta)) {  // strict survival: stick > delta
      horizon = l;
      break;
    }
  }
  // The stick remainder (zero when the loop ran to the end) is assigned to
  // the last executed iteration, and the expected-iteration tail mass to the
  // executed horizon, keeping both consistent with the charged FLOPs.
  if (stick.value() > 0.0) {
    out = ad::add(out, ad::mul_bcast(last_u, stick));
    res.trace.weights.back() += stick.value();
  }
  n = ad::add(n, ad::scale(h_stick, static_cast<double>(horizon)));
  res.output = out;
  res.trace.halt_index = horizon;
  res.trace.n = n;
  res.trace.n_value = n.value();
  res.trace.flops =
      charged_flops(res.trace.executed, std::min(res.trace.executed, max_iter - 1), costs);
  return res;
}

BlockResult run_act(const ad::Tensor& input, const BodyFn& body, const HeadFn& head,
                    const BlockConfig& cfg, const BlockCosts& costs) {
  cfg.validate();
  const int max_iter = cfg.max_iterations;
  ad::Tape& tape = *input.tape();
  BlockResult res;
  res.trace.mode = BlockMode::kAct;

  double cumulative = 0.0;
  ad::Tensor remainder = tape.scalar(1.0);
  ad::Tensor out;
  ad::Tensor u = input;
  int steps = 0;
  for (int l = 1; l <= max_iter; ++l) {
    u = body(l, u);
    ++res.trace.executed;
    steps = l;
    ad::Tensor h = (l < max_iter) ? head(l, u) : tape.scalar(1.0);
    res.trace.h.push_back(h.value());
    cumulative += h.value();
    if (cumulative < 1.0 - cfg.epsilon) {
      out = out.defined() ? ad::add(out, ad::mul_bcast(u, h)) : ad::mul_bcast(u, h);
      res.trace.weights.push_back(h.value());
      remainder = ad::sub(remainder, h);
    } else {
      out = out.defined() ? ad::add(out, ad::mul_bcast(u, remainder))
                          : ad::mul_bcast(u, remainder);
      res.trace.weights.push_back(remainder.value());
      break;
    }
  }
  res.trace.weights.resize(max_iter, 0.0);
  res.output = out;
  res.trace.halt_index = steps;
  res.trace.n_value = steps;
  res.trace.rho = ad::add_scalar(remainder, static_cast<double>(steps));
  res.trace.flops = charged_flops(steps, std::min(steps, max_iter - 1), costs);
  return res;
}

ActWeights act_weights(std::span<const double> h, double epsilon) {
  if (h.empty()) throw std::invalid_argument("act_weights: empty probability vector");
  ActWeights out;
  out.weights.assign(h.size(), 0.0);
  double cumulative = 0.0;
  int steps = static_cast<int>(h.size());
  for (size_t l = 0; l < h.size(); ++l) {
    cumulative += h[l];
    if (cumulative >= 1.0 - epsilon) {
      steps = static_cast<int>(l) + 1;
      break;
    }
  }
  double remainder = 1.0;
  for (int l = 0; l + 1 < steps; ++l) {
    out.weights[l] = h[l];
    remainder -= h[l];
  }
  out.weights[steps - 1] = remainder;
  out.steps = steps;
  out.remainder = remainder;
  out.rho = steps + remainder;
  return out;
}

ad::Tensor active_mask_discrete(std::span<const ad::Tensor> gates) {
  if (gates.empty()) throw std::invalid_argument("active_mask_discrete: no gates");
  ad::Tape& tape = *gates.front().tape();
  ad::Tensor mask =
      tape.constant(gates.front().shape(), std::vector<double>(gates.front().size(), 1.0));
  for (const ad::Tensor& g : gates)
    mask = ad::mul(mask, ad::add_scalar(ad::scale(g, -1.0), 1.0));
  return mask;
}

ad::Tensor active_mask_relaxed(std::span<const ad::Tensor> gates, double delta) {
  if (gates.empty()) throw std::invalid_argument("active_mask_relaxed: no gates");
  ad::Tape& tape = *gates.front().tape();
  ad::Tensor r =
      tape.constant(gates.front().shape(), std::vector<double>(gates.front().size(), 1.0));
  for (const ad::Tensor& g : gates)
    r = ad::mul(r, ad::add_scalar(ad::scale(g, -1.0), 1.0));
  std::vector<double> indicator(r.size());
  const auto& rv = r.values();
  for (size_t i = 0; i < indicator.size(); ++i) indicator[i] = rv[i] > delta ? 1.0 : 0.0;
  return ad::mul(r, tape.constant(r.shape(), std::move(indicator)));
}

std::vector<std::pair<double, double>> ponder_demo(std::span<const double> tail,
                                                   int grid_points, double epsilon) {
  if (grid_points < 2) throw std::invalid_argument("ponder_demo: need at least 2 grid points");
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid_points);
  std::vector<double> h(tail.size() + 1);
  std::copy(tail.begin(), tail.end(), h.begin() + 1);
  for (int i = 0; i < grid_points; ++i) {
    h[0] = static_cast<double>(i) / (grid_points - 1);
    curve.emplace_back(h[0], act_weights(h, epsilon).rho);
  }
  return curve;
}

}  // namespace pact
