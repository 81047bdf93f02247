#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pact/stochastic.hpp"
#include "test_support.hpp"

using namespace pact;
using testsupport::finite_difference;

namespace {

std::vector<double> random_halting_chain(int len, RngStream& rng) {
  std::vector<double> h(len);
  for (int i = 0; i + 1 < len; ++i) h[i] = 0.05 + 0.9 * rng.next_uniform();
  h.back() = 1.0;
  return h;
}

}  // namespace

TEST_CASE("rng stream is counter-addressable") {
  RngStream a = RngStream::root(11).derive("x");
  RngStream b = RngStream::root(11).derive("x");
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c = RngStream::root(11).derive("y");
  CHECK(c.next_u64() != RngStream::root(11).derive("x").next_u64());
}

TEST_CASE("bernoulli sampler") {
  RngStream rng = RngStream::root(3).derive("bern");
  CHECK(sample_bernoulli(1.0, rng) == 1);
  CHECK(sample_bernoulli(0.0, rng) == 0);
  CHECK_THROWS_AS(sample_bernoulli(1.5, rng), std::invalid_argument);

  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += sample_bernoulli(0.7, rng);
  CHECK(std::abs(static_cast<double>(ones) / n - 0.7) < 0.01);
}

TEST_CASE("relaxed bernoulli hand values") {
  // symmetric case: both logits vanish
  for (double lambda : {0.4, 2.0 / 3.0, 0.8})
    CHECK(relaxed_bernoulli_from_uniform(0.5, lambda, 0.5) == doctest::Approx(0.5));
  // h=0.8, eps=0.5, lambda=2/3: sigmoid(ln 4 / (2/3)) = sigmoid(ln 8) = 8/9
  CHECK(relaxed_bernoulli_from_uniform(0.8, 2.0 / 3.0, 0.5) ==
        doctest::Approx(8.0 / 9.0).epsilon(1e-9));
  CHECK_THROWS_AS(relaxed_bernoulli_from_uniform(0.5, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("relaxed bernoulli crosses 0.5 with probability h") {
  for (double lambda : {0.4, 2.0 / 3.0, 0.8}) {
    for (int hi = 1; hi <= 9; ++hi) {
      const double h = hi / 10.0;
      RngStream rng = RngStream::root(19).derive("concrete", hi * 100 + int(lambda * 100));
      int over = 0;
      const int n = 100000;
      for (int i = 0; i < n; ++i)
        if (sample_relaxed_bernoulli_value(h, lambda, rng) > 0.5) ++over;
      CHECK(std::abs(static_cast<double>(over) / n - h) < 0.01);
    }
  }
}

TEST_CASE("relaxed bernoulli saturates at extreme probabilities") {
  for (double lambda : {0.4, 2.0 / 3.0, 0.8}) {
    for (double h : {1e-6, 1.0 - 1e-6}) {
      RngStream rng = RngStream::root(23).derive("saturation", int(lambda * 1000));
      const double target = std::round(h);
      for (int i = 0; i < 200; ++i) {
        const double v = sample_relaxed_bernoulli_value(h, lambda, rng);
        CHECK(std::abs(v - target) < 1e-3);
      }
    }
  }
}

TEST_CASE("relaxed bernoulli tensor route is differentiable") {
  RngStream probe = RngStream::root(4).derive("reparam");
  const double eps_draw = probe.next_uniform();
  auto build = [&](ad::Tape& tape, const std::vector<double>& p) {
    auto h = tape.leaf({1}, p);
    RngStream rng = RngStream::root(4).derive("reparam");  // same draw every call
    return sample_relaxed_bernoulli(h, 2.0 / 3.0, rng);
  };
  ad::Tape tape;
  auto v = build(tape, {0.3});
  CHECK(v.value() == doctest::Approx(relaxed_bernoulli_from_uniform(0.3, 2.0 / 3.0, eps_draw)));
  tape.backward(v);
  const auto analytic = tape.node(0).grad;
  auto fn = [&](const std::vector<double>& p) {
    ad::Tape t;
    return build(t, p).value();
  };
  CHECK(finite_difference(fn, {0.3}, analytic).max_rel_err < 1e-5);
}

TEST_CASE("stick breaking") {
  SUBCASE("first gate fires") {
    const std::vector<double> z = stick_break(std::vector<double>{1.0, 0.3, 1.0});
    CHECK(z == std::vector<double>{1.0, 0.0, 0.0});
  }
  SUBCASE("hand weights") {
    const std::vector<double> z = stick_break(std::vector<double>{0.5, 0.5, 1.0});
    CHECK(z[0] == doctest::Approx(0.5));
    CHECK(z[1] == doctest::Approx(0.25));
    CHECK(z[2] == doctest::Approx(0.25));
  }
  SUBCASE("forced final halt") {
    const std::vector<double> z = stick_break(std::vector<double>{0.0, 0.0, 1.0});
    CHECK(z == std::vector<double>{0.0, 0.0, 1.0});
  }
  SUBCASE("final gate must be one") {
    CHECK_THROWS_AS(stick_break(std::vector<double>{0.5, 0.9}), std::invalid_argument);
  }
  SUBCASE("weights always sum to one") {
    RngStream rng = RngStream::root(31).derive("stick");
    for (int it = 0; it < 200; ++it) {
      const int len = 1 + static_cast<int>(rng.next_u64() % 6);
      std::vector<double> gates(len);
      bool one_hot_input = true;
      for (int i = 0; i + 1 < len; ++i) {
        gates[i] = (it % 2 == 0) ? rng.next_uniform()
                                 : static_cast<double>(rng.next_u64() & 1);
        if (gates[i] != 0.0 && gates[i] != 1.0) one_hot_input = false;
      }
      gates.back() = 1.0;
      const auto z = stick_break(gates);
      double total = 0.0;
      for (double w : z) total += w;
      CHECK(std::abs(total - 1.0) < 1e-12);
      if (one_hot_input) {
        int nonzero = 0;
        for (double w : z) nonzero += (w != 0.0);
        CHECK(nonzero == 1);
      }
    }
  }
}

TEST_CASE("halting pmf") {
  SUBCASE("hand values") {
    const auto pmf = halting_pmf(std::vector<double>{0.5, 0.5, 1.0});
    CHECK(pmf[0] == doctest::Approx(0.5));
    CHECK(pmf[1] == doctest::Approx(0.25));
    CHECK(pmf[2] == doctest::Approx(0.25));
  }
  SUBCASE("immediate halt") {
    const auto pmf = halting_pmf(std::vector<double>{1.0, 0.2, 1.0});
    CHECK(pmf == std::vector<double>{1.0, 0.0, 0.0});
  }
  SUBCASE("final probability must be one") {
    CHECK_THROWS_AS(halting_pmf(std::vector<double>{0.5, 0.5}), std::invalid_argument);
  }
  SUBCASE("matches the sampling procedure (total variation)") {
    const std::vector<double> h{0.3, 0.55, 0.2, 1.0};
    const auto pmf = halting_pmf(h);
    std::vector<double> counts(h.size(), 0.0);
    RngStream rng = RngStream::root(37).derive("tv");
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      std::vector<double> gates(h.size());
      for (size_t l = 0; l + 1 < h.size(); ++l)
        gates[l] = static_cast<double>(sample_bernoulli(h[l], rng));
      gates.back() = 1.0;
      const auto z = stick_break(gates);
      for (size_t l = 0; l < z.size(); ++l)
        if (z[l] == 1.0) counts[l] += 1.0;
    }
    double tv = 0.0;
    for (size_t l = 0; l < h.size(); ++l) tv += std::abs(counts[l] / n - pmf[l]);
    CHECK(tv / 2.0 < 0.01);
  }
}

TEST_CASE("expected iterations") {
  CHECK(expected_iterations(std::vector<double>{0.5, 0.5, 1.0}) == doctest::Approx(1.75));
  CHECK(expected_iterations(std::vector<double>{1.0, 0.4, 1.0}) == doctest::Approx(1.0));

  SUBCASE("pmf-weighted enumeration agrees") {
    RngStream rng = RngStream::root(41).derive("n-enum");
    for (int it = 0; it < 100; ++it) {
      const auto h = random_halting_chain(2 + int(rng.next_u64() % 5), rng);
      const auto pmf = halting_pmf(h);
      double n_enum = 0.0;
      for (size_t l = 0; l < pmf.size(); ++l) n_enum += (l + 1) * pmf[l];
      CHECK(expected_iterations(h) == doctest::Approx(n_enum).epsilon(1e-12));
    }
  }

  SUBCASE("gradient w.r.t. h matches finite differences") {
    auto build = [&](ad::Tape& tape, const std::vector<double>& p) {
      std::vector<ad::Tensor> h;
      for (double v : p) h.push_back(tape.leaf({1}, {v}));
      h.push_back(tape.scalar(1.0));
      return expected_iterations(std::span<const ad::Tensor>(h));
    };
    const std::vector<double> p0{0.5, 0.5};
    ad::Tape tape;
    auto n = build(tape, p0);
    CHECK(n.value() == doctest::Approx(1.75));
    tape.backward(n);
    std::vector<double> analytic{tape.node(0).grad[0], tape.node(1).grad[0]};
    CHECK(analytic[0] == doctest::Approx(-1.5));  // dN/dh1 = -2 + h2
    auto fn = [&](const std::vector<double>& p) {
      ad::Tape t;
      return build(t, p).value();
    };
    CHECK(finite_difference(fn, p0, analytic).max_rel_err < 1e-6);
  }
}

TEST_CASE("truncated geometric prior") {
  SUBCASE("hand pmf at tau = ln 2, L = 2") {
    TruncatedGeometricPrior prior(std::log(2.0), 2);
    CHECK(prior.pmf(1) == doctest::Approx(2.0 / 3.0));
    CHECK(prior.pmf(2) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("single support point") {
    TruncatedGeometricPrior prior(0.37, 1);
    CHECK(prior.pmf(1) == doctest::Approx(1.0));
  }
  SUBCASE("support bounds enforced") {
    TruncatedGeometricPrior prior(0.5, 3);
    CHECK_THROWS_AS(prior.log_pmf(0), std::invalid_argument);
    CHECK_THROWS_AS(prior.log_pmf(4), std::invalid_argument);
  }
  SUBCASE("normalizes and decreases for random parameters") {
    RngStream rng = RngStream::root(43).derive("prior");
    for (int it = 0; it < 100; ++it) {
      const double tau = 0.05 + 3.0 * rng.next_uniform();
      const int support = 1 + static_cast<int>(rng.next_u64() % 8);
      TruncatedGeometricPrior prior(tau, support);
      double total = 0.0;
      for (int z = 1; z <= support; ++z) {
        total += prior.pmf(z);
        if (z > 1) CHECK(prior.pmf(z) < prior.pmf(z - 1));
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("expected log prior") {
  SUBCASE("deterministic halt") {
    TruncatedGeometricPrior prior(std::log(2.0), 3);
    const double e = expected_log_prior(prior, std::vector<double>{1.0, 0.5, 1.0});
    CHECK(e == doctest::Approx(prior.log_normalizer - std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("equals pmf-weighted enumeration for random chains") {
    RngStream rng = RngStream::root(47).derive("elogp");
    for (int it = 0; it < 100; ++it) {
      const int len = 2 + static_cast<int>(rng.next_u64() % 5);
      const double tau = 0.1 + 2.0 * rng.next_uniform();
      TruncatedGeometricPrior prior(tau, len);
      const auto h = random_halting_chain(len, rng);
      const auto pmf = halting_pmf(h);
      double enumerated = 0.0;
      for (int z = 1; z <= len; ++z) enumerated += pmf[z - 1] * prior.log_pmf(z);
      CHECK(std::abs(expected_log_prior(prior, h) - enumerated) < 1e-10);
    }
  }
}

// Exact single-block objective for the estimator checks:
//   L(phi) = sum_z q(z) reward(z) - tau * N(phi),  h_l = sigmoid(phi_l)
namespace {

struct EnumerableBlock {
  std::vector<double> reward;  // reward per halting iteration, |reward| = L
  double tau = 0.0;

  int iterations() const { return static_cast<int>(reward.size()); }

  std::vector<double> halting(const std::vector<double>& phi) const {
    std::vector<double> h(iterations());
    for (int l = 0; l + 1 < iterations(); ++l) h[l] = 1.0 / (1.0 + std::exp(-phi[l]));
    h.back() = 1.0;
    return h;
  }

  double objective(const std::vector<double>& phi) const {
    const auto h = halting(phi);
    const auto pmf = halting_pmf(h);
    double value = -tau * expected_iterations(h);
    for (int z = 0; z < iterations(); ++z) value += pmf[z] * reward[z];
    return value;
  }

  // independent oracle: central differences of the enumerated objective
  std::vector<double> exact_gradient(std::vector<double> phi) const {
    std::vector<double> g(phi.size());
    const double step = 1e-6;
    for (size_t i = 0; i < phi.size(); ++i) {
      const double orig = phi[i];
      phi[i] = orig + step;
      const double fp = objective(phi);
      phi[i] = orig - step;
      const double fm = objective(phi);
      phi[i] = orig;
      g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
  }

  // one surrogate-gradient sample: d(-loss)/d(phi) estimates the objective
  // gradient
  std::vector<double> surrogate_gradient_sample(const std::vector<double>& phi,
                                                const EstimatorState& state,
                                                RngStream& rng) const {
    ad::Tape tape;
    std::vector<ad::Tensor> phi_leaves;
    std::vector<ad::Tensor> h;
    for (size_t i = 0; i < phi.size(); ++i) {
      phi_leaves.push_back(tape.leaf({1}, {phi[i]}));
      h.push_back(ad::sigmoid(phi_leaves.back()));
    }
    h.push_back(tape.scalar(1.0));

    int z = iterations();
    for (int l = 0; l + 1 < iterations(); ++l)
      if (sample_bernoulli(h[l].value(), rng)) {
        z = l + 1;
        break;
      }

    ad::Tensor log_q = tape.scalar(0.0);
    for (int i = 0; i < z - 1; ++i)
      log_q = ad::add(log_q, ad::log(ad::add_scalar(ad::scale(h[i], -1.0), 1.0)));
    if (z < iterations()) log_q = ad::add(log_q, ad::log(h[z - 1]));

    ad::Tensor log_lik = tape.scalar(reward[z - 1]);
    ad::Tensor penalty = ad::scale(expected_iterations(std::span<const ad::Tensor>(h)), tau);
    ad::Tensor loss = reinforce_surrogate(log_lik, log_q, penalty, state);
    tape.backward(loss);

    std::vector<double> g(phi.size());
    for (size_t i = 0; i < phi.size(); ++i) g[i] = -phi_leaves[i].grad()[0];
    return g;
  }
};

}  // namespace

TEST_CASE("reinforce surrogate gradient is unbiased on an enumerable block") {
  EnumerableBlock block{{0.9, -0.4, 0.3}, 0.2};
  const std::vector<double> phi{-0.4, 0.6};
  EstimatorState state;
  state.baseline = 0.1;

  const auto exact = block.exact_gradient(phi);
  RngStream rng = RngStream::root(53).derive("reinforce-mc");
  const int samples = 100000;
  std::vector<double> mean(phi.size(), 0.0), m2(phi.size(), 0.0);
  for (int s = 0; s < samples; ++s) {
    const auto g = block.surrogate_gradient_sample(phi, state, rng);
    for (size_t i = 0; i < g.size(); ++i) {
      const double d = g[i] - mean[i];
      mean[i] += d / (s + 1);
      m2[i] += d * (g[i] - mean[i]);
    }
  }
  for (size_t i = 0; i < phi.size(); ++i) {
    const double se = std::sqrt(m2[i] / (samples - 1) / samples);
    CHECK(std::abs(mean[i] - exact[i]) < 3.0 * se + 1e-12);
  }
}

TEST_CASE("reward equal to the baseline leaves only the penalty path") {
  EnumerableBlock block{{0.25, 0.25, 0.25}, 0.3};
  const std::vector<double> phi{0.2, -0.7};
  EstimatorState state;
  state.baseline = 0.25;
  RngStream rng = RngStream::root(59).derive("zero-adv");

  // closed form for L = 3: N = 3 - 2 h1 - h2 + h1 h2
  const double h1 = 1.0 / (1.0 + std::exp(-phi[0]));
  const double h2 = 1.0 / (1.0 + std::exp(-phi[1]));
  const std::vector<double> expected{-block.tau * (-2.0 + h2) * h1 * (1 - h1),
                                     -block.tau * (-1.0 + h1) * h2 * (1 - h2)};
  for (int s = 0; s < 32; ++s) {
    const auto g = block.surrogate_gradient_sample(phi, state, rng);
    CHECK(g[0] == doctest::Approx(expected[0]).epsilon(1e-10));
    CHECK(g[1] == doctest::Approx(expected[1]).epsilon(1e-10));
  }
}

TEST_CASE("penalty-only surrogate equals the closed-form N gradient") {
  EnumerableBlock block{{0.0, 0.0, 0.0}, 0.45};
  const std::vector<double> phi{0.1, 0.8};
  EstimatorState state;  // baseline 0
  RngStream rng = RngStream::root(61).derive("penalty-only");
  const auto exact = block.exact_gradient(phi);
  for (int s = 0; s < 16; ++s) {
    const auto g = block.surrogate_gradient_sample(phi, state, rng);
    CHECK(g[0] == doctest::Approx(exact[0]).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(exact[1]).epsilon(1e-6));
  }
}

TEST_CASE("estimator state baseline update") {
  EstimatorState state;
  state.update_baseline(1.0);
  CHECK(state.baseline == doctest::Approx(0.01));
  state.update_baseline(1.0);
  CHECK(state.baseline == doctest::Approx(0.0199));
}

TEST_CASE("variance probe") {
  SUBCASE("identical gradients report minus infinity") {
    VarianceProbe probe(8);
    probe.push({1.0, -2.0});
    probe.push({1.0, -2.0});
    CHECK(std::isinf(probe.log10_variance()));
    CHECK(probe.log10_variance() < 0);
  }
  SUBCASE("two scalar samples, unbiased variance") {
    VarianceProbe probe(8);
    probe.push({0.0});
    probe.push({2.0});
    CHECK(probe.log10_variance() == doctest::Approx(std::log10(2.0)).epsilon(1e-12));
  }
  SUBCASE("fewer than two samples is an error") {
    VarianceProbe probe(8);
    probe.push({1.0});
    CHECK_THROWS_AS(probe.log10_variance(), std::logic_error);
    CHECK(!probe.log10_variance_opt());
  }
  SUBCASE("window slides") {
    VarianceProbe probe(2);
    probe.push({0.0});
    probe.push({0.0});
    probe.push({1.0});
    probe.push({1.0});
    CHECK(std::isinf(probe.log10_variance()));
  }
}
