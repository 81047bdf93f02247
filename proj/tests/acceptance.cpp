// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria.
#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pact/cli.hpp"
#include "pact/train.hpp"
#include "test_support.hpp"

using namespace pact;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: closed-form / enumeration oracles

bool oracle_suite(std::string& detail) {
  RngStream rng = RngStream::root(101).derive("oracles");
  int checked = 0;
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  for (int it = 0; it < 120; ++it) {
    const int len = 1 + static_cast<int>(rng.next_u64() % 6);
    std::vector<double> h(len);
    for (int i = 0; i + 1 < len; ++i) h[i] = rng.next_uniform();
    h.back() = 1.0;

    // halting pmf against the direct product formula, and normalization
    const auto pmf = halting_pmf(h);
    double total = 0.0;
    for (int z = 1; z <= len; ++z) {
      double direct = h[z - 1];
      for (int i = 0; i + 1 < z; ++i) direct *= 1.0 - h[i];
      track(std::abs(pmf[z - 1] - direct));
      total += pmf[z - 1];
    }
    track(std::abs(total - 1.0));

    // stick breaking: weights sum to one; matches cumulative products
    std::vector<double> gates(len);
    for (int i = 0; i + 1 < len; ++i)
      gates[i] = (it % 2) ? rng.next_uniform() : static_cast<double>(rng.next_u64() & 1);
    gates.back() = 1.0;
    const auto weights = stick_break(gates);
    double wsum = 0.0, stick = 1.0;
    for (int l = 0; l < len; ++l) {
      const double direct = (l + 1 == len) ? stick : stick * gates[l];
      track(std::abs(weights[l] - direct));
      stick *= 1.0 - gates[l];
      wsum += weights[l];
    }
    track(std::abs(wsum - 1.0));

    // truncated geometric prior: normalization and the log-linear ratio
    const double tau = 0.05 + 3.0 * rng.next_uniform();
    TruncatedGeometricPrior prior(tau, len);
    double psum = 0.0;
    for (int z = 1; z <= len; ++z) psum += prior.pmf(z);
    track(std::abs(psum - 1.0));
    if (len > 1) track(std::abs(prior.pmf(2) / prior.pmf(1) - std::exp(-tau)));

    // expected log prior vs enumeration
    double enumerated = 0.0;
    for (int z = 1; z <= len; ++z) enumerated += pmf[z - 1] * prior.log_pmf(z);
    if (std::abs(expected_log_prior(prior, h) - enumerated) > 1e-10) {
      detail = fmt("expected_log_prior off at instance %d", it);
      return false;
    }

    // act weights vs independent closed form
    const double eps = 0.01;
    const auto act = act_weights(h, eps);
    double cum = 0.0;
    int n_steps = len;
    for (int l = 0; l < len; ++l) {
      cum += h[l];
      if (cum >= 1.0 - eps) {
        n_steps = l + 1;
        break;
      }
    }
    double remainder = 1.0;
    for (int l = 0; l + 1 < n_steps; ++l) remainder -= h[l];
    if (act.steps != n_steps) {
      detail = fmt("act steps mismatch at instance %d", it);
      return false;
    }
    track(std::abs(act.remainder - remainder));
    track(std::abs(act.rho - (n_steps + remainder)));
    double wsum2 = 0.0;
    for (double w : act.weights) wsum2 += w;
    track(std::abs(wsum2 - 1.0));
    ++checked;
  }
  detail = fmt("%d randomized instances, worst deviation %.2e", checked, worst);
  return worst < 1e-12 * 10;  // tolerances: 1e-12 style checks with slack for sums
}

// ---------------------------------------------------------------------------
// criterion 2: finite-difference gradient suite

bool op_gradients(std::string& detail) {
  RngStream rng = RngStream::root(102).derive("fd");
  double worst = 0.0;
  std::string worst_name = "none";

  struct OpCase {
    const char* name;
    std::function<ad::Tensor(ad::Tape&, const std::vector<double>&)> build;
    size_t size;
    double lo, hi;
  };
  auto weighted_sum = [](ad::Tape& t, const ad::Tensor& y, RngStream& r) {
    std::vector<double> w(y.size());
    for (auto& v : w) v = 2.0 * r.next_uniform() - 1.0;
    auto flat = ad::reshape(y, {static_cast<int>(y.size())});
    return ad::sum(ad::mul(flat, t.constant({static_cast<int>(y.size())}, w)));
  };

  std::vector<OpCase> cases;
  auto unary = [&](const char* name, std::function<ad::Tensor(const ad::Tensor&)> op,
                   double lo = -1.0, double hi = 1.0) {
    cases.push_back({name,
                     [op](ad::Tape& t, const std::vector<double>& p) {
                       return op(t.leaf({static_cast<int>(p.size())}, p));
                     },
                     6, lo, hi});
  };
  unary("sigmoid", [](const ad::Tensor& x) { return ad::sigmoid(x); });
  unary("tanh", [](const ad::Tensor& x) { return ad::tanh(x); });
  unary("exp", [](const ad::Tensor& x) { return ad::exp(x); });
  unary("log", [](const ad::Tensor& x) { return ad::log(x); }, 0.2, 2.0);
  unary("logit", [](const ad::Tensor& x) { return ad::logit(x); }, 0.05, 0.95);
  unary("scale", [](const ad::Tensor& x) { return ad::scale(x, -1.3); });
  unary("add_scalar", [](const ad::Tensor& x) { return ad::add_scalar(x, 0.4); });
  unary("max_with", [](const ad::Tensor& x) { return ad::max_with(x, 0.1); }, 0.3, 1.0);
  unary("min_with", [](const ad::Tensor& x) { return ad::min_with(x, 0.9); }, 0.2, 0.8);
  unary("mul", [](const ad::Tensor& x) { return ad::mul(x, x); });
  unary("add", [](const ad::Tensor& x) { return ad::add(x, ad::scale(x, 0.5)); });
  unary("sub", [](const ad::Tensor& x) { return ad::sub(ad::scale(x, 2.0), x); });
  unary("log_softmax", [](const ad::Tensor& x) { return ad::log_softmax(x); });
  unary("softmax_xent", [](const ad::Tensor& x) { return ad::softmax_cross_entropy(x, 2); });
  unary("mean", [](const ad::Tensor& x) { return ad::mean(x); });
  unary("pick", [](const ad::Tensor& x) { return ad::pick(x, 3); });
  cases.push_back({"matmul",
                   [](ad::Tape& t, const std::vector<double>& p) {
                     auto a = t.leaf({2, 3}, {p.begin(), p.begin() + 6});
                     auto b = t.leaf({3, 2}, {p.begin() + 6, p.end()});
                     return ad::matmul(a, b);
                   },
                   12, -1.0, 1.0});
  cases.push_back({"affine",
                   [](ad::Tape& t, const std::vector<double>& p) {
                     auto x = t.leaf({3}, {p.begin(), p.begin() + 3});
                     auto w = t.leaf({2, 3}, {p.begin() + 3, p.begin() + 9});
                     auto b = t.leaf({2}, {p.begin() + 9, p.end()});
                     return ad::affine(x, w, b);
                   },
                   11, -1.0, 1.0});
  cases.push_back({"conv3x3+mask+pool",
                   [](ad::Tape& t, const std::vector<double>& p) {
                     auto x = t.leaf({2, 4, 4}, {p.begin(), p.begin() + 32});
                     auto w = t.leaf({2, 2, 3, 3}, {p.begin() + 32, p.begin() + 68});
                     auto b = t.leaf({2}, {p.begin() + 68, p.end()});
                     auto y = ad::conv3x3(x, w, b, 1);
                     std::vector<double> m(16, 0.7);
                     m[3] = 0.0;
                     return ad::global_avg_pool(ad::mul_mask(y, t.constant({4, 4}, m)));
                   },
                   70, -1.0, 1.0});
  cases.push_back({"conv3x3-s2", 
                   [](ad::Tape& t, const std::vector<double>& p) {
                     auto x = t.leaf({2, 4, 4}, {p.begin(), p.begin() + 32});
                     auto w = t.leaf({2, 2, 3, 3}, {p.begin() + 32, p.end()});
                     return ad::conv3x3(x, w, ad::Tensor(), 2);
                   },
                   68, -1.0, 1.0});
  cases.push_back({"patch pool/repeat",
                   [](ad::Tape& t, const std::vector<double>& p) {
                     auto x = t.leaf({4, 4}, p);
                     return ad::mul(ad::repeat_patch(ad::avg_pool_patch(x, 2), 2), x);
                   },
                   16, -1.0, 1.0});

  for (const auto& c : cases) {
    std::vector<double> p0(c.size);
    for (auto& v : p0) v = c.lo + (c.hi - c.lo) * rng.next_uniform();
    RngStream wrng = rng.derive(c.name);
    auto build = [&](ad::Tape& t, const std::vector<double>& p) {
      RngStream wr = wrng;
      return weighted_sum(t, c.build(t, p), wr);
    };
    ad::Tape tape;
    auto y = build(tape, p0);
    tape.backward(y);
    std::vector<double> analytic;
    // leaves are recorded first, in build order
    for (size_t id = 0; analytic.size() < c.size; ++id) {
      if (tape.node(static_cast<int>(id)).op != ad::Op::kLeaf) continue;
      const auto& g = tape.node(static_cast<int>(id)).grad;
      analytic.insert(analytic.end(), g.begin(), g.end());
    }
    analytic.resize(c.size);
    auto fn = [&](const std::vector<double>& p) {
      ad::Tape t;
      return build(t, p).value();
    };
    auto chk = testsupport::finite_difference(fn, p0, analytic);
    if (chk.max_rel_err > worst) {
      worst = chk.max_rel_err;
      worst_name = c.name;
    }
  }

  // tiny model specs in every gradient-carrying mode
  struct ModelCase {
    ModelSpec spec;
    BlockMode mode;
    const char* label;
  };
  const std::vector<ModelCase> model_cases = {
      {{"residual_stack", {{"blocks", 1}, {"max_iterations", 2}, {"width", 3},
                           {"input_dim", 2}, {"classes", 4}}},
       BlockMode::kRelaxed, "residual relaxed"},
      {{"residual_stack", {{"blocks", 1}, {"max_iterations", 2}, {"width", 3},
                           {"input_dim", 2}, {"classes", 4}}},
       BlockMode::kDiscrete, "residual discrete"},
      {{"residual_stack", {{"blocks", 1}, {"max_iterations", 2}, {"width", 3},
                           {"input_dim", 2}, {"classes", 4}}},
       BlockMode::kAct, "residual act"},
      {{"grid", {{"blocks", 1}, {"max_iterations", 2}, {"channels", 2}, {"height", 4},
                 {"width", 4}, {"classes", 4}, {"grouping", 2}}},
       BlockMode::kRelaxed, "grid relaxed"},
      {{"grid", {{"blocks", 1}, {"max_iterations", 2}, {"channels", 2}, {"height", 4},
                 {"width", 4}, {"classes", 4}, {"grouping", 2}}},
       BlockMode::kDiscrete, "grid discrete"},
      {{"rnn", {{"hidden", 4}, {"embed", 2}, {"max_iterations", 2}, {"classes", 2}}},
       BlockMode::kRelaxed, "rnn relaxed"},
      {{"rnn", {{"hidden", 4}, {"embed", 2}, {"max_iterations", 2}, {"classes", 2}}},
       BlockMode::kDiscrete, "rnn discrete"},
  };
  for (const auto& c : model_cases) {
    auto model = make_model(c.spec, 7);
    auto task = make_task_for(c.spec);
    const Example ex = task->example(5, "t", 2);
    BlockOptions opts;
    opts.delta = 0.0;
    BoundParams bound;
    auto objective = [&](ad::Tape& tape, const std::vector<double>& p) {
      model->params().load_flat(p);
      bound = bind(tape, model->params());
      RngStream mrng = RngStream::root(31).derive("fd");
      ForwardOut fwd = model->forward(tape, bound, ex, c.mode, opts, mrng, true);
      ad::Tensor y = fwd.nll;
      if (fwd.penalty_n.defined()) y = ad::add(y, ad::scale(fwd.penalty_n, 0.05));
      if (fwd.rho_penalty.defined()) y = ad::add(y, ad::scale(fwd.rho_penalty, 0.05));
      if (fwd.log_q.defined()) y = ad::add(y, ad::scale(fwd.log_q, 0.7));
      return y;
    };
    const std::vector<double> p0 = model->params().flat();
    ad::Tape tape;
    auto y = objective(tape, p0);
    tape.backward(y);
    const std::vector<double> analytic = grads_flat(model->params(), bound);
    auto fn = [&](const std::vector<double>& p) {
      ad::Tape t;
      return objective(t, p).value();
    };
    auto chk = testsupport::finite_difference(fn, p0, analytic);
    if (chk.max_rel_err > worst) {
      worst = chk.max_rel_err;
      worst_name = c.label;
    }
  }

  detail = fmt("worst relative residual %.2e (%s)", worst, worst_name.c_str());
  return worst < 1e-5;
}

// ---------------------------------------------------------------------------
// criterion 3: score-function estimator unbiasedness

bool estimator_unbiased(std::string& detail) {
  const std::vector<double> reward{0.9, -0.4, 0.3};
  const double tau = 0.2;
  const std::vector<double> phi{-0.4, 0.6};
  EstimatorState state;
  state.baseline = 0.1;

  auto halting = [&](const std::vector<double>& p) {
    std::vector<double> h(3);
    h[0] = 1.0 / (1.0 + std::exp(-p[0]));
    h[1] = 1.0 / (1.0 + std::exp(-p[1]));
    h[2] = 1.0;
    return h;
  };
  auto objective = [&](const std::vector<double>& p) {
    const auto h = halting(p);
    const auto pmf = halting_pmf(h);
    double v = -tau * expected_iterations(h);
    for (int z = 0; z < 3; ++z) v += pmf[z] * reward[z];
    return v;
  };
  std::vector<double> exact(2);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> p = phi;
    p[i] += 1e-6;
    const double fp = objective(p);
    p[i] -= 2e-6;
    const double fm = objective(p);
    exact[i] = (fp - fm) / 2e-6;
  }

  RngStream rng = RngStream::root(103).derive("mc");
  const int samples = 100000;
  std::vector<double> mean(2, 0.0), m2(2, 0.0);
  for (int s = 0; s < samples; ++s) {
    ad::Tape tape;
    std::vector<ad::Tensor> leaves, h;
    for (double p : phi) {
      leaves.push_back(tape.leaf({1}, {p}));
      h.push_back(ad::sigmoid(leaves.back()));
    }
    h.push_back(tape.scalar(1.0));
    int z = 3;
    for (int l = 0; l < 2; ++l)
      if (sample_bernoulli(h[l].value(), rng)) {
        z = l + 1;
        break;
      }
    ad::Tensor log_q = tape.scalar(0.0);
    for (int i = 0; i < z - 1; ++i)
      log_q = ad::add(log_q, ad::log(ad::add_scalar(ad::scale(h[i], -1.0), 1.0)));
    if (z < 3) log_q = ad::add(log_q, ad::log(h[z - 1]));
    ad::Tensor penalty =
        ad::scale(expected_iterations(std::span<const ad::Tensor>(h)), tau);
    ad::Tensor loss =
        reinforce_surrogate(tape.scalar(reward[z - 1]), log_q, penalty, state);
    tape.backward(loss);
    for (int i = 0; i < 2; ++i) {
      const double g = -leaves[i].grad()[0];
      const double d = g - mean[i];
      mean[i] += d / (s + 1);
      m2[i] += d * (g - mean[i]);
    }
  }
  double worst_sigmas = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double se = std::sqrt(m2[i] / (samples - 1) / samples);
    worst_sigmas = std::max(worst_sigmas, std::abs(mean[i] - exact[i]) / se);
  }
  detail = fmt("100k samples, worst deviation %.2f standard errors", worst_sigmas);
  return worst_sigmas < 3.0;
}

// ---------------------------------------------------------------------------
// criterion 4: concrete threshold-crossing property

bool concrete_property(std::string& detail) {
  double worst = 0.0;
  for (double lambda : {0.4, 2.0 / 3.0, 0.8}) {
    for (int hi = 1; hi <= 9; ++hi) {
      const double h = hi / 10.0;
      RngStream rng = RngStream::root(104).derive("concrete", hi * 100 + int(lambda * 1000));
      int over = 0;
      const int n = 100000;
      for (int i = 0; i < n; ++i)
        if (sample_relaxed_bernoulli_value(h, lambda, rng) > 0.5) ++over;
      worst = std::max(worst, std::abs(static_cast<double>(over) / n - h));
    }
  }
  detail = fmt("27-cell (h, lambda) grid, worst |P(v>0.5) - h| = %.4f", worst);
  return worst < 0.01;
}

// ---------------------------------------------------------------------------
// criteria 5-8: trained artifacts (shared state)

struct TrainedArtifacts {
  std::unique_ptr<Model> relaxed_model;
  double relaxed_acc = 0.0;
  double relaxed_thresholded_acc = 0.0;
};
TrainedArtifacts shared;

ModelSpec acceptance_residual_spec() {
  return {"residual_stack",
          {{"blocks", 2}, {"max_iterations", 3}, {"width", 16}, {"input_dim", 8},
           {"classes", 4}}};
}

TrainConfig acceptance_train_config(TrainMethod method) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.steps = 5000;
  cfg.batch_size = 32;
  cfg.tau = 0.01;
  cfg.lambda = 2.0 / 3.0;
  cfg.delta = 0.01;
  cfg.log_every = 500;
  cfg.seed = 11;
  return cfg;
}

bool mode_compatibility(std::string& detail) {
  const ModelSpec spec = acceptance_residual_spec();
  auto model = make_model(spec, RngStream::root(11).derive("model-init").next_u64());
  auto task = make_task_for(spec);
  const TrainConfig cfg = acceptance_train_config(TrainMethod::kConcrete);
  TrainResult tr = train(*model, cfg, *task, nullptr);
  if (tr.diverged) {
    detail = "training diverged";
    return false;
  }
  EvalResult rel = evaluate(*model, BlockMode::kRelaxed, cfg.block_options(), *task, 2048, 99);
  EvalResult dis = evaluate(*model, BlockMode::kDiscrete, cfg.block_options(), *task, 2048, 99);
  EvalResult thr =
      evaluate(*model, BlockMode::kThresholded, cfg.block_options(), *task, 2048, 99);
  shared.relaxed_model = std::move(model);
  shared.relaxed_acc = rel.accuracy;
  shared.relaxed_thresholded_acc = thr.accuracy;

  const double gap = std::max({std::abs(rel.accuracy - dis.accuracy),
                               std::abs(rel.accuracy - thr.accuracy),
                               std::abs(dis.accuracy - thr.accuracy)});
  detail = fmt("acc relaxed %.4f / discrete %.4f / thresholded %.4f, max gap %.4f; "
               "flops relaxed %.0f vs discrete %.0f",
               rel.accuracy, dis.accuracy, thr.accuracy, gap, rel.mean_flops,
               dis.mean_flops);
  return gap <= 0.02 && rel.mean_flops >= dis.mean_flops && rel.accuracy >= 0.90;
}

bool variance_ordering(std::string& detail) {
  ModelSpec spec{"grid", {{"blocks", 1}, {"max_iterations", 4}, {"channels", 4},
                          {"height", 16}, {"width", 16}, {"classes", 4}}};
  TrainConfig cfg;
  cfg.steps = 5000;
  cfg.batch_size = 8;
  cfg.tau = 0.01;
  cfg.log_every = 25;
  cfg.seed = 21;
  cfg.learning_rate = 0.02;  // concrete runs; the reinforce side pins Adam at 1e-3
  const auto runs = variance_bench(spec, cfg, {4, 2, 1});
  if (runs.size() != 6) {
    detail = fmt("expected 6 (estimator x grouping) runs, got %zu", runs.size());
    return false;
  }
  // concrete probes must be finite at every recorded step
  const size_t expected_probes = runs.front().probe.size();
  for (const auto& run : runs)
    if (run.method == TrainMethod::kConcrete && run.probe.size() != expected_probes) {
      detail = fmt("concrete run at M=%d has gaps in its variance curve", run.latent_count);
      return false;
    }

  double reinforce_top = 0.0, concrete_top = 0.0;
  double acc_r_small = 0.0, acc_c_small = 0.0;
  int m_small = 1 << 30, m_large = 0;
  for (const auto& run : runs) {
    m_small = std::min(m_small, run.latent_count);
    m_large = std::max(m_large, run.latent_count);
  }
  for (const auto& run : runs) {
    if (run.latent_count == m_large) {
      (run.method == TrainMethod::kReinforce ? reinforce_top : concrete_top) =
          run.median_logvar;
    }
    if (run.latent_count == m_small) {
      (run.method == TrainMethod::kReinforce ? acc_r_small : acc_c_small) =
          run.final_accuracy;
    }
  }
  const double gap = reinforce_top - concrete_top;
  const double acc_gap = std::abs(acc_r_small - acc_c_small);
  detail = fmt("M=%d: median log10 var reinforce %.2f vs concrete %.2f (gap %.2f); "
               "M=%d acc reinforce %.3f vs concrete %.3f (gap %.3f)",
               m_large, reinforce_top, concrete_top, gap, m_small, acc_r_small, acc_c_small,
               acc_gap);
  return gap >= 1.0 && acc_gap <= 0.05;
}

bool speed_accuracy_tradeoff(std::string& detail) {
  const ModelSpec spec = acceptance_residual_spec();
  // tau = 0 anchors the no-pressure end; the criterion's ordering and the
  // rank correlation are asserted over the pinned {1e-3, 1e-2, 1e-1} sweep
  std::vector<double> taus{0.0, 1e-3, 1e-2, 1e-1};
  std::vector<double> flops, total_n, accs;
  for (double tau : taus) {
    auto model = make_model(spec, RngStream::root(11).derive("model-init").next_u64());
    auto task = make_task_for(spec);
    TrainConfig cfg = acceptance_train_config(TrainMethod::kConcrete);
    cfg.steps = 3000;
    cfg.tau = tau;
    TrainResult tr = train(*model, cfg, *task, nullptr);
    if (tr.diverged) {
      detail = fmt("run tau=%g diverged", tau);
      return false;
    }
    EvalResult ev =
        evaluate(*model, BlockMode::kDiscrete, cfg.block_options(), *task, 1024, 99);
    flops.push_back(ev.mean_flops);
    double n = 0.0;
    for (double b : ev.mean_n) n += b;
    total_n.push_back(n);
    accs.push_back(ev.accuracy);
  }
  bool flops_decreasing = true, n_decreasing = true;
  for (size_t i = 0; i + 1 < taus.size(); ++i) {
    flops_decreasing = flops_decreasing && flops[i] > flops[i + 1];
    n_decreasing = n_decreasing && total_n[i] > total_n[i + 1];
  }
  const double rho = spearman({taus.begin() + 1, taus.end()}, {flops.begin() + 1, flops.end()});
  detail = fmt("tau {0, 1e-3, 1e-2, 1e-1}: flops {%.0f, %.0f, %.0f, %.0f}, "
               "N {%.2f, %.2f, %.2f, %.2f}, acc {%.3f, %.3f, %.3f, %.3f}, "
               "spearman(tau, flops) = %.2f",
               flops[0], flops[1], flops[2], flops[3], total_n[0], total_n[1], total_n[2],
               total_n[3], accs[0], accs[1], accs[2], accs[3], rho);
  return flops_decreasing && n_decreasing && rho <= -0.9;
}

bool act_parity(std::string& detail) {
  if (!shared.relaxed_model) {
    detail = "criterion 5 artifacts unavailable";
    return false;
  }
  const ModelSpec spec = acceptance_residual_spec();
  auto model = make_model(spec, RngStream::root(11).derive("model-init").next_u64());
  auto task = make_task_for(spec);
  const TrainConfig cfg = acceptance_train_config(TrainMethod::kAct);
  TrainResult tr = train(*model, cfg, *task, nullptr);
  if (tr.diverged) {
    detail = "act training diverged";
    return false;
  }
  EvalResult act_eval = evaluate(*model, BlockMode::kAct, cfg.block_options(), *task, 2048, 99);
  EvalResult act_thr =
      evaluate(*model, BlockMode::kThresholded, cfg.block_options(), *task, 2048, 99);
  const double act_drop = act_eval.accuracy - act_thr.accuracy;
  const double pact_drop = shared.relaxed_acc - shared.relaxed_thresholded_acc;
  const double parity_gap = std::abs(act_eval.accuracy - shared.relaxed_acc);
  detail = fmt("act acc %.4f vs relaxed-trained %.4f (gap %.4f); thresholded drop: act "
               "%.4f, relaxed-trained %.4f (reported, not asserted)",
               act_eval.accuracy, shared.relaxed_acc, parity_gap, act_drop, pact_drop);
  return parity_gap <= 0.03;
}

// ---------------------------------------------------------------------------
// criterion 9: ponder-cost discontinuity

bool ponder_discontinuity(std::string& detail) {
  const std::vector<double> tail{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  const auto curve = ponder_demo(tail, 201);
  const double crossing = 0.99 - 2.0 / 3.0;
  double jump = 0.0;
  int affine = 0, segments = 0;
  for (size_t i = 0; i + 1 < curve.size(); ++i) {
    if (curve[i].first <= crossing && crossing < curve[i + 1].first)
      jump = curve[i].second - curve[i + 1].second;
    if (curve[i + 1].first <= 0.99) {
      ++segments;
      const double slope =
          (curve[i + 1].second - curve[i].second) / (curve[i + 1].first - curve[i].first);
      if (std::abs(slope + 1.0) <= 1e-9)
        ++affine;
      else if (curve[i + 1].second >= curve[i].second)
        affine = -1000;  // any non-jump deviation from slope -1 fails
    }
  }
  detail = fmt("%zu points, jump at h1=%.4f is %.3f, %d/%d segments affine slope -1",
               curve.size(), crossing, jump, affine, segments);
  return jump >= 0.5 && affine >= segments - 3;
}

// ---------------------------------------------------------------------------
// criterion 10: byte-identical command reruns

bool determinism(std::string& detail) {
  const fs::path work = fs::temp_directory_path() / "pact_acceptance_det";
  fs::remove_all(work);
  fs::create_directories(work);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(PACT_CLI_BIN) + " " + args + " >" +
                            (work / "cmd.out").string() + " 2>" + (work / "cmd.err").string();
    return WEXITSTATUS(std::system(cmd.c_str()));
  };

  std::ofstream(work / "exp.json") << R"({
    "model": {"kind": "residual_stack", "blocks": 1, "max_iterations": 2, "width": 4,
              "input_dim": 4, "classes": 4},
    "train": {"steps": 12, "batch_size": 4, "tau": 0.01, "log_every": 4, "seed": 7},
    "eval": {"examples": 16}
  })";
  std::ofstream(work / "grid.json") << R"({
    "model": {"kind": "grid", "blocks": 1, "max_iterations": 2, "channels": 2,
              "height": 4, "width": 4, "classes": 4},
    "train": {"steps": 24, "batch_size": 2, "tau": 0.01, "log_every": 4, "seed": 3}
  })";

  struct Cmd {
    std::string name;
    std::string args;                  // % replaced by the output dir
    std::vector<std::string> outputs;  // compared between the two identical runs
  };
  const std::string cfg = (work / "exp.json").string();
  const std::string gcfg = (work / "grid.json").string();
  std::vector<Cmd> cmds = {
      {"train", "train --config " + cfg + " --out %",
       {"metrics.csv", "resolved_config.json", "checkpoint.pact"}},
      {"sweep-tau", "sweep-tau --config " + cfg + " --tau 0.001,0.1 --out %",
       {"sweep_tau.csv"}},
      {"variance", "variance --config " + gcfg + " --groupings 4 --out %", {"variance.csv"}},
      {"ponder-demo", "ponder-demo --out %", {"ponder_demo.csv"}},
  };
  // the exact same command twice into the same directory must reproduce
  // every output byte for byte
  for (const auto& c : cmds) {
    const fs::path dir = work / c.name;
    std::string args = c.args;
    args.replace(args.find('%'), 1, dir.string());
    std::vector<std::string> first;
    for (int rep = 1; rep <= 2; ++rep) {
      if (run(args) != 0) {
        detail = c.name + " exited nonzero";
        return false;
      }
      if (rep == 1)
        for (const auto& out : c.outputs) first.push_back(slurp(dir / out));
    }
    for (size_t i = 0; i < c.outputs.size(); ++i)
      if (slurp(dir / c.outputs[i]) != first[i]) {
        detail = c.name + ": " + c.outputs[i] + " differs between identical reruns";
        return false;
      }
  }
  // eval twice on the trained checkpoint
  const std::string ckpt = (work / "train" / "checkpoint.pact").string();
  const std::string eval_args = "eval --checkpoint " + ckpt +
                                " --mode discrete --examples 16 --out " +
                                (work / "eval").string();
  std::string first_eval;
  for (int rep = 1; rep <= 2; ++rep) {
    if (run(eval_args) != 0) {
      detail = "eval exited nonzero";
      return false;
    }
    if (rep == 1) first_eval = slurp(work / "eval" / "eval_discrete.csv");
  }
  if (slurp(work / "eval" / "eval_discrete.csv") != first_eval) {
    detail = "eval_discrete.csv differs between identical reruns";
    return false;
  }
  detail = "train, eval, sweep-tau, variance, ponder-demo all byte-identical on rerun";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  auto selected = [&](int id) {
    return wanted.empty() || std::find(wanted.begin(), wanted.end(), id) != wanted.end();
  };

  struct Entry {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Entry> criteria = {
      {1, "oracle suite (pmf / prior / stick / act closed forms)", oracle_suite},
      {2, "gradient suite (ops and tiny models vs finite differences)", op_gradients},
      {3, "score-function estimator unbiasedness", estimator_unbiased},
      {4, "concrete threshold-crossing property", concrete_property},
      {5, "mode compatibility after relaxed training", mode_compatibility},
      {6, "gradient-variance ordering across latent counts", variance_ordering},
      {7, "speed-accuracy trade-off over the tau sweep", speed_accuracy_tradeoff},
      {8, "act-relaxation parity on the acceptance task", act_parity},
      {9, "ponder-cost discontinuity curve", ponder_discontinuity},
      {10, "byte-identical command reruns", determinism},
  };

  std::printf("acceptance suite\n");
  int ran = 0;
  for (const auto& c : criteria) {
    if (!selected(c.id)) continue;
    // criterion 8 compares against criterion 5's trained checkpoint
    if (c.id == 8 && !shared.relaxed_model) {
      std::string d;
      mode_compatibility(d);  // build the reference model quietly
    }
    std::string detail;
    report(c.id, c.name, c.fn(detail), detail);
    ++ran;
  }
  std::printf("%d of %d criteria passed\n", ran - failures, ran);
  return failures;
}
