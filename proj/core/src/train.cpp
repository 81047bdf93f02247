#include "pact/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace pact {

const char* train_method_name(TrainMethod m) {
  switch (m) {
    case TrainMethod::kConcrete: return "concrete";
    case TrainMethod::kReinforce: return "reinforce";
    case TrainMethod::kAct: return "act";
  }
  return "?";
}

TrainMethod train_method_from_name(const std::string& name) {
  if (name == "concrete") return TrainMethod::kConcrete;
  if (name == "reinforce") return TrainMethod::kReinforce;
  if (name == "act") return TrainMethod::kAct;
  throw std::invalid_argument("unknown estimator '" + name + "'");
}

const char* optimizer_name(OptimizerKind o) {
  return o == OptimizerKind::kAdam ? "adam" : "sgd-momentum";
}

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd-momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

OptimizerKind TrainConfig::resolved_optimizer() const {
  if (optimizer) return *optimizer;
  return method == TrainMethod::kReinforce ? OptimizerKind::kAdam
                                           : OptimizerKind::kSgdMomentum;
}

double TrainConfig::resolved_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return resolved_optimizer() == OptimizerKind::kAdam ? 1e-3 : 0.1;
}

BlockMode TrainConfig::training_mode() const {
  switch (method) {
    case TrainMethod::kConcrete: return BlockMode::kRelaxed;
    case TrainMethod::kReinforce: return BlockMode::kDiscrete;
    case TrainMethod::kAct: return BlockMode::kAct;
  }
  return BlockMode::kRelaxed;
}

BlockOptions TrainConfig::block_options() const {
  return BlockOptions{lambda, delta, epsilon};
}

// ---------------------------------------------------------------------------
// csv formatting

namespace {

// empty cell for "not recorded" (wall time) and "no finite value" (probe)
std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// numeric columns keep nan/inf visible, e.g. in the divergence diagnostic row
std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_header(int block_count) {
  std::string h = "step,loss,loglik,penalty";
  for (int k = 1; k <= block_count; ++k) h += ",mean_n_block" + std::to_string(k);
  h += ",flops,accuracy,grad_logvar,wall_ms";
  return h;
}

std::string metrics_row_csv(const MetricsRow& row) {
  std::string s = std::to_string(row.step);
  s += ',' + fmt_num(row.loss) + ',' + fmt_num(row.loglik) + ',' + fmt_num(row.penalty);
  for (double n : row.mean_n) s += ',' + fmt_num(n);
  s += ',' + fmt_num(row.flops) + ',' + fmt_num(row.accuracy) + ',' + fmt(row.grad_logvar) +
       ',' + fmt(row.wall_ms);
  return s;
}

std::string eval_header(int block_count) {
  std::string h = "mode,accuracy,mean_flops";
  for (int k = 1; k <= block_count; ++k) h += ",mean_n_block" + std::to_string(k);
  h += ",mean_loglik";
  return h;
}

std::string eval_row_csv(const EvalResult& r) {
  std::string s = block_mode_name(r.mode);
  s += ',' + fmt(r.accuracy) + ',' + fmt(r.mean_flops);
  for (double n : r.mean_n) s += ',' + fmt(n);
  s += ',' + fmt(r.mean_loglik);
  return s;
}

// ---------------------------------------------------------------------------
// optimizers

void SgdMomentum::step(std::vector<double>& params, const std::vector<double>& grad,
                       double lr) {
  if (params.size() != velocity_.size() || grad.size() != velocity_.size())
    throw std::invalid_argument("SgdMomentum: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + grad[i];
    params[i] -= lr * velocity_[i];
  }
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

// ---------------------------------------------------------------------------
// objectives

ad::Tensor loss_relaxed(const ForwardOut& fwd, double tau) {
  if (fwd.mode != BlockMode::kRelaxed)
    throw std::invalid_argument("loss_relaxed: traces come from mode " +
                                std::string(block_mode_name(fwd.mode)));
  if (tau == 0.0 || !fwd.penalty_n.defined()) return fwd.nll;
  return ad::add(fwd.nll, ad::scale(fwd.penalty_n, tau));
}

ad::Tensor loss_reinforce(const ForwardOut& fwd, double tau, const EstimatorState& state) {
  if (fwd.mode != BlockMode::kDiscrete || !fwd.log_q.defined())
    throw std::invalid_argument("loss_reinforce: traces lack a discrete training path");
  ad::Tensor log_lik = ad::scale(fwd.nll, -1.0);
  ad::Tensor penalty;
  if (fwd.penalty_n.defined()) penalty = ad::scale(fwd.penalty_n, tau);
  return reinforce_surrogate(log_lik, fwd.log_q, penalty, state);
}

ad::Tensor loss_act(const ForwardOut& fwd, double tau) {
  if (fwd.mode != BlockMode::kAct || !fwd.rho_penalty.defined())
    throw std::invalid_argument("loss_act: traces come from mode " +
                                std::string(block_mode_name(fwd.mode)));
  return ad::add(fwd.nll, ad::scale(fwd.rho_penalty, tau));
}

// ---------------------------------------------------------------------------
// training loop

TrainResult train(Model& model, const TrainConfig& cfg, const Task& task,
                  std::ostream* metrics_csv) {
  const BlockMode mode = cfg.training_mode();
  const BlockOptions opts = cfg.block_options();
  const OptimizerKind opt_kind = cfg.resolved_optimizer();
  const double base_lr = cfg.resolved_learning_rate();

  ParamStore& store = model.params();
  std::vector<double> flat = store.flat();
  SgdMomentum sgd(cfg.momentum, flat.size());
  Adam adam(flat.size());
  EstimatorState estimator;
  estimator.kind = cfg.method == TrainMethod::kReinforce ? Estimator::kReinforce
                                                         : Estimator::kConcrete;
  estimator.temperature = cfg.lambda;
  VarianceProbe probe(cfg.probe_window);

  RngStream data_rng = RngStream::root(cfg.seed).derive("train-data");
  RngStream model_rng = RngStream::root(cfg.seed).derive("train-model");

  TrainResult result;
  if (metrics_csv) *metrics_csv << metrics_header(model.block_count()) << '\n';

  ad::Tape tape;
  for (int step = 0; step < cfg.steps; ++step) {
    double lr = base_lr;
    for (double frac : cfg.decay_milestones)
      if (step >= static_cast<int>(frac * cfg.steps)) lr *= cfg.decay_factor;

    tape.reset();
    BoundParams bound = bind(tape, store);

    ad::Tensor batch_loss;
    MetricsRow row;
    row.step = step;
    row.mean_n.assign(model.block_count(), 0.0);
    double reward_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const uint64_t index = static_cast<uint64_t>(step) * cfg.batch_size + b;
      Example ex = task.sample(data_rng.derive(index));
      RngStream ex_rng = model_rng.derive(index);
      ForwardOut fwd = model.forward(tape, bound, ex, mode, opts, ex_rng, /*training=*/true);
      ad::Tensor loss;
      switch (cfg.method) {
        case TrainMethod::kConcrete: loss = loss_relaxed(fwd, cfg.tau); break;
        case TrainMethod::kReinforce: loss = loss_reinforce(fwd, cfg.tau, estimator); break;
        case TrainMethod::kAct: loss = loss_act(fwd, cfg.tau); break;
      }
      batch_loss = batch_loss.defined() ? ad::add(batch_loss, loss) : loss;
      reward_sum += fwd.loglik_value;
      row.loglik += fwd.loglik_value;
      row.accuracy += fwd.correct;
      row.flops += fwd.flops;
      for (size_t k = 0; k < fwd.block_n.size(); ++k) row.mean_n[k] += fwd.block_n[k];
    }
    batch_loss = ad::scale(batch_loss, 1.0 / cfg.batch_size);
    row.loglik /= cfg.batch_size;
    row.accuracy /= cfg.batch_size;
    row.flops /= cfg.batch_size;
    for (double& n : row.mean_n) n /= cfg.batch_size;
    // Reported objective: -(loglik - tau * N); the reinforce surrogate value
    // itself is not the objective, so recompose it from the parts.
    row.penalty = cfg.tau * std::accumulate(row.mean_n.begin(), row.mean_n.end(), 0.0);
    if (cfg.method == TrainMethod::kAct)
      row.penalty = batch_loss.value() + row.loglik;  // tau * mean rho
    row.loss = -row.loglik + row.penalty;

    if (!std::isfinite(batch_loss.value())) {
      result.diverged = true;
      result.final_step = step;
      row.loss = batch_loss.value();
      result.rows.push_back(row);
      if (metrics_csv) *metrics_csv << metrics_row_csv(row) << '\n';
      return result;
    }

    tape.backward(batch_loss);
    std::vector<double> grad = grads_flat(store, bound);
    if (cfg.weight_decay > 0.0)
      for (size_t i = 0; i < grad.size(); ++i) grad[i] += cfg.weight_decay * flat[i];
    probe.push(grad);

    if (opt_kind == OptimizerKind::kAdam)
      adam.step(flat, grad, lr);
    else
      sgd.step(flat, grad, lr);
    store.load_flat(flat);

    if (cfg.method == TrainMethod::kReinforce)
      estimator.update_baseline(reward_sum / cfg.batch_size);

    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
      if (auto lv = probe.log10_variance_opt())
        row.grad_logvar = *lv;
      result.rows.push_back(row);
      if (metrics_csv) *metrics_csv << metrics_row_csv(row) << '\n';
    }
    result.final_step = step + 1;
  }
  return result;
}

// ---------------------------------------------------------------------------
// evaluation

EvalResult evaluate(const Model& model, BlockMode mode, const BlockOptions& opts,
                    const Task& task, int examples, uint64_t seed) {
  if (examples < 1) throw std::invalid_argument("evaluate: need at least one example");
  EvalResult res;
  res.mode = mode;
  res.mean_n.assign(model.block_count(), 0.0);
  RngStream data_rng = RngStream::root(seed).derive("eval-data");
  RngStream model_rng = RngStream::root(seed).derive("eval-model");
  ad::Tape tape;
  for (int i = 0; i < examples; ++i) {
    tape.reset();
    BoundParams bound = bind(tape, model.params());
    Example ex = task.sample(data_rng.derive(i));
    RngStream ex_rng = model_rng.derive(i);
    ForwardOut fwd = model.forward(tape, bound, ex, mode, opts, ex_rng, /*training=*/false);
    res.accuracy += fwd.correct;
    res.mean_flops += fwd.flops;
    res.mean_loglik += fwd.loglik_value;
    for (size_t k = 0; k < fwd.block_n.size(); ++k) res.mean_n[k] += fwd.block_n[k];
  }
  res.accuracy /= examples;
  res.mean_flops /= examples;
  res.mean_loglik /= examples;
  for (double& n : res.mean_n) n /= examples;
  return res;
}

// ---------------------------------------------------------------------------
// variance benchmark

std::vector<VarianceRun> variance_bench(const ModelSpec& grid_spec, const TrainConfig& cfg,
                                        const std::vector<int>& groupings) {
  std::vector<VarianceRun> runs;
  for (int grouping : groupings) {
    for (TrainMethod method : {TrainMethod::kReinforce, TrainMethod::kConcrete}) {
      ModelSpec spec = grid_spec;
      spec.kind = "grid";
      spec.fields["grouping"] = grouping;
      auto model = make_model(spec, RngStream::root(cfg.seed).derive("model-init").next_u64());
      auto task = make_task_for(spec);

      TrainConfig run_cfg = cfg;
      run_cfg.method = method;
      if (method == TrainMethod::kReinforce) {
        // the score-function runs always use Adam at 1e-3
        run_cfg.optimizer = OptimizerKind::kAdam;
        run_cfg.learning_rate.reset();
      }

      VarianceRun run;
      run.method = method;
      run.latent_count = static_cast<GridModel*>(model.get())->latent_count();

      TrainResult tr = train(*model, run_cfg, *task, nullptr);
      for (const auto& row : tr.rows)
        if (std::isfinite(row.grad_logvar)) run.probe.emplace_back(row.step, row.grad_logvar);

      EvalResult ev = evaluate(*model, BlockMode::kDiscrete, run_cfg.block_options(), *task,
                               512, cfg.seed + 17);
      run.final_accuracy = ev.accuracy;
      run.final_flops = ev.mean_flops;

      std::vector<double> vals;
      for (auto& [s, v] : run.probe) vals.push_back(v);
      if (!vals.empty()) {
        std::sort(vals.begin(), vals.end());
        run.median_logvar = vals[vals.size() / 2];
      } else {
        run.median_logvar = -std::numeric_limits<double>::infinity();
      }
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (size_t pos = 0; pos < idx.size(); ++pos) r[idx[pos]] = static_cast<double>(pos);
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double mean = (a.size() - 1) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace pact
