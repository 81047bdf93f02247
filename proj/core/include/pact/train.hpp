#pragma once

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pact/models.hpp"
#include "pact/stochastic.hpp"

namespace pact {

enum class TrainMethod { kConcrete, kReinforce, kAct };
const char* train_method_name(TrainMethod m);
TrainMethod train_method_from_name(const std::string& name);

enum class OptimizerKind { kSgdMomentum, kAdam };
const char* optimizer_name(OptimizerKind o);
OptimizerKind optimizer_from_name(const std::string& name);

struct TrainConfig {
  TrainMethod method = TrainMethod::kConcrete;
  std::optional<OptimizerKind> optimizer;     // defaults: Adam for reinforce, SGD otherwise
  std::optional<double> learning_rate;        // defaults: 1e-3 Adam, 0.1 SGD
  double momentum = 0.9;
  std::vector<double> decay_milestones = {0.6, 0.75, 0.9};  // fractions of total steps
  double decay_factor = 0.1;
  int steps = 2000;
  int batch_size = 32;
  double tau = 0.01;
  double lambda = 2.0 / 3.0;
  double delta = 0.01;
  double epsilon = 0.01;
  double weight_decay = 0.0;
  uint64_t seed = 1;
  int log_every = 50;
  int probe_window = 16;

  OptimizerKind resolved_optimizer() const;
  double resolved_learning_rate() const;
  BlockMode training_mode() const;
  BlockOptions block_options() const;
};

struct MetricsRow {
  int step = 0;
  double loss = 0.0;
  double loglik = 0.0;
  double penalty = 0.0;
  std::vector<double> mean_n;
  double flops = 0.0;
  double accuracy = 0.0;
  double grad_logvar = std::numeric_limits<double>::quiet_NaN();  // NaN/-inf -> empty cell
  double wall_ms = std::numeric_limits<double>::quiet_NaN();      // not recorded: reruns stay byte-identical
};

std::string metrics_header(int block_count);
std::string metrics_row_csv(const MetricsRow& row);

class SgdMomentum {
 public:
  SgdMomentum(double momentum, size_t size) : momentum_(momentum), velocity_(size, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);

 private:
  double momentum_;
  std::vector<double> velocity_;
};

class Adam {
 public:
  Adam(size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grad, double lr);

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

// Per-example objectives. Both check that the traces came from the matching
// execution mode and throw otherwise.
ad::Tensor loss_relaxed(const ForwardOut& fwd, double tau);
ad::Tensor loss_reinforce(const ForwardOut& fwd, double tau, const EstimatorState& state);
ad::Tensor loss_act(const ForwardOut& fwd, double tau);

struct TrainResult {
  std::vector<MetricsRow> rows;
  bool diverged = false;
  int final_step = 0;
};

// Deterministic given (config, model init, task); one optimizer step per
// batch, metrics row every log_every steps. Divergence (non-finite loss)
// aborts with a diagnostic row.
TrainResult train(Model& model, const TrainConfig& cfg, const Task& task,
                  std::ostream* metrics_csv);

struct EvalResult {
  BlockMode mode = BlockMode::kRelaxed;
  double accuracy = 0.0;
  double mean_flops = 0.0;
  std::vector<double> mean_n;
  double mean_loglik = 0.0;
};

EvalResult evaluate(const Model& model, BlockMode mode, const BlockOptions& opts,
                    const Task& task, int examples, uint64_t seed);

std::string eval_header(int block_count);
std::string eval_row_csv(const EvalResult& r);

struct VarianceRun {
  int latent_count = 0;
  TrainMethod method = TrainMethod::kConcrete;
  std::vector<std::pair<int, double>> probe;  // (step, log10 variance)
  double final_accuracy = 0.0;
  double final_flops = 0.0;
  double median_logvar = 0.0;
};

// Trains one grid model per (grouping, estimator) with the variance probe
// attached and reports endpoint metrics.
std::vector<VarianceRun> variance_bench(const ModelSpec& grid_spec, const TrainConfig& cfg,
                                        const std::vector<int>& groupings);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace pact
