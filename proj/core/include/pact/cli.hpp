#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pact/models.hpp"
#include "pact/train.hpp"

namespace pact::cli {

// Configuration problem (bad file, unknown key, missing checkpoint). Maps to
// exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSpec {
  std::vector<std::string> modes = {"relaxed", "discrete", "thresholded"};
  int examples = 1024;
  uint64_t seed = 9999;
};

// Declarative experiment document. Unknown keys are rejected; the resolved
// form (all defaults materialized) is written next to the outputs.
struct ExperimentConfig {
  ModelSpec model;
  TrainConfig train;
  EvalSpec eval;
  std::string out_dir;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text, const std::string& origin);
  std::string resolved_json() const;
};

struct CommonOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
};

// Default output directory: $PACT_OUT_DIR if set, else "runs".
std::string default_out_dir();

// Exit codes: 0 success, 1 runtime failure (divergence), 2 usage/config error.
int cmd_train(const std::string& config_path, const CommonOverrides& ov);
int cmd_eval(const std::string& checkpoint_path, const std::string& mode, int examples,
             uint64_t seed, const std::optional<std::string>& out_dir);
int cmd_sweep_tau(const std::string& config_path, const std::vector<double>& taus,
                  const CommonOverrides& ov);
int cmd_variance(const std::string& config_path, const std::vector<int>& groupings,
                 const CommonOverrides& ov);
int cmd_ponder_demo(const std::vector<double>& tail, const std::optional<std::string>& out_dir);

}  // namespace pact::cli
