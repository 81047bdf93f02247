#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pact/blocks.hpp"
#include "pact/datasets.hpp"
#include "pact/params.hpp"

namespace pact {

// Declarative model description; `fields` carries the integer spec knobs so
// checkpoints can rebuild the architecture.
struct ModelSpec {
  std::string kind;  // residual_stack | grid | rnn
  std::map<std::string, int> fields;

  int get(const std::string& key, int fallback) const {
    auto it = fields.find(key);
    return it == fields.end() ? fallback : it->second;
  }
};

struct ForwardOut {
  BlockMode mode = BlockMode::kRelaxed;
  ad::Tensor nll;         // -log p(y | z, x), scalar
  ad::Tensor penalty_n;   // sum over blocks of the per-block-weighted expected iterations
  ad::Tensor rho_penalty; // act mode: weighted ponder cost
  ad::Tensor log_q;       // discrete training path: log q(z) along the realized path
  std::vector<double> block_n;      // reported N per block (mean over positions/timesteps)
  std::vector<double> block_flops;  // charged FLOPs per block
  double flops = 0.0;               // total, including stem/classifier
  double correct = 0.0;             // 1/0, or fraction of timesteps for sequences
  double loglik_value = 0.0;        // value of log p, convenience for baselines
};

class Model {
 public:
  virtual ~Model() = default;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ModelSpec& spec() const { return spec_; }

  virtual int block_count() const = 0;
  virtual int64_t param_count_analytic() const = 0;

  // `training` selects the gradient-carrying execution for discrete mode
  // (full halting chain); evaluation uses the lazy early-exit path.
  virtual ForwardOut forward(ad::Tape& tape, const BoundParams& bound, const Example& ex,
                             BlockMode mode, const BlockOptions& opts, RngStream& rng,
                             bool training) const = 0;

 protected:
  ModelSpec spec_;
  ParamStore params_;
};

// Stack of K adaptive residual blocks on a dense feature vector.
// fields: blocks, max_iterations, width, input_dim, classes
class ResidualStackModel : public Model {
 public:
  ResidualStackModel(const ModelSpec& spec, uint64_t init_seed);
  int block_count() const override { return blocks_; }
  int64_t param_count_analytic() const override;
  ForwardOut forward(ad::Tape& tape, const BoundParams& bound, const Example& ex,
                     BlockMode mode, const BlockOptions& opts, RngStream& rng,
                     bool training) const override;

 private:
  int blocks_, max_iter_, width_, input_dim_, classes_;
  int stem_w_, stem_b_, cls_w_, cls_b_;
  std::vector<std::vector<int>> f1_w_, f1_b_, f2_w_, f2_b_;  // [block][iter]
  std::vector<std::vector<int>> head_w_, head_b_;            // [block][iter<L-1]
};

// Residual blocks over a spatial grid with one halting latent per position
// (or per grouping patch). fields: blocks, max_iterations, channels, height,
// width, classes, grouping
class GridModel : public Model {
 public:
  GridModel(const ModelSpec& spec, uint64_t init_seed);
  int block_count() const override { return blocks_; }
  int64_t param_count_analytic() const override;
  ForwardOut forward(ad::Tape& tape, const BoundParams& bound, const Example& ex,
                     BlockMode mode, const BlockOptions& opts, RngStream& rng,
                     bool training) const override;

  int latent_count() const;  // number of halting latents given the grouping

 private:
  int blocks_, max_iter_, channels_, height_, width_, classes_, grouping_;
  int block_channels(int k) const { return channels_ << k; }
  int block_height(int k) const { return height_ >> k; }
  int block_width(int k) const { return width_ >> k; }
  int patch_for_block(int k) const;

  int stem_w_, stem_b_, cls_w_, cls_b_;
  std::vector<std::vector<int>> f1_w_, f1_b_, f2_w_, f2_b_;
  std::vector<std::vector<int>> head_conv_, head_pool_, head_b_;
};

// One adaptive computation block per timestep of a recurrent transition;
// the halting head is shared across iterations and timesteps.
// fields: hidden, embed, max_iterations, classes
class AdaptiveRnnModel : public Model {
 public:
  AdaptiveRnnModel(const ModelSpec& spec, uint64_t init_seed);
  int block_count() const override { return 1; }  // reported as one column
  int64_t param_count_analytic() const override;
  ForwardOut forward(ad::Tape& tape, const BoundParams& bound, const Example& ex,
                     BlockMode mode, const BlockOptions& opts, RngStream& rng,
                     bool training) const override;

 private:
  int hidden_, embed_, max_iter_, classes_;
  int emb_w_, in_w_, rec_w_, flag_w_, trans_b_, head_w_, head_b_, em_w_, em_b_;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec, uint64_t init_seed);
std::unique_ptr<Task> make_task_for(const ModelSpec& spec);

// Checkpoints: a versioned header line, one metadata line, then named flat
// arrays of little-endian 64-bit floats with declared shapes. Round-trips
// are bit-exact.
void save_checkpoint(const std::string& path, const Model& model,
                     const std::map<std::string, std::string>& meta);

struct Checkpoint {
  ModelSpec spec;
  std::map<std::string, std::string> meta;
  std::unique_ptr<Model> model;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pact
