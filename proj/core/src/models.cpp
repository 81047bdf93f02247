#include "pact/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pact/stochastic.hpp"

namespace pact {

namespace {

std::vector<double> zeros(int n) { return std::vector<double>(n, 0.0); }

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

ad::Tensor acc(ad::Tensor total, const ad::Tensor& term) {
  if (!term.defined()) return total;
  return total.defined() ? ad::add(total, term) : term;
}

ad::Tensor one_minus(const ad::Tensor& x) {
  return ad::add_scalar(ad::scale(x, -1.0), 1.0);
}

// Expected iteration count of a (possibly truncated) halting chain, with the
// tail mass assigned to the last entry. A full chain ends with a forced-one
// probability, which makes the tail term vanish.
ad::Tensor truncated_expected_iterations(std::span<const ad::Tensor> h_chain) {
  ad::Tape& tape = *h_chain.front().tape();
  ad::Tensor stick = tape.constant(h_chain.front().shape(),
                                   std::vector<double>(h_chain.front().size(), 1.0));
  ad::Tensor n;
  for (size_t l = 0; l < h_chain.size(); ++l) {
    n = acc(n, ad::scale(ad::mul(stick, h_chain[l]), static_cast<double>(l + 1)));
    stick = ad::mul(stick, one_minus(h_chain[l]));
  }
  return ad::add(n, ad::scale(stick, static_cast<double>(h_chain.size())));
}

BlockResult run_block(BlockMode mode, bool training, const ad::Tensor& input,
                      const BodyFn& body, const HeadFn& head, const BlockConfig& cfg,
                      const BlockCosts& costs, RngStream& rng) {
  switch (mode) {
    case BlockMode::kDiscrete:
      return training ? run_discrete_full(input, body, head, cfg, costs, rng)
                      : run_discrete(input, body, head, cfg, costs, rng);
    case BlockMode::kThresholded:
      return run_thresholded(input, body, head, cfg, costs);
    case BlockMode::kRelaxed:
      return run_relaxed(input, body, head, cfg, costs, rng);
    case BlockMode::kAct:
      return run_act(input, body, head, cfg, costs);
  }
  throw std::logic_error("run_block: bad mode");
}

}  // namespace

// ---------------------------------------------------------------------------
// ResidualStackModel

ResidualStackModel::ResidualStackModel(const ModelSpec& spec, uint64_t init_seed) {
  blocks_ = spec.get("blocks", 2);
  max_iter_ = spec.get("max_iterations", 3);
  width_ = spec.get("width", 16);
  input_dim_ = spec.get("input_dim", 8);
  classes_ = spec.get("classes", 4);
  if (blocks_ < 1 || max_iter_ < 1 || width_ < 1 || input_dim_ < 1 || classes_ < 2)
    throw std::invalid_argument("ResidualStackModel: invalid spec");
  spec_.kind = "residual_stack";
  spec_.fields = {{"blocks", blocks_},
                  {"max_iterations", max_iter_},
                  {"width", width_},
                  {"input_dim", input_dim_},
                  {"classes", classes_}};

  RngStream rng = RngStream::root(init_seed).derive("init");
  stem_w_ = params_.add("stem.w", {width_, input_dim_},
                        init_fan_in({width_, input_dim_}, input_dim_, rng));
  stem_b_ = params_.add("stem.b", {width_}, zeros(width_));
  f1_w_.resize(blocks_);
  f1_b_.resize(blocks_);
  f2_w_.resize(blocks_);
  f2_b_.resize(blocks_);
  head_w_.resize(blocks_);
  head_b_.resize(blocks_);
  for (int k = 0; k < blocks_; ++k) {
    for (int l = 0; l < max_iter_; ++l) {
      const std::string p = "blk" + std::to_string(k) + ".it" + std::to_string(l) + ".";
      f1_w_[k].push_back(params_.add(p + "f1.w", {width_, width_},
                                     init_fan_in({width_, width_}, width_, rng)));
      f1_b_[k].push_back(params_.add(p + "f1.b", {width_}, zeros(width_)));
      f2_w_[k].push_back(params_.add(p + "f2.w", {width_, width_},
                                     init_fan_in({width_, width_}, width_, rng)));
      f2_b_[k].push_back(params_.add(p + "f2.b", {width_}, zeros(width_)));
    }
    for (int l = 0; l + 1 < max_iter_; ++l) {
      const std::string p = "blk" + std::to_string(k) + ".head" + std::to_string(l) + ".";
      head_w_[k].push_back(params_.add(p + "w", {1, width_},
                                       init_fan_in({1, width_}, width_, rng), true));
      head_b_[k].push_back(params_.add(p + "b", {1}, {-3.0}, true));
    }
  }
  cls_w_ = params_.add("cls.w", {classes_, width_},
                       init_fan_in({classes_, width_}, width_, rng));
  cls_b_ = params_.add("cls.b", {classes_}, zeros(classes_));
}

int64_t ResidualStackModel::param_count_analytic() const {
  const int64_t w = width_;
  int64_t n = w * input_dim_ + w;                       // stem
  n += static_cast<int64_t>(blocks_) * max_iter_ * (2 * w * w + 2 * w);
  n += static_cast<int64_t>(blocks_) * (max_iter_ - 1) * (w + 1);  // heads
  n += static_cast<int64_t>(classes_) * w + classes_;   // classifier
  return n;
}

ForwardOut ResidualStackModel::forward(ad::Tape& tape, const BoundParams& bound,
                                       const Example& ex, BlockMode mode,
                                       const BlockOptions& opts, RngStream& rng,
                                       bool training) const {
  if (static_cast<int>(ex.features.size()) != input_dim_)
    throw std::invalid_argument("residual_stack forward: input size " +
                                std::to_string(ex.features.size()) + " != input_dim " +
                                std::to_string(input_dim_));
  ForwardOut out;
  out.mode = mode;

  ad::Tensor x = tape.constant({input_dim_}, ex.features);
  ad::Tensor u = ad::tanh(ad::affine(x, bound[stem_w_], bound[stem_b_]));
  out.flops = static_cast<double>(width_) * input_dim_ + static_cast<double>(classes_) * width_;

  BlockConfig cfg;
  cfg.max_iterations = max_iter_;
  cfg.mode = mode;
  cfg.lambda = opts.lambda;
  cfg.delta = opts.delta;
  cfg.epsilon = opts.epsilon;
  const BlockCosts costs{2.0 * width_ * width_, static_cast<double>(width_)};

  for (int k = 0; k < blocks_; ++k) {
    BodyFn body = [&, k](int l, const ad::Tensor& prev) {
      ad::Tensor hid = ad::tanh(ad::affine(prev, bound[f1_w_[k][l - 1]], bound[f1_b_[k][l - 1]]));
      return ad::add(prev, ad::affine(hid, bound[f2_w_[k][l - 1]], bound[f2_b_[k][l - 1]]));
    };
    HeadFn head = [&, k](int l, const ad::Tensor& v) {
      return ad::sigmoid(ad::affine(v, bound[head_w_[k][l - 1]], bound[head_b_[k][l - 1]]));
    };
    BlockResult r = run_block(mode, training, u, body, head, cfg, costs, rng);
    u = r.output;
    // relaxed evaluation reports the executed horizon, the same thing the
    // FLOPs ledger charges; training keeps the expected value
    out.block_n.push_back(mode == BlockMode::kRelaxed && !training
                              ? static_cast<double>(r.trace.executed)
                              : r.trace.n_value);
    out.block_flops.push_back(r.trace.flops);
    out.flops += r.trace.flops;
    out.penalty_n = acc(out.penalty_n, r.trace.n);
    out.log_q = acc(out.log_q, r.trace.log_q);
    out.rho_penalty = acc(out.rho_penalty, r.trace.rho);
  }

  ad::Tensor logits = ad::affine(u, bound[cls_w_], bound[cls_b_]);
  out.nll = ad::softmax_cross_entropy(logits, ex.label);
  out.correct = argmax(logits.values()) == ex.label ? 1.0 : 0.0;
  out.loglik_value = -out.nll.value();
  return out;
}

// ---------------------------------------------------------------------------
// GridModel

GridModel::GridModel(const ModelSpec& spec, uint64_t init_seed) {
  blocks_ = spec.get("blocks", 1);
  max_iter_ = spec.get("max_iterations", 4);
  channels_ = spec.get("channels", 4);
  height_ = spec.get("height", 16);
  width_ = spec.get("width", 16);
  classes_ = spec.get("classes", 4);
  grouping_ = spec.get("grouping", 1);
  if (blocks_ < 1 || max_iter_ < 1 || channels_ < 1 || classes_ < 2)
    throw std::invalid_argument("GridModel: invalid spec");
  if (grouping_ < 1 || (grouping_ & (grouping_ - 1)) != 0)
    throw std::invalid_argument("GridModel: grouping must be a power of two");
  for (int k = 0; k < blocks_; ++k)
    if (block_height(k) < 1 || block_width(k) < 1 ||
        block_height(k) % patch_for_block(k) != 0 || block_width(k) % patch_for_block(k) != 0)
      throw std::invalid_argument("GridModel: grid does not tile at block " + std::to_string(k));
  spec_.kind = "grid";
  spec_.fields = {{"blocks", blocks_},   {"max_iterations", max_iter_},
                  {"channels", channels_}, {"height", height_},
                  {"width", width_},     {"classes", classes_},
                  {"grouping", grouping_}};

  RngStream rng = RngStream::root(init_seed).derive("init");
  stem_w_ = params_.add("stem.w", {channels_, 3, 3, 3},
                        init_fan_in({channels_, 3, 3, 3}, 3 * 9, rng));
  stem_b_ = params_.add("stem.b", {channels_}, zeros(channels_));
  f1_w_.resize(blocks_);
  f1_b_.resize(blocks_);
  f2_w_.resize(blocks_);
  f2_b_.resize(blocks_);
  head_conv_.resize(blocks_);
  head_pool_.resize(blocks_);
  head_b_.resize(blocks_);
  for (int k = 0; k < blocks_; ++k) {
    const int c = block_channels(k);
    for (int l = 0; l < max_iter_; ++l) {
      const std::string p = "blk" + std::to_string(k) + ".it" + std::to_string(l) + ".";
      const int cin = (k > 0 && l == 0) ? block_channels(k - 1) : c;
      f1_w_[k].push_back(params_.add(p + "f1.w", {c, cin, 3, 3},
                                     init_fan_in({c, cin, 3, 3}, cin * 9, rng)));
      f1_b_[k].push_back(params_.add(p + "f1.b", {c}, zeros(c)));
      f2_w_[k].push_back(params_.add(p + "f2.w", {c, c, 3, 3},
                                     init_fan_in({c, c, 3, 3}, c * 9, rng)));
      f2_b_[k].push_back(params_.add(p + "f2.b", {c}, zeros(c)));
    }
    for (int l = 0; l + 1 < max_iter_; ++l) {
      const std::string p = "blk" + std::to_string(k) + ".head" + std::to_string(l) + ".";
      head_conv_[k].push_back(params_.add(p + "conv.w", {1, c, 3, 3},
                                          init_fan_in({1, c, 3, 3}, c * 9, rng), true));
      head_pool_[k].push_back(params_.add(p + "pool.w", {1, c},
                                          init_fan_in({1, c}, c, rng), true));
      head_b_[k].push_back(params_.add(p + "b", {1}, {-3.0}, true));
    }
  }
  const int ck = block_channels(blocks_ - 1);
  cls_w_ = params_.add("cls.w", {classes_, ck}, init_fan_in({classes_, ck}, ck, rng));
  cls_b_ = params_.add("cls.b", {classes_}, zeros(classes_));
}

int GridModel::patch_for_block(int k) const {
  return std::min(grouping_, std::min(block_height(k), block_width(k)));
}

int GridModel::latent_count() const {
  int m = 0;
  for (int k = 0; k < blocks_; ++k) {
    const int patch = patch_for_block(k);
    m += (block_height(k) / patch) * (block_width(k) / patch);
  }
  return m;
}

int64_t GridModel::param_count_analytic() const {
  int64_t n = static_cast<int64_t>(channels_) * 3 * 9 + channels_;  // stem
  for (int k = 0; k < blocks_; ++k) {
    const int64_t c = block_channels(k);
    const int64_t cin0 = (k > 0) ? block_channels(k - 1) : c;
    n += c * cin0 * 9 + c + c * c * 9 + c;                         // unit 1
    n += static_cast<int64_t>(max_iter_ - 1) * (2 * c * c * 9 + 2 * c);  // units 2..L
    n += static_cast<int64_t>(max_iter_ - 1) * (c * 9 + c + 1);    // heads
  }
  const int64_t ck = block_channels(blocks_ - 1);
  n += static_cast<int64_t>(classes_) * ck + classes_;
  return n;
}

ForwardOut GridModel::forward(ad::Tape& tape, const BoundParams& bound, const Example& ex,
                              BlockMode mode, const BlockOptions& opts, RngStream& rng,
                              bool training) const {
  if (static_cast<int>(ex.features.size()) != height_ * width_)
    throw std::invalid_argument("grid forward: input size " +
                                std::to_string(ex.features.size()) + " != " +
                                std::to_string(height_ * width_));
  ForwardOut out;
  out.mode = mode;

  // Input channels: image plus two fixed coordinate maps, so pooled features
  // can encode where the pattern sits.
  std::vector<double> x3;
  x3.reserve(3 * ex.features.size());
  x3.insert(x3.end(), ex.features.begin(), ex.features.end());
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) x3.push_back(2.0 * x / (width_ - 1) - 1.0);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) x3.push_back(2.0 * y / (height_ - 1) - 1.0);
  ad::Tensor u = ad::tanh(
      ad::conv3x3(tape.constant({3, height_, width_}, std::move(x3)), bound[stem_w_],
                  bound[stem_b_], 1));
  out.flops = 9.0 * 3 * channels_ * height_ * width_;

  for (int k = 0; k < blocks_; ++k) {
    const int c = block_channels(k);
    const int hk = block_height(k), wk = block_width(k);
    const int patch = patch_for_block(k);
    const int ph = hk / patch, pw = wk / patch;
    const int n_patches = ph * pw;
    const double positions = static_cast<double>(hk) * wk;
    const double body_pp = 18.0 * c * c;
    const double head_pp = 9.0 * c;
    double blk_flops = 0.0;

    std::vector<ad::Tensor> h_chain;
    std::vector<double> active(n_patches, 1.0);  // patch executes the next unit
    std::vector<double> halt_unit(n_patches, 0.0);
    ad::Tensor mask_full;        // (hk, wk) multiplier for the next unit's update
    ad::Tensor relaxed_stick;    // relaxed: remaining sampled stick per patch
    ad::Tensor act_zsum;         // act: accumulated halting weights per patch
    ad::Tensor act_rho;          // act: ponder cost map
    std::vector<double> act_cum(n_patches, 0.0);
    ad::Tensor ones_patch = tape.constant({ph, pw}, std::vector<double>(n_patches, 1.0));
    if (mode == BlockMode::kRelaxed) relaxed_stick = ones_patch;
    if (mode == BlockMode::kAct) {
      act_zsum = tape.constant({ph, pw}, zeros(n_patches));
      act_rho = tape.constant({ph, pw}, zeros(n_patches));
    }
    ad::Tensor log_q_blk;

    for (int l = 1; l <= max_iter_; ++l) {
      const double active_positions =
          std::count_if(active.begin(), active.end(), [](double a) { return a > 0.0; }) *
          static_cast<double>(patch) * patch;

      // body
      if (k > 0 && l == 1) {
        // downsampling transition: stride-2, channel doubling, non-residual
        ad::Tensor f = ad::tanh(ad::conv3x3(u, bound[f1_w_[k][0]], bound[f1_b_[k][0]], 2));
        u = ad::conv3x3(f, bound[f2_w_[k][0]], bound[f2_b_[k][0]], 1);
        blk_flops += (9.0 * block_channels(k - 1) * c + 9.0 * c * c) * positions;
      } else {
        ad::Tensor f = ad::tanh(ad::conv3x3(u, bound[f1_w_[k][l - 1]], bound[f1_b_[k][l - 1]], 1));
        f = ad::conv3x3(f, bound[f2_w_[k][l - 1]], bound[f2_b_[k][l - 1]], 1);
        if (l == 1) {
          u = ad::add(u, f);
          blk_flops += body_pp * positions;
        } else {
          u = ad::add(u, ad::mul_mask(f, mask_full));
          blk_flops += body_pp * active_positions;
        }
      }

      // halting probabilities at patch granularity
      ad::Tensor h;
      if (l < max_iter_) {
        ad::Tensor logit_map =
            ad::reshape(ad::conv3x3(u, bound[head_conv_[k][l - 1]]), {hk, wk});
        logit_map = ad::add_bcast(
            logit_map, ad::affine(ad::global_avg_pool(u), bound[head_pool_[k][l - 1]]));
        logit_map = ad::add_bcast(logit_map, bound[head_b_[k][l - 1]]);
        h = ad::sigmoid(patch > 1 ? ad::avg_pool_patch(logit_map, patch) : logit_map);
        const double heads_at = (l == 1) ? positions : active_positions;
        blk_flops += head_pp * heads_at + (heads_at > 0 ? c : 0);
      } else {
        h = ones_patch;
      }
      h_chain.push_back(h);

      // gates, masks, bookkeeping
      if (mode == BlockMode::kDiscrete || mode == BlockMode::kThresholded) {
        std::vector<double> gate(n_patches, 1.0);
        if (l < max_iter_) {
          const auto& hv = h.values();
          for (int p = 0; p < n_patches; ++p)
            gate[p] = (mode == BlockMode::kDiscrete)
                          ? static_cast<double>(sample_bernoulli(hv[p], rng))
                          : (hv[p] > 0.5 ? 1.0 : 0.0);
        }
        if (training && mode == BlockMode::kDiscrete) {
          // log q contribution: alive patches factor in their gate outcome
          std::vector<double> fire(n_patches, 0.0), cont(n_patches, 0.0);
          for (int p = 0; p < n_patches; ++p) {
            if (active[p] <= 0.0) continue;
            (gate[p] > 0.0 ? fire[p] : cont[p]) = 1.0;
          }
          if (l < max_iter_) {
            ad::Tensor logh = ad::log(ad::clamp(h, ad::kProbEps, 1.0));
            ad::Tensor log1mh = ad::log(ad::clamp(one_minus(h), ad::kProbEps, 1.0));
            ad::Tensor contrib =
                ad::add(ad::mul(logh, tape.constant({ph, pw}, std::move(fire))),
                        ad::mul(log1mh, tape.constant({ph, pw}, std::move(cont))));
            log_q_blk = acc(log_q_blk, ad::sum(contrib));
          }
        }
        for (int p = 0; p < n_patches; ++p)
          if (active[p] > 0.0 && gate[p] > 0.0) {
            halt_unit[p] = l;
            active[p] = 0.0;
          }
        if (l < max_iter_) {
          ad::Tensor mask_patch = tape.constant({ph, pw}, std::vector<double>(active));
          mask_full = patch > 1 ? ad::repeat_patch(mask_patch, patch) : mask_patch;
        }
      } else if (mode == BlockMode::kRelaxed) {
        if (l < max_iter_) {
          ad::Tensor xi = sample_relaxed_bernoulli(h, opts.lambda, rng);
          relaxed_stick = ad::mul(relaxed_stick, one_minus(xi));
          const auto& rv = relaxed_stick.values();
          std::vector<double> indicator(n_patches);
          for (int p = 0; p < n_patches; ++p) {
            indicator[p] = rv[p] > opts.delta ? 1.0 : 0.0;
            if (active[p] > 0.0 && indicator[p] == 0.0) halt_unit[p] = l;
            active[p] = indicator[p];
          }
          ad::Tensor clipped =
              ad::mul(relaxed_stick, tape.constant({ph, pw}, std::move(indicator)));
          mask_full = patch > 1 ? ad::repeat_patch(clipped, patch) : clipped;
        } else {
          for (int p = 0; p < n_patches; ++p)
            if (active[p] > 0.0) halt_unit[p] = max_iter_;
          std::fill(active.begin(), active.end(), 0.0);
        }
      } else {  // act
        const auto& hv = h.values();
        std::vector<double> halt_now(n_patches, 0.0), cont(n_patches, 0.0);
        for (int p = 0; p < n_patches; ++p) {
          if (active[p] <= 0.0) continue;
          act_cum[p] += hv[p];
          if (act_cum[p] >= 1.0 - opts.epsilon) {
            halt_now[p] = 1.0;
            halt_unit[p] = l;
          } else {
            cont[p] = 1.0;
          }
        }
        ad::Tensor remainder = ad::sub(ones_patch, act_zsum);
        ad::Tensor halt_ind = tape.constant({ph, pw}, std::move(halt_now));
        ad::Tensor w = ad::add(ad::mul(h, tape.constant({ph, pw}, std::move(cont))),
                               ad::mul(remainder, halt_ind));
        act_rho = ad::add(act_rho, ad::mul(halt_ind, ad::add_scalar(remainder,
                                                                    static_cast<double>(l))));
        act_zsum = ad::add(act_zsum, w);
        for (int p = 0; p < n_patches; ++p)
          if (halt_unit[p] == l) active[p] = 0.0;
        if (l < max_iter_) {
          ad::Tensor mask_patch = ad::mul(ad::sub(ones_patch, act_zsum),
                                          tape.constant({ph, pw}, std::vector<double>(active)));
          mask_full = patch > 1 ? ad::repeat_patch(mask_patch, patch) : mask_patch;
        }
      }

      const bool any_active = std::any_of(active.begin(), active.end(),
                                          [](double a) { return a > 0.0; });
      // the discrete training path keeps unrolling: the tail of the halting
      // chain still shapes the expected-iterations gradient
      if (!any_active && l < max_iter_ && !(training && mode == BlockMode::kDiscrete))
        break;
    }

    // block summaries
    const double patch_area = static_cast<double>(patch) * patch;
    if (mode == BlockMode::kRelaxed || (training && mode == BlockMode::kDiscrete)) {
      ad::Tensor n_map = truncated_expected_iterations(h_chain);
      ad::Tensor n_mean = ad::scale(ad::sum(n_map), patch_area / positions);
      out.penalty_n = acc(out.penalty_n, n_mean);
      if (mode == BlockMode::kRelaxed) {
        if (training) {
          out.block_n.push_back(n_mean.value());
        } else {
          double mean_exec = 0.0;
          for (double z : halt_unit) mean_exec += z;
          out.block_n.push_back(mean_exec * patch_area / positions);
        }
      } else {
        double mean_z = 0.0;
        for (double z : halt_unit) mean_z += z;
        out.block_n.push_back(mean_z * patch_area / positions);
      }
    } else if (mode == BlockMode::kAct) {
      out.rho_penalty = acc(out.rho_penalty,
                            ad::scale(ad::sum(act_rho), patch_area / positions));
      double mean_steps = 0.0;
      for (double z : halt_unit) mean_steps += z;
      out.block_n.push_back(mean_steps * patch_area / positions);
    } else {
      double mean_z = 0.0;
      for (double z : halt_unit) mean_z += z;
      out.block_n.push_back(mean_z * patch_area / positions);
    }
    out.log_q = acc(out.log_q, log_q_blk);
    out.block_flops.push_back(blk_flops);
    out.flops += blk_flops;
  }

  const int ck = block_channels(blocks_ - 1);
  ad::Tensor logits = ad::affine(ad::global_avg_pool(u), bound[cls_w_], bound[cls_b_]);
  out.flops += static_cast<double>(classes_) * ck;
  out.nll = ad::softmax_cross_entropy(logits, ex.label);
  out.correct = argmax(logits.values()) == ex.label ? 1.0 : 0.0;
  out.loglik_value = -out.nll.value();
  return out;
}

// ---------------------------------------------------------------------------
// AdaptiveRnnModel

AdaptiveRnnModel::AdaptiveRnnModel(const ModelSpec& spec, uint64_t init_seed) {
  hidden_ = spec.get("hidden", 16);
  embed_ = spec.get("embed", 4);
  max_iter_ = spec.get("max_iterations", 3);
  classes_ = spec.get("classes", 2);
  if (hidden_ < 1 || embed_ < 1 || max_iter_ < 1 || classes_ < 2)
    throw std::invalid_argument("AdaptiveRnnModel: invalid spec");
  spec_.kind = "rnn";
  spec_.fields = {{"hidden", hidden_},
                  {"embed", embed_},
                  {"max_iterations", max_iter_},
                  {"classes", classes_}};

  RngStream rng = RngStream::root(init_seed).derive("init");
  emb_w_ = params_.add("emb.w", {embed_, 2}, init_fan_in({embed_, 2}, 2, rng));
  in_w_ = params_.add("trans.in.w", {hidden_, embed_},
                      init_fan_in({hidden_, embed_}, embed_, rng));
  rec_w_ = params_.add("trans.rec.w", {hidden_, hidden_},
                       init_fan_in({hidden_, hidden_}, hidden_, rng));
  flag_w_ = params_.add("trans.flag.w", {hidden_},
                        init_fan_in({hidden_}, hidden_, rng));
  trans_b_ = params_.add("trans.b", {hidden_}, zeros(hidden_));
  head_w_ = params_.add("head.w", {1, hidden_}, init_fan_in({1, hidden_}, hidden_, rng), true);
  head_b_ = params_.add("head.b", {1}, {-3.0}, true);
  em_w_ = params_.add("emit.w", {classes_, hidden_},
                      init_fan_in({classes_, hidden_}, hidden_, rng));
  em_b_ = params_.add("emit.b", {classes_}, zeros(classes_));
}

int64_t AdaptiveRnnModel::param_count_analytic() const {
  const int64_t w = hidden_;
  return static_cast<int64_t>(embed_) * 2 + w * embed_ + w * w + w + w  // embed + transition
         + (w + 1)                                                      // shared head
         + static_cast<int64_t>(classes_) * w + classes_;               // emission
}

ForwardOut AdaptiveRnnModel::forward(ad::Tape& tape, const BoundParams& bound,
                                     const Example& ex, BlockMode mode,
                                     const BlockOptions& opts, RngStream& rng,
                                     bool training) const {
  if (ex.sequence.empty())
    throw std::invalid_argument("rnn forward: empty input sequence");
  if (ex.targets.size() != ex.sequence.size())
    throw std::invalid_argument("rnn forward: targets do not match sequence length");
  ForwardOut out;
  out.mode = mode;

  BlockConfig cfg;
  cfg.max_iterations = max_iter_;
  cfg.mode = mode;
  cfg.lambda = opts.lambda;
  cfg.delta = opts.delta;
  cfg.epsilon = opts.epsilon;
  const BlockCosts costs{static_cast<double>(hidden_) * (embed_ + hidden_),
                         static_cast<double>(hidden_)};

  ad::Tensor state = tape.constant({hidden_}, zeros(hidden_));
  const int steps = static_cast<int>(ex.sequence.size());
  double n_sum = 0.0, blk_flops = 0.0;
  for (int t = 0; t < steps; ++t) {
    const int bit = ex.sequence[t];
    ad::Tensor onehot = tape.constant({2}, {bit == 0 ? 1.0 : 0.0, bit == 1 ? 1.0 : 0.0});
    ad::Tensor emb = ad::affine(onehot, bound[emb_w_]);
    BodyFn body = [&](int l, const ad::Tensor& prev) {
      ad::Tensor a = ad::affine(emb, bound[in_w_], bound[trans_b_]);
      a = ad::add(a, ad::affine(prev, bound[rec_w_]));
      if (l == 1) a = ad::add(a, bound[flag_w_]);  // new-timestep feature
      return ad::tanh(a);
    };
    HeadFn head = [&](int, const ad::Tensor& v) {
      return ad::sigmoid(ad::affine(v, bound[head_w_], bound[head_b_]));
    };
    BlockResult r = run_block(mode, training, state, body, head, cfg, costs, rng);
    state = r.output;
    n_sum += (mode == BlockMode::kRelaxed && !training)
                 ? static_cast<double>(r.trace.executed)
                 : r.trace.n_value;
    blk_flops += r.trace.flops;
    out.penalty_n = acc(out.penalty_n, r.trace.n);
    out.log_q = acc(out.log_q, r.trace.log_q);
    out.rho_penalty = acc(out.rho_penalty, r.trace.rho);

    ad::Tensor logits = ad::affine(state, bound[em_w_], bound[em_b_]);
    ad::Tensor nll_t = ad::softmax_cross_entropy(logits, ex.targets[t]);
    out.nll = acc(out.nll, nll_t);
    out.correct += argmax(logits.values()) == ex.targets[t] ? 1.0 : 0.0;
  }
  out.correct /= steps;
  out.block_n.push_back(n_sum / steps);
  out.block_flops.push_back(blk_flops);
  out.flops = blk_flops + static_cast<double>(steps) * (embed_ * 2 + classes_ * hidden_);
  out.loglik_value = -out.nll.value();
  return out;
}

// ---------------------------------------------------------------------------
// factory + task binding

std::unique_ptr<Model> make_model(const ModelSpec& spec, uint64_t init_seed) {
  if (spec.kind == "residual_stack")
    return std::make_unique<ResidualStackModel>(spec, init_seed);
  if (spec.kind == "grid") return std::make_unique<GridModel>(spec, init_seed);
  if (spec.kind == "rnn") return std::make_unique<AdaptiveRnnModel>(spec, init_seed);
  throw std::invalid_argument("make_model: unknown model kind '" + spec.kind + "'");
}

std::unique_ptr<Task> make_task_for(const ModelSpec& spec) {
  std::unique_ptr<Task> task;
  if (spec.kind == "residual_stack")
    task = std::make_unique<MixtureTask>(spec.get("input_dim", 8));
  else if (spec.kind == "grid")
    task = std::make_unique<QuadrantTask>(spec.get("height", 16), spec.get("width", 16));
  else if (spec.kind == "rnn")
    task = std::make_unique<ParityTask>();
  else
    throw std::invalid_argument("make_task_for: unknown model kind '" + spec.kind + "'");
  const int classes = spec.get("classes", task->classes());
  if (classes != task->classes())
    throw std::invalid_argument("make_task_for: model declares " + std::to_string(classes) +
                                " classes but task '" + task->name() + "' has " +
                                std::to_string(task->classes()));
  return task;
}

}  // namespace pact
