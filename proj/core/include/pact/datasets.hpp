#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pact/rng.hpp"

namespace pact {

// One supervised example. Vector/grid tasks fill `features` and `label`;
// the sequence task fills `sequence` and per-timestep `targets`.
struct Example {
  std::vector<double> features;
  int label = 0;
  std::vector<int> sequence;
  std::vector<int> targets;
};

// Synthetic task generated on the fly; example i is a pure function of
// (task seed, split, i).
class Task {
 public:
  virtual ~Task() = default;
  virtual Example sample(const RngStream& stream) const = 0;
  virtual int classes() const = 0;
  virtual std::string name() const = 0;

  Example example(uint64_t seed, const std::string& split, uint64_t index) const {
    return sample(RngStream::root(seed).derive(split).derive(index));
  }
};

// 4-class Gaussian mixture in `dim` dimensions. Two classes sit on a wide
// margin along axis 0 and two on a narrow margin along axis 1, so part of
// the data is noticeably harder to separate.
class MixtureTask : public Task {
 public:
  explicit MixtureTask(int dim = 8) : dim_(dim) {}
  Example sample(const RngStream& stream) const override;
  int classes() const override { return 4; }
  std::string name() const override { return "mixture"; }
  int dim() const { return dim_; }

 private:
  int dim_;
};

// Locate-the-pattern task: a small cross is placed in one of the four
// quadrants of a noisy height x width image; the label is the quadrant.
class QuadrantTask : public Task {
 public:
  QuadrantTask(int height = 16, int width = 16) : height_(height), width_(width) {}
  Example sample(const RngStream& stream) const override;
  int classes() const override { return 4; }
  std::string name() const override { return "quadrant"; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  int height_;
  int width_;
};

// Running-parity task over random bit sequences of length min_len..max_len;
// the target at timestep t is the parity of bits 1..t.
class ParityTask : public Task {
 public:
  ParityTask(int min_len = 8, int max_len = 16) : min_len_(min_len), max_len_(max_len) {}
  Example sample(const RngStream& stream) const override;
  int classes() const override { return 2; }
  std::string name() const override { return "parity"; }

 private:
  int min_len_;
  int max_len_;
};

double sample_normal(RngStream& rng);

std::unique_ptr<Task> make_task(const std::string& model_kind, int dim, int height, int width);

}  // namespace pact
