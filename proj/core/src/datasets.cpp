#include "pact/datasets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pact {

double sample_normal(RngStream& rng) {
  // Box-Muller; one variate per call keeps draws addressable by index.
  const double u1 = std::max(rng.next_uniform(), 1e-300);
  const double u2 = rng.next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Example MixtureTask::sample(const RngStream& stream) const {
  RngStream rng = stream;
  Example ex;
  ex.label = static_cast<int>(rng.next_u64() % 4);
  ex.features.resize(dim_);
  for (auto& f : ex.features) f = sample_normal(rng);
  // Wide margin for classes 0/1, narrow margin for classes 2/3.
  switch (ex.label) {
    case 0: ex.features[0] += 3.5; break;
    case 1: ex.features[0] -= 3.5; break;
    case 2: ex.features[1] += 2.0; break;
    case 3: ex.features[1] -= 2.0; break;
  }
  return ex;
}

Example QuadrantTask::sample(const RngStream& stream) const {
  RngStream rng = stream;
  Example ex;
  ex.label = static_cast<int>(rng.next_u64() % 4);
  ex.features.assign(static_cast<size_t>(height_) * width_, 0.0);
  for (auto& f : ex.features) f = 0.2 * sample_normal(rng);

  const int qh = height_ / 2, qw = width_ / 2;
  const int qy = (ex.label / 2) * qh, qx = (ex.label % 2) * qw;
  // Cross centre at least one pixel away from the quadrant border.
  const int cy = qy + 1 + static_cast<int>(rng.next_u64() % std::max(1, qh - 2));
  const int cx = qx + 1 + static_cast<int>(rng.next_u64() % std::max(1, qw - 2));
  auto bump = [&](int y, int x, double v) {
    if (y >= 0 && y < height_ && x >= 0 && x < width_) ex.features[y * width_ + x] += v;
  };
  bump(cy, cx, 3.0);
  bump(cy - 1, cx, 1.8);
  bump(cy + 1, cx, 1.8);
  bump(cy, cx - 1, 1.8);
  bump(cy, cx + 1, 1.8);
  return ex;
}

Example ParityTask::sample(const RngStream& stream) const {
  RngStream rng = stream;
  Example ex;
  const int span = max_len_ - min_len_ + 1;
  const int len = min_len_ + static_cast<int>(rng.next_u64() % span);
  ex.sequence.resize(len);
  ex.targets.resize(len);
  int parity = 0;
  for (int t = 0; t < len; ++t) {
    ex.sequence[t] = static_cast<int>(rng.next_u64() & 1);
    parity ^= ex.sequence[t];
    ex.targets[t] = parity;
  }
  ex.label = parity;
  return ex;
}

std::unique_ptr<Task> make_task(const std::string& model_kind, int dim, int height, int width) {
  if (model_kind == "residual_stack") return std::make_unique<MixtureTask>(dim);
  if (model_kind == "grid") return std::make_unique<QuadrantTask>(height, width);
  if (model_kind == "rnn") return std::make_unique<ParityTask>();
  throw std::invalid_argument("make_task: unknown model kind '" + model_kind + "'");
}

}  // namespace pact
