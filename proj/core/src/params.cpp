#include "pact/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pact {

int ParamStore::add(std::string name, ad::Shape shape, std::vector<double> value, bool is_head) {
  if (ad::numel(shape) != static_cast<int64_t>(value.size()))
    throw std::invalid_argument("ParamStore::add: '" + name + "' shape " +
                                ad::shape_str(shape) + " does not match " +
                                std::to_string(value.size()) + " values");
  total_ += value.size();
  entries_.push_back(Entry{std::move(name), std::move(shape), std::move(value), is_head});
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> ParamStore::flat() const {
  std::vector<double> out;
  out.reserve(total_);
  for (const auto& e : entries_) out.insert(out.end(), e.value.begin(), e.value.end());
  return out;
}

void ParamStore::load_flat(std::span<const double> values) {
  if (values.size() != total_)
    throw std::invalid_argument("ParamStore::load_flat: expected " + std::to_string(total_) +
                                " values, got " + std::to_string(values.size()));
  size_t off = 0;
  for (auto& e : entries_) {
    std::copy(values.begin() + off, values.begin() + off + e.value.size(), e.value.begin());
    off += e.value.size();
  }
}

BoundParams bind(ad::Tape& tape, const ParamStore& store) {
  BoundParams bound;
  bound.leaves.reserve(store.array_count());
  for (const auto& e : store.entries()) bound.leaves.push_back(tape.leaf(e.shape, e.value));
  return bound;
}

std::vector<double> grads_flat(const ParamStore& store, const BoundParams& bound) {
  std::vector<double> out;
  out.reserve(store.total_size());
  for (const auto& leaf : bound.leaves) {
    const auto& g = leaf.grad();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

std::vector<double> init_fan_in(const ad::Shape& shape, int fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = bound * (2.0 * rng.next_uniform() - 1.0);
  return v;
}

}  // namespace pact
