#pragma once

#include <span>
#include <string>
#include <vector>

#include "pact/autodiff.hpp"
#include "pact/rng.hpp"

namespace pact {

// Named, ordered parameter arrays. Body parameters and halting-head
// parameters live together but carry a tag so they can be reported or
// frozen separately. The flat layout (concatenation in registration order)
// is what the optimizers and the variance probe see.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Shape shape;
    std::vector<double> value;
    bool is_head = false;
  };

  int add(std::string name, ad::Shape shape, std::vector<double> value, bool is_head = false);

  size_t array_count() const { return entries_.size(); }
  size_t total_size() const { return total_; }
  const Entry& entry(int i) const { return entries_[i]; }
  Entry& entry(int i) { return entries_[i]; }
  const std::vector<Entry>& entries() const { return entries_; }
  int find(const std::string& name) const;  // -1 when absent

  std::vector<double> flat() const;
  void load_flat(std::span<const double> values);

 private:
  std::vector<Entry> entries_;
  size_t total_ = 0;
};

// Tape leaves for every array of a store, index-aligned with its entries.
// Rebind on every fresh tape.
struct BoundParams {
  std::vector<ad::Tensor> leaves;
  const ad::Tensor& operator[](int i) const { return leaves[i]; }
};

BoundParams bind(ad::Tape& tape, const ParamStore& store);

// Flat gradient vector (same layout as ParamStore::flat) after backward.
std::vector<double> grads_flat(const ParamStore& store, const BoundParams& bound);

// Uniform fan-in scaled initializer: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<double> init_fan_in(const ad::Shape& shape, int fan_in, RngStream& rng);

}  // namespace pact
