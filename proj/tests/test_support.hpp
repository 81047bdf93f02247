#pragma once

// Shared helpers for the test suites: finite-difference oracle and small
// numeric utilities. The oracle is independent of the tape's backward pass;
// it only re-runs forward evaluations.

#include <cmath>
#include <functional>
#include <vector>

#include "pact/autodiff.hpp"
#include "pact/rng.hpp"

namespace testsupport {

// Builds a scalar function of flat leaf values. The builder receives a fresh
// tape and the flat parameter vector and must return the scalar output.
using FlatFn = std::function<double(const std::vector<double>&)>;

struct GradCheck {
  double max_rel_err = 0.0;
  size_t worst_index = 0;
};

// Central finite differences, step 1e-5. The reported residual is
// |numeric - analytic| / (max(|numeric|, |analytic|) + abs_floor / rel_tol),
// so `residual < rel_tol` is the usual two-term test
// |numeric - analytic| < rel_tol * max(...) + abs_floor with rel_tol = 1e-5
// and abs_floor = 1e-8.
inline GradCheck finite_difference(const FlatFn& f, std::vector<double> x,
                                   const std::vector<double>& analytic,
                                   double step = 1e-5) {
  constexpr double kRelTol = 1e-5;
  constexpr double kAbsFloor = 1e-8;
  GradCheck out;
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom =
        std::max(std::abs(numeric), std::abs(analytic[i])) + kAbsFloor / kRelTol;
    const double rel = std::abs(numeric - analytic[i]) / denom;
    if (rel > out.max_rel_err) {
      out.max_rel_err = rel;
      out.worst_index = i;
    }
  }
  return out;
}

inline std::vector<double> random_vector(size_t n, pact::RngStream& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.next_uniform();
  return v;
}

}  // namespace testsupport
