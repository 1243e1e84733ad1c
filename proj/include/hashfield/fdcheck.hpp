// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <set>

#include "hashfield/params.hpp"
#include "hashfield/rng.hpp"

namespace hashfield {

// A deterministic loss fixture exposed in both precisions. The double path is
// the finite-difference reference; the requested scalar path supplies the
// analytic gradient under test. Checking the float pipeline against double
// differences avoids drowning small gradients in float quantization noise.
struct FdFixture {
  std::string name;
  FieldConfig field;
  ParamLayout layout;
  Eigen::VectorXd params0;
  std::function<double(const Eigen::VectorXd&)> loss_d;
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)> grad_d;
  std::function<double(const Eigen::VectorXf&)> loss_f;
  std::function<double(const Eigen::VectorXf&, Eigen::VectorXf&)> grad_f;
};

struct InvalidFixtureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FdReport {
  double max_rel_error = 0;  // over entries with |g| > 1e-6
  double max_abs_error = 0;  // over the remaining entries
  std::string worst_slice;
  std::int64_t worst_index = -1;
  std::int64_t checked = 0;
  double tolerance = 0;
  bool pass = false;

  double max_error() const { return std::max(max_rel_error, max_abs_error); }
};

// Central finite differences against the analytic gradient. Checks every
// trainable parameter, or a seeded subsample of max_per_slice per slice when
// that is smaller.
template <class S>
FdReport fd_check(const FdFixture& fx, double epsilon, double tolerance,
                  std::int64_t max_per_slice = 0, std::uint64_t seed = 1) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("fd_check: epsilon must be positive");
  {
    const double a = fx.loss_d(fx.params0), b = fx.loss_d(fx.params0);
    if (!std::isfinite(a)) throw InvalidFixtureError("fd_check: loss is not finite");
    if (a != b) throw InvalidFixtureError("fd_check: loss is not deterministic");
  }

  Eigen::VectorXd analytic(fx.layout.total);
  if constexpr (std::is_same_v<S, double>) {
    Eigen::VectorXd g(fx.layout.total);
    g.setZero();
    fx.grad_d(fx.params0, g);
    analytic = g;
  } else {
    Eigen::VectorXf g(fx.layout.total);
    g.setZero();
    const Eigen::VectorXf p = fx.params0.cast<float>();
    fx.grad_f(p, g);
    analytic = g.cast<double>();
  }

  FdReport rep;
  rep.tolerance = tolerance;
  Eigen::VectorXd theta = fx.params0;
  Rng rng(seed);

  for (const SliceInfo& slice : fx.layout.slices) {
    std::vector<std::int64_t> indices;
    if (max_per_slice <= 0 || slice.size <= max_per_slice) {
      indices.resize(slice.size);
      for (std::int64_t i = 0; i < slice.size; ++i) indices[i] = slice.offset + i;
    } else {
      std::set<std::int64_t> picked;
      while (std::int64_t(picked.size()) < max_per_slice)
        picked.insert(slice.offset + std::int64_t(rng.below(slice.size)));
      indices.assign(picked.begin(), picked.end());
    }
    for (const std::int64_t i : indices) {
      const double saved = theta[i];
      theta[i] = saved + epsilon;
      const double lp = fx.loss_d(theta);
      theta[i] = saved - epsilon;
      const double lm = fx.loss_d(theta);
      theta[i] = saved;
      const double fd = (lp - lm) / (2.0 * epsilon);
      const double g = analytic[i];
      const double err = std::abs(fd - g);
      ++rep.checked;
      if (std::abs(g) > 1e-6) {
        const double rel = err / std::max(std::abs(g), std::abs(fd));
        if (rel > rep.max_rel_error) {
          rep.max_rel_error = rel;
          rep.worst_slice = slice.name;
          rep.worst_index = i;
        }
      } else if (err > rep.max_abs_error) {
        rep.max_abs_error = err;
        if (err > rep.max_rel_error) {
          rep.worst_slice = slice.name;
          rep.worst_index = i;
        }
      }
    }
  }
  rep.pass = rep.max_rel_error < tolerance && rep.max_abs_error < tolerance;
  return rep;
}

}  // namespace hashfield
