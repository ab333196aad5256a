// Copyright 2026 The GBH Detector Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "gbh/core/tensor.hpp"

namespace gbh {

struct GradCheckOptions {
  double eps = 1e-4;
  // Elements probed per tensor; 0 probes every element.
  std::size_t max_elements_per_tensor = 0;
  // Tensors probed, drawn at random; 0 probes every tensor.
  std::size_t max_tensors = 0;
  std::uint64_t seed = 0;
  // Five-point stencil, truncation error O(eps^4) instead of O(eps^2).
  bool five_point = false;
};

struct GradCheckResult {
  double max_error = 0;
  std::vector<double> errors;  // one per probed element

  std::size_t count_above(double tol) const {
    return static_cast<std::size_t>(
        std::count_if(errors.begin(), errors.end(), [tol](double e) { return e >= tol; }));
  }
};

namespace detail {

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t limit,
                                              std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (limit != 0 && limit < n) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

template <typename T>
std::vector<std::vector<T>> analytic_grads(const std::function<Tensor<T>()>& f,
                                           std::vector<Tensor<T>>& wrt) {
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape<T> tape;
  Tensor<T> loss;
  {
    TapeScope<T> scope(tape);
    loss = f();
  }
  tape.backward(loss);
  std::vector<std::vector<T>> out;
  for (auto& t : wrt) {
    auto g = t.grad();
    out.emplace_back(g.begin(), g.end());
  }
  return out;
}

// Evaluated entirely in T; only the final quotient is rounded to double.
template <typename T>
double numeric_derivative(const std::function<Tensor<T>()>& f, Tensor<T>& t, std::size_t i,
                          const GradCheckOptions& opt) {
  NoGradScope<T> no_grad;
  const T saved = t[i];
  const T h = static_cast<T>(opt.eps);
  auto at = [&](T offset) {
    t[i] = saved + offset;
    return f().item();
  };
  T d;
  if (opt.five_point) {
    d = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
  } else {
    d = (at(h) - at(-h)) / (2 * h);
  }
  t[i] = saved;
  return static_cast<double>(d);
}

}  // namespace detail

struct GradProbe {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

// Chooses probed elements per the sampling options.
inline std::vector<GradProbe> sample_probes(const std::vector<std::size_t>& sizes,
                                            const GradCheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::vector<GradProbe> out;
  for (std::size_t t : detail::probe_indices(sizes.size(), opt.max_tensors, rng)) {
    for (std::size_t i : detail::probe_indices(sizes[t], opt.max_elements_per_tensor, rng)) {
      out.push_back({t, i});
    }
  }
  return out;
}

template <typename T>
std::vector<std::size_t> tensor_sizes(const std::vector<Tensor<T>>& ts) {
  std::vector<std::size_t> out;
  for (const auto& t : ts) out.push_back(t.numel());
  return out;
}

template <typename T>
std::vector<std::vector<T>> analytic_gradients(const std::function<Tensor<T>()>& f,
                                               std::vector<Tensor<T>> wrt) {
  return detail::analytic_grads(f, wrt);
}

template <typename T>
std::vector<double> numeric_gradients(const std::function<Tensor<T>()>& f,
                                      std::vector<Tensor<T>> wrt,
                                      const std::vector<GradProbe>& probes,
                                      const GradCheckOptions& opt) {
  std::vector<double> out;
  for (const auto& p : probes) out.push_back(detail::numeric_derivative(f, wrt.at(p.tensor), p.index, opt));
  return out;
}

template <typename A>
GradCheckResult compare_gradients(const std::vector<std::vector<A>>& analytic,
                                  const std::vector<GradProbe>& probes,
                                  const std::vector<double>& numeric) {
  if (probes.size() != numeric.size()) throw ContractError("grad check: probe count mismatch");
  GradCheckResult r;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const double a = static_cast<double>(analytic.at(probes[k].tensor).at(probes[k].index));
    const double e = detail::rel_error(a, numeric[k]);
    r.errors.push_back(e);
    r.max_error = std::max(r.max_error, e);
  }
  return r;
}

namespace detail {

// Analytic gradients from `f_a` against numeric ones from its twin `f_n`.
template <typename A, typename N>
GradCheckResult grad_check_pair(const std::function<Tensor<A>()>& f_a, std::vector<Tensor<A>> wrt_a,
                                const std::function<Tensor<N>()>& f_n, std::vector<Tensor<N>> wrt_n,
                                const GradCheckOptions& opt) {
  if (tensor_sizes(wrt_a) != tensor_sizes(wrt_n)) {
    throw ContractError("grad check: tensor lists differ");
  }
  auto analytic = analytic_grads(f_a, wrt_a);
  const auto probes = sample_probes(tensor_sizes(wrt_n), opt);
  return compare_gradients(analytic, probes, numeric_gradients(f_n, wrt_n, probes, opt));
}

}  // namespace detail

// Max over probed elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// `f` reads the tensors in `wrt` (perturbed in place) and returns a scalar.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> wrt,
                         const GradCheckOptions& opt = {}) {
  return detail::grad_check_pair<T, T>(f, wrt, f, wrt, opt).max_error;
}

// Single-input convenience form: f(x) -> scalar.
template <typename T>
double finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                         double eps) {
  GradCheckOptions opt;
  opt.eps = eps;
  return finite_diff_check<T>([&] { return f(x); }, {x}, opt);
}

// Checks the analytic gradient of `f_a` against finite differences of a
// twin `f_n` evaluated in a wider type (e.g. float against double, or double
// against long double). `wrt_a[k]` and `wrt_n[k]` must hold the same values.
template <typename A, typename N>
GradCheckResult grad_check_mixed(const std::function<Tensor<A>()>& f_a, std::vector<Tensor<A>> wrt_a,
                                 const std::function<Tensor<N>()>& f_n, std::vector<Tensor<N>> wrt_n,
                                 const GradCheckOptions& opt = {}) {
  return detail::grad_check_pair<A, N>(f_a, std::move(wrt_a), f_n, std::move(wrt_n), opt);
}

inline double finite_diff_check_mixed(const std::function<Tensor<float>()>& f_single,
                                      std::vector<Tensor<float>> wrt_single,
                                      const std::function<Tensor<double>()>& f_double,
                                      std::vector<Tensor<double>> wrt_double,
                                      const GradCheckOptions& opt = {}) {
  return grad_check_mixed<float, double>(f_single, std::move(wrt_single), f_double,
                                         std::move(wrt_double), opt)
      .max_error;
}

}  // namespace gbh
