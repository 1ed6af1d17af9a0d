#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "prism/array.hpp"
#include "prism/common.hpp"
#include "prism/tape.hpp"

namespace prism::ad {

/// Ordered parameter dictionary. Order is the registration order and fixes
/// every serialization / update / accumulation loop in the project.
template <typename T>
struct ParamStore {
  std::vector<std::string> order;
  std::unordered_map<std::string, ArrayT<T>> values;

  void add(const std::string& name, ArrayT<T> value) {
    PRISM_CHECK(!values.count(name), "ParamStore: duplicate parameter ", name);
    order.push_back(name);
    values.emplace(name, std::move(value));
  }
  ArrayT<T>& at(const std::string& name) {
    auto it = values.find(name);
    PRISM_CHECK(it != values.end(), "ParamStore: unknown parameter ", name);
    return it->second;
  }
  const ArrayT<T>& at(const std::string& name) const {
    auto it = values.find(name);
    PRISM_CHECK(it != values.end(), "ParamStore: unknown parameter ", name);
    return it->second;
  }
  bool has(const std::string& name) const { return values.count(name) != 0; }
  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& name : order) n += values.at(name).numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& name : order) out.add(name, values.at(name).template cast<U>());
    return out;
  }
};

using Grads32 = std::unordered_map<std::string, Arr32>;
using Grads64 = std::unordered_map<std::string, Arr64>;

/// Feeds every parameter into a tape as a grad-requiring leaf.
template <typename T>
std::unordered_map<std::string, typename TapeT<T>::Id> bind_params(
    TapeT<T>& tape, const ParamStore<T>& params) {
  std::unordered_map<std::string, typename TapeT<T>::Id> ids;
  for (const auto& name : params.order)
    ids.emplace(name, tape.input(params.values.at(name), true));
  return ids;
}

/// Collects gradients for bound parameters after backward. Parameters the
/// loss never touched get zero gradients.
template <typename T>
std::unordered_map<std::string, ArrayT<T>> collect_grads(
    const TapeT<T>& tape, const ParamStore<T>& params,
    const std::unordered_map<std::string, typename TapeT<T>::Id>& ids) {
  std::unordered_map<std::string, ArrayT<T>> out;
  for (const auto& name : params.order) {
    const auto id = ids.at(name);
    out.emplace(name, tape.requires_grad(id)
                          ? safe_grad(tape, id, params.values.at(name).shape)
                          : ArrayT<T>::zeros(params.values.at(name).shape));
  }
  return out;
}

template <typename T>
ArrayT<T> safe_grad(const TapeT<T>& tape, typename TapeT<T>::Id id,
                    const std::vector<int64_t>& shape) {
  // A parameter can require grad yet stay untouched by the loss graph.
  try {
    return tape.grad(id);
  } catch (const Error&) {
    return ArrayT<T>::zeros(shape);
  }
}

struct AdamConfig {
  double lr = 5e-5;
  double weight_decay = 1e-5;  // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam with decoupled weight decay.
template <typename T>
struct AdamStateT {
  AdamConfig cfg;
  int64_t step = 0;
  std::unordered_map<std::string, ArrayT<T>> m;
  std::unordered_map<std::string, ArrayT<T>> v;

  void init(const ParamStore<T>& params) {
    for (const auto& name : params.order) {
      m.emplace(name, ArrayT<T>::zeros(params.values.at(name).shape));
      v.emplace(name, ArrayT<T>::zeros(params.values.at(name).shape));
    }
  }
};

template <typename T>
void adam_step(ParamStore<T>& params,
               const std::unordered_map<std::string, ArrayT<T>>& grads,
               AdamStateT<T>& state) {
  state.step += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (const auto& name : params.order) {
    auto git = grads.find(name);
    PRISM_CHECK(git != grads.end(), "adam_step: missing gradient for ", name);
    ArrayT<T>& p = params.values.at(name);
    const ArrayT<T>& g = git->second;
    PRISM_CHECK(g.shape == p.shape, "adam_step: gradient shape mismatch for ",
                name);
    ArrayT<T>& m = state.m.at(name);
    ArrayT<T>& v = state.v.at(name);
    for (size_t i = 0; i < p.v.size(); ++i) {
      const double gi = static_cast<double>(g.v[i]);
      const double mi = b1 * static_cast<double>(m.v[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v.v[i]) + (1.0 - b2) * gi * gi;
      m.v[i] = static_cast<T>(mi);
      v.v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      double x = static_cast<double>(p.v[i]);
      x -= state.cfg.lr * (mhat / (std::sqrt(vhat) + state.cfg.eps));
      x -= state.cfg.lr * state.cfg.weight_decay * static_cast<double>(p.v[i]);
      p.v[i] = static_cast<T>(x);
    }
  }
}

/// StepLR: multiply the base rate by gamma every step_size epochs.
inline double steplr(double base_lr, double gamma, int step_size, int epoch) {
  PRISM_CHECK(step_size > 0, "steplr: step_size must be positive");
  double lr = base_lr;
  for (int k = 0; k < epoch / step_size; ++k) lr *= gamma;
  return lr;
}

/// Central-difference gradient audit. Returns the max over all parameter
/// entries of |analytic - central| / (|central| + 1e-12).
inline double finite_diff_check(
    const std::function<double(const ParamStore<double>&)>& f,
    const ParamStore<double>& params, const Grads64& analytic, double eps) {
  PRISM_CHECK(eps > 0.0, "finite_diff_check: eps must be positive");
  ParamStore<double> work = params;
  double worst = 0.0;
  for (const auto& name : params.order) {
    const auto& g = analytic.at(name);
    auto& p = work.values.at(name);
    for (size_t i = 0; i < p.v.size(); ++i) {
      const double keep = p.v[i];
      p.v[i] = keep + eps;
      const double fp = f(work);
      p.v[i] = keep - eps;
      const double fm = f(work);
      p.v[i] = keep;
      PRISM_CHECK(std::isfinite(fp) && std::isfinite(fm),
                  "finite_diff_check: non-finite objective at ", name, "[", i,
                  "]");
      const double central = (fp - fm) / (2.0 * eps);
      const double rel =
          std::fabs(g.v[i] - central) / (std::fabs(central) + 1e-12);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace prism::ad
