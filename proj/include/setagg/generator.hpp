#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "setagg/data.hpp"

namespace setagg {

enum class GeneratorKind { Mnl, MixtureMnl };

// Synthetic choice-data law: items are i.i.d. standard normal feature vectors;
// the chooser draws a mixture component per example (a single component for
// kind=mnl) and picks an item with probability proportional to
// exp(<theta, x> / temperature).
struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::Mnl;
  int d = 0;
  int m = 0;
  int set_size_min = 1;
  int set_size_max = 1;
  double temperature = 1.0;
  struct Component {
    double weight = 1.0;
    std::vector<double> theta;
  };
  std::vector<Component> components;
  std::uint64_t seed = 0;

  void validate() const {
    if (d < 1) throw ConfigError("generator: d must be >= 1");
    if (m < 1) throw ConfigError("generator: m must be >= 1");
    if (set_size_min < 1 || set_size_min > set_size_max)
      throw ConfigError("generator: need 1 <= set_size_min <= set_size_max");
    if (!(temperature > 0.0)) throw ConfigError("generator: temperature must be > 0");
    if (components.empty()) throw ConfigError("generator: at least one component required");
    if (kind == GeneratorKind::Mnl && components.size() != 1)
      throw ConfigError("generator: kind=mnl takes exactly one component");
    double wsum = 0.0;
    for (const Component& c : components) {
      if (!(c.weight > 0.0)) throw ConfigError("generator: component weights must be positive");
      if (static_cast<int>(c.theta.size()) != d)
        throw ConfigError("generator: component theta length != d");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
      throw ConfigError("generator: component weights must sum to 1");
  }
};

namespace detail {

inline std::vector<double> softmax_scores(const GeneratorSpec& spec,
                                          const std::vector<double>& theta, const Tensor& items) {
  int n = items.rows();
  std::vector<double> s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < items.cols(); ++j) acc += theta[static_cast<std::size_t>(j)] * items.at(i, j);
    s[static_cast<std::size_t>(i)] = acc / spec.temperature;
  }
  double m = s[0];
  for (double e : s) m = std::max(m, e);
  double z = 0.0;
  for (double& e : s) {
    e = std::exp(e - m);
    z += e;
  }
  for (double& e : s) e /= z;
  return s;
}

}  // namespace detail

// Exact conditional choice probabilities of every item in `items` under the
// generative law (weight-averaged softmax across components).
inline std::vector<double> analytic_choice_probs(const GeneratorSpec& spec, const Tensor& items) {
  std::vector<double> p(static_cast<std::size_t>(items.rows()), 0.0);
  for (const auto& comp : spec.components) {
    std::vector<double> q = detail::softmax_scores(spec, comp.theta, items);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += comp.weight * q[i];
  }
  return p;
}

// Draws a chosen index for a fixed item set, consuming component and choice
// variates from `rng` in a fixed order.
inline int sample_choice(const GeneratorSpec& spec, const Tensor& items, Rng& rng) {
  std::size_t comp = 0;
  if (spec.components.size() > 1) {
    double u = rng.uniform(), acc = 0.0;
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
      acc += spec.components[k].weight;
      if (u < acc || k + 1 == spec.components.size()) {
        comp = k;
        break;
      }
    }
  }
  std::vector<double> p = detail::softmax_scores(spec, spec.components[comp].theta, items);
  double u = rng.uniform(), acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

inline Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  ds.d = spec.d;
  ds.provenance = std::string("generate:") +
                  (spec.kind == GeneratorKind::Mnl ? "mnl" : "mixture_mnl") +
                  ":seed=" + std::to_string(spec.seed);
  ds.examples.reserve(static_cast<std::size_t>(spec.m));
  for (int e = 0; e < spec.m; ++e) {
    int n = static_cast<int>(rng.uniform_int(spec.set_size_min, spec.set_size_max));
    ChoiceExample ex;
    ex.items = Tensor::zeros({n, spec.d});
    for (double& x : ex.items.v) x = rng.normal();
    ex.chosen = sample_choice(spec, ex.items, rng);
    ex.group = "g" + std::to_string(e);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// Maximal achievable expected top-1 accuracy on `ds` under the true law: for
// each example, predict the item with the largest exact posterior probability
// and credit that probability. Exact enumeration, no sampling.
inline double bayes_optimal_rate(const GeneratorSpec& spec, const Dataset& ds) {
  if (ds.d != spec.d)
    throw ContractError("bayes_optimal_rate: dataset dimension " + std::to_string(ds.d) +
                        " does not match spec dimension " + std::to_string(spec.d));
  if (ds.examples.empty()) throw ContractError("bayes_optimal_rate: empty dataset");
  double acc = 0.0;
  for (const ChoiceExample& ex : ds.examples) {
    std::vector<double> p = analytic_choice_probs(spec, ex.items);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    acc += p[best];
  }
  return acc / static_cast<double>(ds.examples.size());
}

}  // namespace setagg
