#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "setagg/common.hpp"
#include "setagg/tensor.hpp"

namespace setagg {

// Constructive verification that small sigmoid circuits can realize
// "indicator-like" utilities over an enumerable item universe: given two
// linear score functions that separate (s from t) and (x from s \ {x}), five
// units suffice to approximate any target utility triple
//   (value on x, value on s \ {x}, value on t)
// uniformly over the universe, with error vanishing as the scale M grows.

struct ItemUniverse {
  std::vector<std::vector<double>> items;

  int d() const { return items.empty() ? 0 : static_cast<int>(items.front().size()); }
  int size() const { return static_cast<int>(items.size()); }

  void validate() const {
    if (items.empty()) throw ContractError("universe: no items");
    if (items.size() > 12) throw ContractError("universe: enumeration bound is 12 items");
    for (const auto& it : items)
      if (static_cast<int>(it.size()) != d())
        throw ContractError("universe: inconsistent item dimensions");
    for (std::size_t i = 0; i < items.size(); ++i)
      for (std::size_t j = i + 1; j < items.size(); ++j)
        if (items[i] == items[j]) throw ContractError("universe: duplicate items");
  }
};

struct SetTriple {
  int x = 0;               // distinguished item, member of s
  std::vector<int> s;      // contains x
  std::vector<int> t;      // disjoint from s

  void validate(const ItemUniverse& u) const {
    auto in_range = [&](int i) { return i >= 0 && i < u.size(); };
    if (!in_range(x)) throw ContractError("triple: x out of range");
    if (s.empty()) throw ContractError("triple: s must be nonempty");
    if (t.empty()) throw ContractError("triple: t must be nonempty");
    bool x_in_s = false;
    for (int i : s) {
      if (!in_range(i)) throw ContractError("triple: s index out of range");
      x_in_s = x_in_s || i == x;
    }
    if (!x_in_s) throw ContractError("triple: x must be a member of s");
    for (int i : t) {
      if (!in_range(i)) throw ContractError("triple: t index out of range");
      for (int j : s)
        if (i == j) throw ContractError("triple: s and t must be disjoint");
    }
  }

  std::vector<int> s_without_x() const {
    std::vector<int> rest;
    for (int i : s)
      if (i != x) rest.push_back(i);
    return rest;
  }
};

struct LinearScore {
  std::vector<double> w;

  double operator()(const std::vector<double>& item) const {
    require(w.size() == item.size(), "linear score: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * item[i];
    return acc;
  }
};

struct SeparationResult {
  bool separates = false;
  double margin = 0.0;  // min over A minus max over B; may be <= 0
};

inline SeparationResult check_separation(const ItemUniverse& u, const LinearScore& b,
                                         const std::vector<int>& A, const std::vector<int>& B) {
  require(!A.empty() && !B.empty(), "check_separation: A and B must be nonempty");
  for (int i : A)
    for (int j : B)
      if (i == j) throw ContractError("check_separation: A and B overlap at index " +
                                      std::to_string(i));
  double min_a = std::numeric_limits<double>::infinity();
  double max_b = -std::numeric_limits<double>::infinity();
  for (int i : A) min_a = std::min(min_a, b(u.items[static_cast<std::size_t>(i)]));
  for (int j : B) max_b = std::max(max_b, b(u.items[static_cast<std::size_t>(j)]));
  SeparationResult res;
  res.margin = min_a - max_b;
  res.separates = res.margin > 0.0;
  return res;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One sigmoid unit over two inputs: sigma(a0*in0 + a1*in1 + beta)
struct SigmoidUnit {
  double a0 = 0.0, a1 = 0.0, beta = 0.0;
  double operator()(double in0, double in1) const { return sigmoid(a0 * in0 + a1 * in1 + beta); }
};

struct ThresholdFit {
  double alpha = 0.0;  // slope on the separating value
  double beta = 0.0;
};

// Place a sigmoid so the hi values map to >= sigma(M/2) and the lo values to
// <= sigma(-M/2): slope M normalized by the margin, centered at the midpoint.
inline ThresholdFit fit_threshold_unit(const std::vector<double>& hi,
                                       const std::vector<double>& lo, double M) {
  require(!hi.empty() && !lo.empty(), "fit_threshold_unit: hi and lo must be nonempty");
  require(M > 0, "fit_threshold_unit: M must be positive");
  double min_hi = *std::min_element(hi.begin(), hi.end());
  double max_lo = *std::max_element(lo.begin(), lo.end());
  double margin = min_hi - max_lo;
  if (!(margin > 0))
    throw ContractError("fit_threshold_unit: hi/lo not separated (margin " +
                        std::to_string(margin) + ")");
  ThresholdFit fit;
  fit.alpha = M / margin;
  fit.beta = -fit.alpha * 0.5 * (min_hi + max_lo);
  return fit;
}

struct OutputSolve {
  double alpha1 = 0.0, alpha2 = 0.0, beta = 0.0;
};

// Triangular solve for the affine readout over the basis values
// (1,0,0), (1,1,0), (1,1,1) evaluated on (x1, x2, x3):
//   alpha1 + alpha2 + beta = u1;  alpha2 + beta = u2;  beta = u3.
inline OutputSolve solve_output_layer(double u1, double u2, double u3) {
  OutputSolve s;
  s.alpha1 = u1 - u2;
  s.alpha2 = u2 - u3;
  s.beta = u3;
  return s;
}

// Five-unit circuit. Inputs are the two linear scores (b, b'); r1 and r2
// threshold them, r3 thresholds r1 + r2 (the AND), r4 passes r1 through a
// near-identity sigmoid of slope 1/M, and the affine output recombines r3 and
// r4. The 4M rescale of r4 (with its -2M offset folded into the bias) inverts
// sigma(z/M) ~ 1/2 + z/(4M) so the output layer sees r1 itself.
struct TripleBasisCircuit {
  LinearScore b, bp;
  SigmoidUnit r1, r2, r3, r4;
  double out_a3 = 0.0, out_a4 = 0.0, out_beta = 0.0;  // affine output on (r3, r4)
  double M = 0.0;
  double u1 = 0.0, u2 = 0.0, u3 = 0.0;  // target utilities this circuit realizes

  double value(const std::vector<double>& item) const {
    double vb = b(item), vbp = bp(item);
    double o1 = r1(vb, vbp);
    double o2 = r2(vb, vbp);
    double o3 = r3(o1, o2);
    double o4 = r4(o1, o2);
    return out_a3 * o3 + out_a4 * o4 + out_beta;
  }

  double r1_value(const std::vector<double>& item) const { return r1(b(item), bp(item)); }
  double r3_value(const std::vector<double>& item) const {
    double o1 = r1(b(item), bp(item)), o2 = r2(b(item), bp(item));
    return r3(o1, o2);
  }
  // the rescaled identity branch: approximately equal to r1's output
  double r4_rescaled(const std::vector<double>& item) const {
    double o1 = r1(b(item), bp(item)), o2 = r2(b(item), bp(item));
    return 4.0 * M * (r4(o1, o2) - 0.5);
  }
};

// Build one circuit per target-utility row; all rows share units r1..r4 and
// differ only in the affine output.
inline std::vector<TripleBasisCircuit> build_circuit(const ItemUniverse& u, const LinearScore& b,
                                                     const LinearScore& bp,
                                                     const SetTriple& triple,
                                                     const std::vector<std::array<double, 3>>& U,
                                                     double M) {
  u.validate();
  triple.validate(u);
  require(M > 0, "build_circuit: M must be positive");
  require(!U.empty(), "build_circuit: at least one target-utility row required");

  std::vector<int> rest = triple.s_without_x();
  if (rest.empty())
    throw ContractError("build_circuit: s must contain an item besides x");

  SeparationResult sep_b = check_separation(u, b, triple.s, triple.t);
  if (!sep_b.separates)
    throw ContractError("build_circuit: premise failed: b does not separate s from t (margin " +
                        std::to_string(sep_b.margin) + ")");
  SeparationResult sep_bp = check_separation(u, bp, {triple.x}, rest);
  if (!sep_bp.separates)
    throw ContractError(
        "build_circuit: premise failed: b' does not separate x from s \\ {x} (margin " +
        std::to_string(sep_bp.margin) + ")");

  auto values = [&](const LinearScore& f, const std::vector<int>& idx) {
    std::vector<double> v;
    for (int i : idx) v.push_back(f(u.items[static_cast<std::size_t>(i)]));
    return v;
  };

  // r1: high on s, low on t (driven by b)
  ThresholdFit f1 = fit_threshold_unit(values(b, triple.s), values(b, triple.t), M);
  SigmoidUnit r1{f1.alpha, 0.0, f1.beta};
  // r2: high on x, low on s \ {x} (driven by b')
  ThresholdFit f2 = fit_threshold_unit(values(bp, {triple.x}), values(bp, rest), M);
  SigmoidUnit r2{0.0, f2.alpha, f2.beta};

  // r3 thresholds the computed r1 + r2 sums: high at x, low elsewhere in s and t
  auto unit_sum = [&](int i) {
    const auto& item = u.items[static_cast<std::size_t>(i)];
    double vb = b(item), vbp = bp(item);
    return r1(vb, vbp) + r2(vb, vbp);
  };
  std::vector<double> hi3 = {unit_sum(triple.x)};
  std::vector<double> lo3;
  for (int i : rest) lo3.push_back(unit_sum(i));
  for (int i : triple.t) lo3.push_back(unit_sum(i));
  ThresholdFit f3;
  try {
    f3 = fit_threshold_unit(hi3, lo3, M);
  } catch (const ContractError& e) {
    throw ContractError(std::string("build_circuit: r3 threshold could not be fit: ") + e.what());
  }
  SigmoidUnit r3{f3.alpha, f3.alpha, f3.beta};
  SigmoidUnit r4{1.0 / M, 0.0, 0.0};

  std::vector<TripleBasisCircuit> circuits;
  for (const auto& row : U) {
    TripleBasisCircuit c;
    c.b = b;
    c.bp = bp;
    c.r1 = r1;
    c.r2 = r2;
    c.r3 = r3;
    c.r4 = r4;
    c.M = M;
    c.u1 = row[0];
    c.u2 = row[1];
    c.u3 = row[2];
    OutputSolve sol = solve_output_layer(row[0], row[1], row[2]);
    c.out_a3 = sol.alpha1;
    c.out_a4 = 4.0 * M * sol.alpha2;
    c.out_beta = sol.beta - 2.0 * M * sol.alpha2;
    circuits.push_back(std::move(c));
  }
  return circuits;
}

struct BasisReport {
  double r3_deviation = 0.0;         // worst |r3 - 1{item == x}| over s and t
  double r4_deviation = 0.0;         // worst |rescaled r4 - 1{item in s}| over s and t
  double max_impl_error = 0.0;       // worst |circuit value - target utility| over s and t
  double max_indifference_gap = 0.0; // worst aggregated-score spread on subsets without x
  double eps = 0.0;                  // tolerance the gap was compared against
  bool indifference_ok = true;       // max_indifference_gap <= eps
  bool choice_correct = true;        // x ranks strictly first on every subset of s containing it
  double min_choice_margin = std::numeric_limits<double>::infinity();
  std::size_t n_qualifying = 0, n_indifference = 0, n_mixed = 0;
  bool mixed_choice_correct = true;  // informational: x also first when t items join

  nlohmann::json to_json() const {
    return {{"r3_deviation", r3_deviation},
            {"r4_deviation", r4_deviation},
            {"max_impl_error", max_impl_error},
            {"max_indifference_gap", max_indifference_gap},
            {"eps", eps},
            {"indifference_ok", indifference_ok},
            {"choice_correct", choice_correct},
            {"min_choice_margin", min_choice_margin},
            {"n_qualifying", n_qualifying},
            {"n_indifference", n_indifference},
            {"n_mixed", n_mixed},
            {"mixed_choice_correct", mixed_choice_correct}};
  }
};

// Enumerate every choice subset of the universe and check the lemma-level
// behavior of the aggregated circuit scores (sum over circuits):
//   - subsets of s containing x: x must rank strictly first;
//   - subsets without x: near-indifference, score spread <= eps is recorded;
//   - subsets containing x plus t items: outside the lemma, reported only.
inline BasisReport verify_isolation(const std::vector<TripleBasisCircuit>& circuits,
                                    const ItemUniverse& u, const SetTriple& triple, double eps) {
  u.validate();
  triple.validate(u);
  require(!circuits.empty(), "verify_isolation: no circuits");

  BasisReport rep;
  int n = u.size();

  std::vector<double> aggregated(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (const auto& c : circuits) aggregated[static_cast<std::size_t>(i)] += c.value(u.items[static_cast<std::size_t>(i)]);

  std::vector<char> in_s(static_cast<std::size_t>(n), 0), in_t(static_cast<std::size_t>(n), 0);
  for (int i : triple.s) in_s[static_cast<std::size_t>(i)] = 1;
  for (int i : triple.t) in_t[static_cast<std::size_t>(i)] = 1;

  // unit/basis deviations and implementation error over the triple's items
  for (int i = 0; i < n; ++i) {
    if (!in_s[static_cast<std::size_t>(i)] && !in_t[static_cast<std::size_t>(i)]) continue;
    const auto& item = u.items[static_cast<std::size_t>(i)];
    double target_r3 = i == triple.x ? 1.0 : 0.0;
    double target_r4 = in_s[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    const TripleBasisCircuit& c0 = circuits.front();
    rep.r3_deviation = std::max(rep.r3_deviation, std::abs(c0.r3_value(item) - target_r3));
    rep.r4_deviation = std::max(rep.r4_deviation, std::abs(c0.r4_rescaled(item) - target_r4));
    for (const auto& c : circuits) {
      double target = i == triple.x ? c.u1 : in_s[static_cast<std::size_t>(i)] ? c.u2 : c.u3;
      rep.max_impl_error = std::max(rep.max_impl_error, std::abs(c.value(item) - target));
    }
  }

  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) members.push_back(i);

    bool has_x = (mask & (1 << triple.x)) != 0;
    if (!has_x) {
      ++rep.n_indifference;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int i : members) {
        lo = std::min(lo, aggregated[static_cast<std::size_t>(i)]);
        hi = std::max(hi, aggregated[static_cast<std::size_t>(i)]);
      }
      rep.max_indifference_gap = std::max(rep.max_indifference_gap, hi - lo);
      continue;
    }

    bool inside_s = true;
    for (int i : members) inside_s = inside_s && in_s[static_cast<std::size_t>(i)];
    double best_other = -std::numeric_limits<double>::infinity();
    for (int i : members)
      if (i != triple.x)
        best_other = std::max(best_other, aggregated[static_cast<std::size_t>(i)]);
    double margin = aggregated[static_cast<std::size_t>(triple.x)] - best_other;

    if (inside_s) {
      ++rep.n_qualifying;
      if (members.size() > 1) {
        rep.choice_correct = rep.choice_correct && margin > 0.0;
        rep.min_choice_margin = std::min(rep.min_choice_margin, margin);
      }
    } else {
      ++rep.n_mixed;
      if (members.size() > 1) rep.mixed_choice_correct = rep.mixed_choice_correct && margin > 0.0;
    }
  }
  rep.eps = eps;
  rep.indifference_ok = rep.max_indifference_gap <= eps;
  return rep;
}

struct IiaViolationDemo {
  ItemUniverse universe;  // items: a, b, marker
  int choice_small = -1;  // argmax over {a, b}
  int choice_large = -1;  // argmax over {a, b, marker}
  double margin_small = 0.0, margin_large = 0.0;
  bool violated = false;  // both winners lie in {a, b} and differ
};

// Constructive preference reversal from circuits alone. Three circuit
// families over items a, b and a marker item:
//   f1 ranks a over b, f2 ranks b over a (marker deeply negative in both);
//   v detects the marker (1 on marker, 0 on a and b).
// The additive set coupling W(s') = sum of v over members interpolates the
// item scores g(x, s') = (1 - W) f1(x) + W f2(x): without the marker the
// choice follows f1 (a wins); adding the marker flips it to f2 (b wins),
// while the marker itself never wins. Both winners belong to the smaller
// set, so the choice reversal is genuine.
inline IiaViolationDemo planted_iia_violation(double M) {
  IiaViolationDemo demo;
  demo.universe.items = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 2.0}};  // a, b, marker
  const int a = 0, bi = 1, mk = 2;

  SetTriple det;
  det.x = mk;
  det.s = {mk, a};
  det.t = {bi};
  auto v = build_circuit(demo.universe, LinearScore{{0.5, 1.0}}, LinearScore{{-0.5, 1.0}}, det,
                         {{1.0, 0.0, 0.0}}, M);

  SetTriple tri_f1;
  tri_f1.x = a;
  tri_f1.s = {a, bi};
  tri_f1.t = {mk};
  auto f1 = build_circuit(demo.universe, LinearScore{{0.0, -1.0}}, LinearScore{{1.0, 0.0}}, tri_f1,
                          {{1.0, 0.0, -10.0}}, M);

  SetTriple tri_f2;
  tri_f2.x = bi;
  tri_f2.s = {a, bi};
  tri_f2.t = {mk};
  auto f2 = build_circuit(demo.universe, LinearScore{{0.0, -1.0}}, LinearScore{{-1.0, 0.0}},
                          tri_f2, {{1.0, 0.0, -10.0}}, M);

  auto score = [&](int item, const std::vector<int>& members) {
    double w = 0.0;
    for (int i : members) w += v.front().value(demo.universe.items[static_cast<std::size_t>(i)]);
    const auto& feat = demo.universe.items[static_cast<std::size_t>(item)];
    return (1.0 - w) * f1.front().value(feat) + w * f2.front().value(feat);
  };
  auto choose = [&](const std::vector<int>& members, double& margin) {
    int best = members.front();
    double best_score = score(best, members), second = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < members.size(); ++i) {
      double sc = score(members[i], members);
      if (sc > best_score) {
        second = best_score;
        best_score = sc;
        best = members[i];
      } else {
        second = std::max(second, sc);
      }
    }
    margin = best_score - second;
    return best;
  };

  demo.choice_small = choose({a, bi}, demo.margin_small);
  demo.choice_large = choose({a, bi, mk}, demo.margin_large);
  demo.violated = demo.choice_small != demo.choice_large && demo.choice_small != mk &&
                  demo.choice_large != mk;
  return demo;
}

}  // namespace setagg
