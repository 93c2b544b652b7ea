#pragma once

#include <functional>
#include <string>
#include <vector>

#include "setagg/tape.hpp"

namespace setagg {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  int n_checked = 0;
  int n_skipped = 0;  // coordinates whose +/- eps evaluations crossed a kink
  std::vector<std::pair<std::string, std::size_t>> skipped;

  bool pass(double tol) const { return n_checked > 0 && max_rel_err < tol; }
};

// Central-difference check of reverse-mode gradients. `build` must construct
// the scalar loss on the given tape, reading every parameter it uses from the
// supplied store. Coordinates whose perturbed forward passes take different
// branch decisions (kink crossings, arg-min flips) are skipped and reported
// rather than compared, since the finite difference straddles a non-smooth
// point there.
inline GradCheckReport grad_check(
    const std::function<NodeId(Tape&, const ParamStore&)>& build, ParamStore params,
    double eps = 1e-5) {
  GradCheckReport rep;
  GradMap grads;
  {
    Tape tape;
    NodeId loss = build(tape, params);
    grads = tape.backward(loss);
  }
  auto eval = [&](double* slot, double delta, std::uint64_t* sig) {
    double saved = *slot;
    *slot = saved + delta;
    Tape tape;
    NodeId loss = build(tape, params);
    double f = tape.value(loss).v[0];
    *sig = tape.branch_signature();
    *slot = saved;
    return f;
  };
  for (auto& entry : params.entries) {
    const Tensor& g = grads.at(entry.name);
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      std::uint64_t sig_hi = 0, sig_lo = 0;
      double f_hi = eval(&entry.value.v[i], eps, &sig_hi);
      double f_lo = eval(&entry.value.v[i], -eps, &sig_lo);
      if (sig_hi != sig_lo) {
        ++rep.n_skipped;
        rep.skipped.emplace_back(entry.name, i);
        continue;
      }
      double fd = (f_hi - f_lo) / (2.0 * eps);
      double ad = g.v[i];
      double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      ++rep.n_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = entry.name;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

}  // namespace setagg
