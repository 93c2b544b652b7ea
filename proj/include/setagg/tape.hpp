#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "setagg/tensor.hpp"

namespace setagg {

using NodeId = int;
using GradMap = std::map<std::string, Tensor>;

enum class ParamKind {
  Weight,         // affine weight matrices / vectors; L2-penalized
  Bias,           // affine biases; not penalized
  KinkScale,      // kink coefficient c; clamped to >= 1 + 1e-6
  PowerExponent,  // power-law exponent; clamped to (0, 1]
};

// Ordered registry of named parameter tensors. Order is insertion order so
// optimizer sweeps and serialization are deterministic.
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor value;
    ParamKind kind;
  };
  std::vector<Entry> entries;

  int add(const std::string& name, Tensor value, ParamKind kind) {
    if (index_of(name) >= 0) throw ContractError("parameter already registered: " + name);
    entries.push_back({name, std::move(value), kind});
    return static_cast<int>(entries.size()) - 1;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return static_cast<int>(i);
    return -1;
  }

  Tensor& value(const std::string& name) {
    int i = index_of(name);
    if (i < 0) throw ContractError("unknown parameter: " + name);
    return entries[static_cast<std::size_t>(i)].value;
  }
  const Tensor& value(const std::string& name) const {
    return const_cast<ParamStore*>(this)->value(name);
  }
};

enum class OpKind : std::uint8_t {
  Constant,
  Param,
  MatMul,
  VecMat,
  MatVec,
  Add,
  Sub,
  AddRowVec,
  SubRowVec,
  Hadamard,
  Scale,
  Tanh,
  KinkedTanh,
  KinkedLinear,
  PowerShift,
  MeanRows,
  ColMin,
  ColMax,
  SoftmaxVec,
  BlockDot,
  SoftmaxNll,
  SumSquares,
  LinComb,
};

// Append-only record of tensor operations in topological (construction) order.
// backward() replays the record in reverse and accumulates adjoints, returning
// the gradient of a scalar loss for every registered parameter (zeros for
// parameters the loss does not depend on).
class Tape {
 public:
  struct Node {
    OpKind op;
    NodeId in0 = -1, in1 = -1;
    Tensor value;
    double scalar = 0.0;            // Scale factor / PowerShift epsilon
    int ivalue = 0;                 // SoftmaxNll label / BlockDot group count
    std::vector<int> aux_idx;       // ColMin/ColMax argselect rows; LinComb inputs
    std::vector<double> aux_w;      // LinComb weights; cached forward intermediates
    std::string param_name;         // Param nodes only
  };

  NodeId constant(Tensor t) { return push({OpKind::Constant, -1, -1, std::move(t)}); }

  // Registers (or re-uses) a leaf for a named parameter.
  NodeId param(const std::string& name, const Tensor& t) {
    auto it = param_ids_.find(name);
    if (it != param_ids_.end()) return it->second;
    Node n{OpKind::Param, -1, -1, t};
    n.param_name = name;
    NodeId id = push(std::move(n));
    param_ids_.emplace(name, id);
    return id;
  }

  NodeId register_params(const ParamStore& store) {
    NodeId last = -1;
    for (const auto& e : store.entries) last = param(e.name, e.value);
    return last;
  }

  const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
  std::size_t size() const { return nodes_.size(); }

  // Hash of every data-dependent branch decision taken during the forward pass
  // (kink signs, arg-min/max picks). Finite-difference checks compare
  // signatures of perturbed evaluations to detect non-smooth crossings.
  std::uint64_t branch_signature() const { return branch_sig_; }

  // ---- operations ----

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
            "matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    Tensor C = Tensor::zeros({A.rows(), B.cols()});
    int m = A.rows(), k = A.cols(), n = B.cols();
    for (int i = 0; i < m; ++i) {
      const double* arow = &A.v[static_cast<std::size_t>(i) * k];
      double* crow = &C.v[static_cast<std::size_t>(i) * n];
      for (int p = 0; p < k; ++p) {
        double av = arow[p];
        const double* brow = &B.v[static_cast<std::size_t>(p) * n];
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return push({OpKind::MatMul, a, b, std::move(C)});
  }

  NodeId vecmat(NodeId x, NodeId w) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    require(X.rank() == 1 && W.rank() == 2 && static_cast<int>(X.size()) == W.rows(),
            "vecmat: incompatible shapes " + X.shape_str() + " x " + W.shape_str());
    int k = W.rows(), n = W.cols();
    Tensor y = Tensor::zeros({n});
    for (int p = 0; p < k; ++p) {
      double xv = X.v[p];
      const double* wrow = &W.v[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) y.v[j] += xv * wrow[j];
    }
    return push({OpKind::VecMat, x, w, std::move(y)});
  }

  NodeId matvec(NodeId a, NodeId w) {
    const Tensor& A = value(a);
    const Tensor& W = value(w);
    require(A.rank() == 2 && W.rank() == 1 && A.cols() == static_cast<int>(W.size()),
            "matvec: incompatible shapes " + A.shape_str() + " x " + W.shape_str());
    int m = A.rows(), k = A.cols();
    Tensor y = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
      const double* arow = &A.v[static_cast<std::size_t>(i) * k];
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += arow[j] * W.v[j];
      y.v[i] = acc;
    }
    return push({OpKind::MatVec, a, w, std::move(y)});
  }

  NodeId add(NodeId a, NodeId b) { return elementwise(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return elementwise(OpKind::Sub, a, b); }

  NodeId add_rowvec(NodeId a, NodeId b) { return rowvec(OpKind::AddRowVec, a, b); }
  NodeId sub_rowvec(NodeId a, NodeId b) { return rowvec(OpKind::SubRowVec, a, b); }

  NodeId hadamard(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.same_shape(B), "hadamard: shape mismatch");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.v[i] *= B.v[i];
    return push({OpKind::Hadamard, a, b, std::move(C)});
  }

  NodeId scale(NodeId a, double s) {
    Tensor C = value(a);
    for (double& e : C.v) e *= s;
    Node n{OpKind::Scale, a, -1, std::move(C)};
    n.scalar = s;
    return push(std::move(n));
  }

  NodeId tanh_(NodeId a) {
    Tensor C = value(a);
    for (double& e : C.v) e = std::tanh(e);
    return push({OpKind::Tanh, a, -1, std::move(C)});
  }

  // mu(z) = c * tanh(z) for z < 0, tanh(z) for z >= 0 (z = 0 takes the right
  // branch). c is a {1} tensor shared across entries, or per-column for 2-d z.
  NodeId kinked_tanh(NodeId z, NodeId c) { return kinked(OpKind::KinkedTanh, z, c); }

  // mu(z) = c * z for z < 0, z for z >= 0
  NodeId kinked_linear(NodeId z, NodeId c) { return kinked(OpKind::KinkedLinear, z, c); }

  // mu(z) = (max(z,0) + eps)^rho - eps^rho, a smoothed concave power law
  NodeId power_shift(NodeId z, NodeId rho, double eps = 1e-3) {
    const Tensor& Z = value(z);
    const Tensor& R = value(rho);
    require(R.size() == 1, "power_shift: rho must be a scalar");
    double r = R.v[0];
    Node n{OpKind::PowerShift, z, rho, Tensor::zeros(Z.shape)};
    n.scalar = eps;
    n.aux_w.resize(Z.size());
    double base = std::pow(eps, r);
    for (std::size_t i = 0; i < Z.size(); ++i) {
      double zp = Z.v[i] > 0.0 ? Z.v[i] : 0.0;
      double p = std::pow(zp + eps, r);
      n.aux_w[i] = p;
      n.value.v[i] = p - base;
      mix_branch(Z.v[i] > 0.0 ? 1u : 0u);
    }
    return push(std::move(n));
  }

  // column means over rows; rejects an empty set
  NodeId mean_rows(NodeId a) {
    const Tensor& A = value(a);
    require(A.rank() == 2, "mean_rows: rank-2 input required");
    if (A.rows() == 0) throw ContractError("mean_pool: empty set (zero rows)");
    int m = A.rows(), k = A.cols();
    Tensor y = Tensor::zeros({k});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) y.v[j] += A.at(i, j);
    for (double& e : y.v) e /= m;
    return push({OpKind::MeanRows, a, -1, std::move(y)});
  }
  NodeId mean_pool(NodeId a) { return mean_rows(a); }

  NodeId col_min(NodeId a) { return col_select(OpKind::ColMin, a); }
  NodeId col_max(NodeId a) { return col_select(OpKind::ColMax, a); }

  NodeId softmax_vec(NodeId a) {
    const Tensor& A = value(a);
    require(A.rank() == 1 && A.size() > 0, "softmax_vec: non-empty vector required");
    double m = A.v[0];
    for (double e : A.v) m = std::max(m, e);
    Tensor p = A;
    double z = 0.0;
    for (double& e : p.v) {
      e = std::exp(e - m);
      z += e;
    }
    for (double& e : p.v) e /= z;
    return push({OpKind::SoftmaxVec, a, -1, std::move(p)});
  }

  // out[i, g] = sum_h S[i, g*h + h'] * R[g*h + h'], with h = len(R) / groups
  NodeId block_dot(NodeId s, NodeId r, int groups) {
    const Tensor& S = value(s);
    const Tensor& R = value(r);
    require(S.rank() == 2 && R.rank() == 1 && S.cols() == static_cast<int>(R.size()),
            "block_dot: incompatible shapes");
    require(groups > 0 && S.cols() % groups == 0, "block_dot: groups must divide width");
    int m = S.rows(), h = S.cols() / groups;
    Tensor y = Tensor::zeros({m, groups});
    for (int i = 0; i < m; ++i)
      for (int g = 0; g < groups; ++g) {
        double acc = 0.0;
        const double* srow = &S.v[static_cast<std::size_t>(i) * S.cols() + static_cast<std::size_t>(g) * h];
        const double* rrow = &R.v[static_cast<std::size_t>(g) * h];
        for (int t = 0; t < h; ++t) acc += srow[t] * rrow[t];
        y.at(i, g) = acc;
      }
    Node n{OpKind::BlockDot, s, r, std::move(y)};
    n.ivalue = groups;
    return push(std::move(n));
  }

  // negative log softmax probability of `label` under `scores`, with
  // max-subtraction for stability
  NodeId softmax_nll(NodeId scores, int label) {
    const Tensor& S = value(scores);
    require(S.rank() == 1 && S.size() > 0, "softmax_nll: non-empty score vector required");
    if (label < 0 || label >= static_cast<int>(S.size()))
      throw ContractError("softmax_nll: invalid label " + std::to_string(label) + " for " +
                          std::to_string(S.size()) + " scores");
    double m = S.v[0];
    for (double e : S.v) m = std::max(m, e);
    double z = 0.0;
    Node n{OpKind::SoftmaxNll, scores, -1, Tensor::scalar(0.0)};
    n.aux_w.resize(S.size());
    for (std::size_t j = 0; j < S.size(); ++j) {
      n.aux_w[j] = std::exp(S.v[j] - m);
      z += n.aux_w[j];
    }
    for (double& p : n.aux_w) p /= z;
    n.value.v[0] = std::log(z) - (S.v[static_cast<std::size_t>(label)] - m);
    n.ivalue = label;
    return push(std::move(n));
  }

  NodeId sum_squares(NodeId a) {
    const Tensor& A = value(a);
    double acc = 0.0;
    for (double e : A.v) acc += e * e;
    return push({OpKind::SumSquares, a, -1, Tensor::scalar(acc)});
  }

  // weighted sum of scalar nodes
  NodeId lin_comb(const std::vector<NodeId>& ids, const std::vector<double>& weights) {
    require(ids.size() == weights.size() && !ids.empty(), "lin_comb: ids/weights mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Tensor& T = value(ids[i]);
      require(T.size() == 1, "lin_comb: scalar inputs required");
      acc += weights[i] * T.v[0];
    }
    Node n{OpKind::LinComb, -1, -1, Tensor::scalar(acc)};
    n.aux_idx = ids;
    n.aux_w = weights;
    return push(std::move(n));
  }

  // ---- reverse pass ----

  GradMap backward(NodeId loss) const {
    const Tensor& L = value(loss);
    if (L.size() != 1)
      throw ContractError("backward: loss must be scalar, got shape " + L.shape_str());
    std::vector<Tensor> adj(nodes_.size());
    adj[static_cast<std::size_t>(loss)] = Tensor::scalar(1.0);
    for (NodeId id = loss; id >= 0; --id) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      Tensor& a = adj[static_cast<std::size_t>(id)];
      if (a.v.empty()) continue;  // node not on any path to the loss
      accumulate(n, a, adj);
    }
    GradMap grads;
    for (const auto& [name, id] : param_ids_) {
      Tensor& g = adj[static_cast<std::size_t>(id)];
      grads[name] = g.v.empty() ? Tensor::zeros(nodes_[static_cast<std::size_t>(id)].value.shape)
                                : std::move(g);
    }
    return grads;
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> param_ids_;
  std::uint64_t branch_sig_ = 1469598103934665603ULL;

  void mix_branch(std::uint64_t bit) {
    branch_sig_ = (branch_sig_ ^ bit) * 1099511628211ULL;
  }

  NodeId check(NodeId id) const {
    require(id >= 0 && id < static_cast<NodeId>(nodes_.size()), "bad node id");
    return id;
  }

  NodeId push(Node n) {
    require(n.value.all_finite(), "non-finite value produced by tape op");
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  NodeId elementwise(OpKind op, NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.same_shape(B), "elementwise op: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor C = A;
    if (op == OpKind::Add)
      for (std::size_t i = 0; i < C.size(); ++i) C.v[i] += B.v[i];
    else
      for (std::size_t i = 0; i < C.size(); ++i) C.v[i] -= B.v[i];
    return push({op, a, b, std::move(C)});
  }

  NodeId rowvec(OpKind op, NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.rank() == 2 && B.rank() == 1 && A.cols() == static_cast<int>(B.size()),
            "row-vector op: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor C = A;
    double s = op == OpKind::AddRowVec ? 1.0 : -1.0;
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) C.at(i, j) += s * B.v[j];
    return push({op, a, b, std::move(C)});
  }

  NodeId kinked(OpKind op, NodeId z, NodeId c) {
    const Tensor& Z = value(z);
    const Tensor& C = value(c);
    bool per_col = C.size() > 1;
    if (per_col) {
      int cols = Z.rank() == 2 ? Z.cols() : static_cast<int>(Z.size());
      require(static_cast<int>(C.size()) == cols,
              "kinked op: per-dimension c must match input width");
    }
    Node n{op, z, c, Tensor::zeros(Z.shape)};
    if (op == OpKind::KinkedTanh) n.aux_w.resize(Z.size());
    int cols = Z.rank() == 2 ? Z.cols() : static_cast<int>(Z.size());
    for (std::size_t i = 0; i < Z.size(); ++i) {
      double cv = per_col ? C.v[i % static_cast<std::size_t>(cols)] : C.v[0];
      double zi = Z.v[i];
      bool left = zi < 0.0;
      mix_branch(left ? 1u : 0u);
      if (op == OpKind::KinkedTanh) {
        double t = std::tanh(zi);
        n.aux_w[i] = t;
        n.value.v[i] = left ? cv * t : t;
      } else {
        n.value.v[i] = left ? cv * zi : zi;
      }
    }
    return push(std::move(n));
  }

  NodeId col_select(OpKind op, NodeId a) {
    const Tensor& A = value(a);
    require(A.rank() == 2 && A.rows() > 0, "column min/max: non-empty rank-2 input required");
    int m = A.rows(), k = A.cols();
    Node n{op, a, -1, Tensor::zeros({k})};
    n.aux_idx.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      int best = 0;
      for (int i = 1; i < m; ++i) {
        double e = A.at(i, j), b = A.at(best, j);
        if (op == OpKind::ColMin ? e < b : e > b) best = i;  // ties keep lowest row
      }
      n.aux_idx[static_cast<std::size_t>(j)] = best;
      n.value.v[static_cast<std::size_t>(j)] = A.at(best, j);
      mix_branch(static_cast<std::uint64_t>(best));
    }
    return push(std::move(n));
  }

  static void ensure(Tensor& t, const std::vector<int>& shape) {
    if (t.v.empty()) t = Tensor::zeros(shape);
  }

  void accumulate(const Node& n, const Tensor& a, std::vector<Tensor>& adj) const {
    auto in_val = [&](NodeId id) -> const Tensor& { return nodes_[static_cast<std::size_t>(id)].value; };
    auto in_adj = [&](NodeId id) -> Tensor& {
      Tensor& t = adj[static_cast<std::size_t>(id)];
      ensure(t, in_val(id).shape);
      return t;
    };
    switch (n.op) {
      case OpKind::Constant:
      case OpKind::Param:
        break;
      case OpKind::MatMul: {
        const Tensor& A = in_val(n.in0);
        const Tensor& B = in_val(n.in1);
        Tensor& dA = in_adj(n.in0);
        Tensor& dB = in_adj(n.in1);
        int m = A.rows(), k = A.cols(), c = B.cols();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* arow = &a.v[static_cast<std::size_t>(i) * c];
            const double* brow = &B.v[static_cast<std::size_t>(p) * c];
            for (int j = 0; j < c; ++j) acc += arow[j] * brow[j];
            dA.at(i, p) += acc;
          }
        for (int p = 0; p < k; ++p)
          for (int j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int i = 0; i < m; ++i) acc += A.at(i, p) * a.at(i, j);
            dB.at(p, j) += acc;
          }
        break;
      }
      case OpKind::VecMat: {
        const Tensor& X = in_val(n.in0);
        const Tensor& W = in_val(n.in1);
        Tensor& dX = in_adj(n.in0);
        Tensor& dW = in_adj(n.in1);
        int k = W.rows(), c = W.cols();
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          for (int j = 0; j < c; ++j) {
            acc += W.at(p, j) * a.v[static_cast<std::size_t>(j)];
            dW.at(p, j) += X.v[static_cast<std::size_t>(p)] * a.v[static_cast<std::size_t>(j)];
          }
          dX.v[static_cast<std::size_t>(p)] += acc;
        }
        break;
      }
      case OpKind::MatVec: {
        const Tensor& A = in_val(n.in0);
        const Tensor& W = in_val(n.in1);
        Tensor& dA = in_adj(n.in0);
        Tensor& dW = in_adj(n.in1);
        int m = A.rows(), k = A.cols();
        for (int i = 0; i < m; ++i) {
          double ai = a.v[static_cast<std::size_t>(i)];
          for (int j = 0; j < k; ++j) {
            dA.at(i, j) += ai * W.v[static_cast<std::size_t>(j)];
            dW.v[static_cast<std::size_t>(j)] += ai * A.at(i, j);
          }
        }
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        Tensor& dA = in_adj(n.in0);
        Tensor& dB = in_adj(n.in1);
        double s = n.op == OpKind::Add ? 1.0 : -1.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
          dA.v[i] += a.v[i];
          dB.v[i] += s * a.v[i];
        }
        break;
      }
      case OpKind::AddRowVec:
      case OpKind::SubRowVec: {
        Tensor& dA = in_adj(n.in0);
        Tensor& dB = in_adj(n.in1);
        double s = n.op == OpKind::AddRowVec ? 1.0 : -1.0;
        int m = n.value.rows(), k = n.value.cols();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j) {
            dA.at(i, j) += a.at(i, j);
            dB.v[static_cast<std::size_t>(j)] += s * a.at(i, j);
          }
        break;
      }
      case OpKind::Hadamard: {
        const Tensor& A = in_val(n.in0);
        const Tensor& B = in_val(n.in1);
        Tensor& dA = in_adj(n.in0);
        Tensor& dB = in_adj(n.in1);
        for (std::size_t i = 0; i < a.size(); ++i) {
          dA.v[i] += a.v[i] * B.v[i];
          dB.v[i] += a.v[i] * A.v[i];
        }
        break;
      }
      case OpKind::Scale: {
        Tensor& dA = in_adj(n.in0);
        for (std::size_t i = 0; i < a.size(); ++i) dA.v[i] += n.scalar * a.v[i];
        break;
      }
      case OpKind::Tanh: {
        Tensor& dA = in_adj(n.in0);
        for (std::size_t i = 0; i < a.size(); ++i) {
          double y = n.value.v[i];
          dA.v[i] += a.v[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::KinkedTanh:
      case OpKind::KinkedLinear: {
        const Tensor& Z = in_val(n.in0);
        const Tensor& C = in_val(n.in1);
        Tensor& dZ = in_adj(n.in0);
        Tensor& dC = in_adj(n.in1);
        bool per_col = C.size() > 1;
        int cols = Z.rank() == 2 ? Z.cols() : static_cast<int>(Z.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
          std::size_t ci = per_col ? i % static_cast<std::size_t>(cols) : 0;
          double cv = C.v[ci];
          double zi = Z.v[i];
          bool left = zi < 0.0;
          if (n.op == OpKind::KinkedTanh) {
            double t = n.aux_w[i];
            double sech2 = 1.0 - t * t;
            dZ.v[i] += a.v[i] * (left ? cv : 1.0) * sech2;
            if (left) dC.v[ci] += a.v[i] * t;
          } else {
            dZ.v[i] += a.v[i] * (left ? cv : 1.0);
            if (left) dC.v[ci] += a.v[i] * zi;
          }
        }
        break;
      }
      case OpKind::PowerShift: {
        const Tensor& Z = in_val(n.in0);
        const Tensor& R = in_val(n.in1);
        Tensor& dZ = in_adj(n.in0);
        Tensor& dR = in_adj(n.in1);
        double rho = R.v[0], eps = n.scalar;
        double base = std::pow(eps, rho), logeps = std::log(eps);
        for (std::size_t i = 0; i < a.size(); ++i) {
          double zi = Z.v[i];
          double zp = zi > 0.0 ? zi : 0.0;
          double p = n.aux_w[i];  // (zp + eps)^rho
          if (zi > 0.0)
            dZ.v[i] += a.v[i] * rho * p / (zp + eps);
          else if (zi == 0.0)
            dZ.v[i] += a.v[i] * rho * base / eps;  // right-branch subgradient
          dR.v[0] += a.v[i] * (p * std::log(zp + eps) - base * logeps);
        }
        break;
      }
      case OpKind::MeanRows: {
        const Tensor& A = in_val(n.in0);
        Tensor& dA = in_adj(n.in0);
        int m = A.rows(), k = A.cols();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < k; ++j) dA.at(i, j) += a.v[static_cast<std::size_t>(j)] / m;
        break;
      }
      case OpKind::ColMin:
      case OpKind::ColMax: {
        Tensor& dA = in_adj(n.in0);
        for (std::size_t j = 0; j < n.aux_idx.size(); ++j)
          dA.at(n.aux_idx[j], static_cast<int>(j)) += a.v[j];
        break;
      }
      case OpKind::SoftmaxVec: {
        Tensor& dA = in_adj(n.in0);
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a.v[i] * n.value.v[i];
        for (std::size_t i = 0; i < a.size(); ++i) dA.v[i] += n.value.v[i] * (a.v[i] - dot);
        break;
      }
      case OpKind::BlockDot: {
        const Tensor& S = in_val(n.in0);
        const Tensor& R = in_val(n.in1);
        Tensor& dS = in_adj(n.in0);
        Tensor& dR = in_adj(n.in1);
        int m = S.rows(), groups = n.ivalue, h = S.cols() / groups;
        for (int i = 0; i < m; ++i)
          for (int g = 0; g < groups; ++g) {
            double ag = a.at(i, g);
            for (int t = 0; t < h; ++t) {
              std::size_t col = static_cast<std::size_t>(g) * h + static_cast<std::size_t>(t);
              dS.v[static_cast<std::size_t>(i) * S.cols() + col] += ag * R.v[col];
              dR.v[col] += ag * S.v[static_cast<std::size_t>(i) * S.cols() + col];
            }
          }
        break;
      }
      case OpKind::SoftmaxNll: {
        Tensor& dS = in_adj(n.in0);
        double g = a.v[0];
        for (std::size_t j = 0; j < dS.size(); ++j) {
          double ind = static_cast<int>(j) == n.ivalue ? 1.0 : 0.0;
          dS.v[j] += g * (n.aux_w[j] - ind);
        }
        break;
      }
      case OpKind::SumSquares: {
        const Tensor& A = in_val(n.in0);
        Tensor& dA = in_adj(n.in0);
        for (std::size_t i = 0; i < A.size(); ++i) dA.v[i] += 2.0 * a.v[0] * A.v[i];
        break;
      }
      case OpKind::LinComb: {
        for (std::size_t i = 0; i < n.aux_idx.size(); ++i) {
          Tensor& d = in_adj(n.aux_idx[i]);
          d.v[0] += n.aux_w[i] * a.v[0];
        }
        break;
      }
    }
  }
};

}  // namespace setagg
