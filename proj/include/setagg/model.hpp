#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "setagg/data.hpp"
#include "setagg/tape.hpp"

namespace setagg {

// Mechanism taxonomy by where set-dependence enters the score
// g(x,s) = <w(s), phi(x,s)>:
//   MNL — neither weights nor embedding depend on s;
//   SDW — set-dependent weights, embedding is the base score itself;
//   SDE — set-independent weights, set-dependent embedding (reference point);
//   SDA — both sides set-dependent.
enum class Mechanism { MNL, SDW, SDE, SDA };
enum class Comparison { Diff, Inner };
enum class Mu { Identity, Tanh, KinkedTanh, KinkedLinear, Power };
enum class WMode { SetNet, FreeVector, Ones, Softmax };
enum class RMode { SetNet, Zero, Min, MaxPlusMinHalf };

namespace enum_names {

inline const char* to_string(Mechanism m) {
  switch (m) {
    case Mechanism::MNL: return "mnl";
    case Mechanism::SDW: return "sdw";
    case Mechanism::SDE: return "sde";
    case Mechanism::SDA: return "sda";
  }
  return "?";
}
inline const char* to_string(Comparison c) { return c == Comparison::Diff ? "diff" : "inner"; }
inline const char* to_string(Mu m) {
  switch (m) {
    case Mu::Identity: return "identity";
    case Mu::Tanh: return "tanh";
    case Mu::KinkedTanh: return "kinked_tanh";
    case Mu::KinkedLinear: return "kinked_linear";
    case Mu::Power: return "power";
  }
  return "?";
}
inline const char* to_string(WMode w) {
  switch (w) {
    case WMode::SetNet: return "setnet";
    case WMode::FreeVector: return "free_vector";
    case WMode::Ones: return "ones";
    case WMode::Softmax: return "softmax";
  }
  return "?";
}
inline const char* to_string(RMode r) {
  switch (r) {
    case RMode::SetNet: return "setnet";
    case RMode::Zero: return "zero";
    case RMode::Min: return "min";
    case RMode::MaxPlusMinHalf: return "max_plus_min_half";
  }
  return "?";
}

template <typename E>
E from_string(const std::string& s, std::initializer_list<E> all, const char* what) {
  for (E e : all)
    if (s == to_string(e)) return e;
  throw ConfigError(std::string(what) + ": unknown value '" + s + "'");
}

inline Mechanism mechanism_from(const std::string& s) {
  return from_string<Mechanism>(s, {Mechanism::MNL, Mechanism::SDW, Mechanism::SDE, Mechanism::SDA},
                                "mechanism");
}
inline Comparison comparison_from(const std::string& s) {
  return from_string<Comparison>(s, {Comparison::Diff, Comparison::Inner}, "comparison");
}
inline Mu mu_from(const std::string& s) {
  return from_string<Mu>(s, {Mu::Identity, Mu::Tanh, Mu::KinkedTanh, Mu::KinkedLinear, Mu::Power},
                         "mu");
}
inline WMode w_mode_from(const std::string& s) {
  return from_string<WMode>(s, {WMode::SetNet, WMode::FreeVector, WMode::Ones, WMode::Softmax},
                            "w_mode");
}
inline RMode r_mode_from(const std::string& s) {
  return from_string<RMode>(s, {RMode::SetNet, RMode::Zero, RMode::Min, RMode::MaxPlusMinHalf},
                            "r_mode");
}

}  // namespace enum_names

struct AggregatorConfig {
  Mechanism mechanism = Mechanism::SDA;
  int ell = 24;
  int h = 8;
  Comparison comparison = Comparison::Inner;
  Mu mu = Mu::KinkedTanh;
  WMode w_mode = WMode::SetNet;
  RMode r_mode = RMode::SetNet;
  bool per_dim_kink = false;  // one kink coefficient per embedding dimension
  std::string preset;         // name this config was derived from, if any

  void validate() const {
    if (ell < 1) throw ConfigError("config: ell must be >= 1");
    if (h < 1) throw ConfigError("config: h must be >= 1");
    if (comparison == Comparison::Diff && h != 1)
      throw ConfigError("config: comparison=diff requires h=1");
    if (w_mode == WMode::Softmax && h != 1)
      throw ConfigError("config: w_mode=softmax requires h=1");
    bool w_setdep = w_mode == WMode::SetNet || w_mode == WMode::Softmax;
    switch (mechanism) {
      case Mechanism::MNL:
        if (w_mode != WMode::Ones || r_mode != RMode::Zero || mu != Mu::Identity ||
            comparison != Comparison::Diff)
          throw ConfigError("config: mnl mechanism requires w=ones, r=zero, mu=identity, diff");
        break;
      case Mechanism::SDW:
        if (r_mode != RMode::Zero || mu != Mu::Identity || comparison != Comparison::Diff)
          throw ConfigError("config: sdw mechanism requires r=zero, mu=identity, diff");
        if (!w_setdep) throw ConfigError("config: sdw mechanism requires set-dependent weights");
        break;
      case Mechanism::SDE:
        if (w_setdep)
          throw ConfigError("config: sde mechanism requires set-independent weights");
        break;
      case Mechanism::SDA:
        if (!w_setdep) throw ConfigError("config: sda mechanism requires set-dependent weights");
        if (r_mode == RMode::Zero)
          throw ConfigError("config: sda mechanism requires a set-dependent embedding");
        break;
    }
  }

  bool has_kink_param() const { return mu == Mu::KinkedTanh || mu == Mu::KinkedLinear; }
  bool has_power_param() const { return mu == Mu::Power; }
  bool uses_w_net() const { return w_mode == WMode::SetNet; }
  bool uses_r_net() const { return r_mode == RMode::SetNet; }

  nlohmann::json to_json() const {
    using namespace enum_names;
    return {{"mechanism", to_string(mechanism)}, {"ell", ell},
            {"h", h},                            {"comparison", to_string(comparison)},
            {"mu", to_string(mu)},               {"w_mode", to_string(w_mode)},
            {"r_mode", to_string(r_mode)},       {"per_dim_kink", per_dim_kink},
            {"preset", preset}};
  }

  static AggregatorConfig from_json(const nlohmann::json& j) {
    using namespace enum_names;
    AggregatorConfig c;
    c.mechanism = mechanism_from(j.at("mechanism").get<std::string>());
    c.ell = j.at("ell").get<int>();
    c.h = j.at("h").get<int>();
    c.comparison = comparison_from(j.at("comparison").get<std::string>());
    c.mu = mu_from(j.at("mu").get<std::string>());
    c.w_mode = w_mode_from(j.at("w_mode").get<std::string>());
    c.r_mode = r_mode_from(j.at("r_mode").get<std::string>());
    c.per_dim_kink = j.value("per_dim_kink", false);
    c.preset = j.value("preset", std::string());
    c.validate();
    return c;
  }
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "mnl",       "lam",        "ccm_min_power", "kalai_softmax", "sda_default", "sda_tanh",
      "sda_no_mu", "sda_free_w", "sde",           "sdw",           "mnl_setnn_w"};
  return names;
}

// Named model families. The classical forms (mnl, lam, ccm_min_power,
// kalai_softmax) fix every component; the learned families default to ell=24,
// with inner comparison of width h=8 where the embedding is vector-valued.
inline AggregatorConfig preset(const std::string& name) {
  AggregatorConfig c;
  c.preset = name;
  auto classic = [&](Mechanism mech, Mu mu, WMode w, RMode r) {
    c.mechanism = mech;
    c.ell = 24;
    c.h = 1;
    c.comparison = Comparison::Diff;
    c.mu = mu;
    c.w_mode = w;
    c.r_mode = r;
  };
  if (name == "mnl") {
    classic(Mechanism::MNL, Mu::Identity, WMode::Ones, RMode::Zero);
    c.ell = 1;
  } else if (name == "mnl_setnn_w") {
    classic(Mechanism::SDW, Mu::Identity, WMode::SetNet, RMode::Zero);
    c.ell = 1;
  } else if (name == "sdw") {
    classic(Mechanism::SDW, Mu::Identity, WMode::SetNet, RMode::Zero);
  } else if (name == "sde") {
    classic(Mechanism::SDE, Mu::KinkedTanh, WMode::FreeVector, RMode::SetNet);
  } else if (name == "lam") {
    classic(Mechanism::SDE, Mu::KinkedLinear, WMode::Ones, RMode::MaxPlusMinHalf);
  } else if (name == "ccm_min_power") {
    classic(Mechanism::SDE, Mu::Power, WMode::Ones, RMode::Min);
  } else if (name == "kalai_softmax") {
    classic(Mechanism::SDW, Mu::Identity, WMode::Softmax, RMode::Zero);
  } else if (name == "sda_default" || name == "sda_tanh" || name == "sda_no_mu") {
    c.mechanism = Mechanism::SDA;
    c.ell = 24;
    c.h = 8;
    c.comparison = Comparison::Inner;
    c.w_mode = WMode::SetNet;
    c.r_mode = RMode::SetNet;
    c.mu = name == "sda_tanh" ? Mu::Tanh : name == "sda_no_mu" ? Mu::Identity : Mu::KinkedTanh;
  } else if (name == "sda_free_w") {
    c.mechanism = Mechanism::SDE;  // weights are a set-independent learned vector
    c.ell = 24;
    c.h = 8;
    c.comparison = Comparison::Inner;
    c.mu = Mu::KinkedTanh;
    c.w_mode = WMode::FreeVector;
    c.r_mode = RMode::SetNet;
  } else {
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "'; valid presets: " + all);
  }
  c.validate();
  return c;
}

// Dropout context threading a keep-probability and a deterministic mask source
// through a training forward pass. Inverted scaling: kept activations are
// multiplied by 1/keep so evaluation needs no rescaling.
struct DropoutCtx {
  double keep = 1.0;
  Rng* rng = nullptr;

  bool active() const { return keep < 1.0 && rng != nullptr; }
  Tensor mask(int rows, int cols) const {
    Tensor m = Tensor::zeros({rows, cols});
    for (double& e : m.v) e = rng->uniform() < keep ? 1.0 / keep : 0.0;
    return m;
  }
};

// The aggregation model g(x,s) = <w(s), mu(compare(F(x), r(F(s))))> with a
// linear base class F(x) = x^T Theta. Set functions w and r are realized per
// the config: permutation-invariant networks, fixed reductions, constants, or
// learned vectors.
class ChoiceModel {
 public:
  ChoiceModel() = default;

  ChoiceModel(const AggregatorConfig& cfg, int d, Rng& rng) : cfg_(cfg), d_(d) {
    cfg_.validate();
    if (d < 1) throw ConfigError("model: feature dimension must be >= 1");
    int lh = cfg_.ell * cfg_.h;
    add_affine("Theta", d, lh, rng);
    if (cfg_.uses_w_net()) add_setnet("w_net", lh, cfg_.ell, rng);
    if (cfg_.uses_r_net()) add_setnet("r_net", lh, lh, rng);
    if (cfg_.w_mode == WMode::FreeVector)
      params_.add("w_free", Tensor::full({cfg_.ell}, 1.0), ParamKind::Weight);
    if (cfg_.has_kink_param())
      params_.add("c", Tensor::full({cfg_.per_dim_kink ? cfg_.ell : 1}, 2.0), ParamKind::KinkScale);
    if (cfg_.has_power_param())
      params_.add("rho", Tensor::scalar(0.5), ParamKind::PowerExponent);
  }

  const AggregatorConfig& config() const { return cfg_; }
  int d() const { return d_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  FeatureTransform transform;  // fitted preprocessing carried with the model

  // ---- forward stages (exposed for verification) ----

  // {n, ell*h}: row i holds F(x_i) flattened
  NodeId base_scores(Tape& t, const Tensor& items) const {
    if (items.cols() != d_)
      throw ContractError("base_scores: item dimension " + std::to_string(items.cols()) +
                          " != model dimension " + std::to_string(d_));
    require(items.rows() > 0, "base_scores: empty set");
    return t.matmul(t.constant(items), t.param("Theta", params_.value("Theta")));
  }

  // {ell}: aggregation weights w(s) given base scores S
  NodeId set_weights(Tape& t, NodeId S, const DropoutCtx* drop = nullptr) const {
    switch (cfg_.w_mode) {
      case WMode::Ones:
        return t.constant(Tensor::full({cfg_.ell}, 1.0));
      case WMode::FreeVector:
        return t.param("w_free", params_.value("w_free"));
      case WMode::Softmax:
        return t.softmax_vec(t.mean_rows(S));
      case WMode::SetNet:
        return setnet(t, "w_net", S, drop);
    }
    throw ContractError("unreachable w_mode");
  }

  // {ell*h}: reference point r(F(s)) given base scores S
  NodeId reference(Tape& t, NodeId S, const DropoutCtx* drop = nullptr) const {
    switch (cfg_.r_mode) {
      case RMode::Zero:
        return t.constant(Tensor::zeros({cfg_.ell * cfg_.h}));
      case RMode::Min:
        return t.col_min(S);
      case RMode::MaxPlusMinHalf:
        return t.scale(t.add(t.col_max(S), t.col_min(S)), 0.5);
      case RMode::SetNet:
        return setnet(t, "r_net", S, drop);
    }
    throw ContractError("unreachable r_mode");
  }

  // {n, ell}: embedding phi(x_i, s) = mu(compare(F(x_i), R)) for every item
  NodeId embed(Tape& t, NodeId S, NodeId R) const {
    NodeId Z = cfg_.comparison == Comparison::Diff ? t.sub_rowvec(S, R)
                                                   : t.block_dot(S, R, cfg_.ell);
    switch (cfg_.mu) {
      case Mu::Identity:
        return Z;
      case Mu::Tanh:
        return t.tanh_(Z);
      case Mu::KinkedTanh:
        return t.kinked_tanh(Z, t.param("c", params_.value("c")));
      case Mu::KinkedLinear:
        return t.kinked_linear(Z, t.param("c", params_.value("c")));
      case Mu::Power:
        return t.power_shift(Z, t.param("rho", params_.value("rho")));
    }
    throw ContractError("unreachable mu");
  }

  // {n}: aggregated scores g(x_i, s)
  NodeId scores(Tape& t, const Tensor& items, const DropoutCtx* drop = nullptr) const {
    t.register_params(params_);
    NodeId S = base_scores(t, items);
    NodeId R = reference(t, S, drop);
    NodeId A = embed(t, S, R);
    NodeId w = set_weights(t, S, drop);
    return t.matvec(A, w);
  }

  std::vector<double> score_values(const Tensor& items) const {
    Tape t;
    return t.value(scores(t, items)).v;
  }

  // argmax score; ties break to the lowest index
  int predict(const Tensor& items) const {
    std::vector<double> s = score_values(items);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;
    return static_cast<int>(best);
  }

  // ---- serialization ----

  static constexpr int kSnapshotVersion = 1;

  nlohmann::json to_json() const {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& e : params_.entries)
      params.push_back({{"name", e.name},
                        {"kind", kind_name(e.kind)},
                        {"shape", e.value.shape},
                        {"values", e.value.v}});
    nlohmann::json j{{"format", "setagg-model"},
                     {"version", kSnapshotVersion},
                     {"d", d_},
                     {"config", cfg_.to_json()},
                     {"params", params}};
    if (!transform.empty()) j["transform"] = {{"mean", transform.mean}, {"std", transform.stdev}};
    return j;
  }

  static ChoiceModel from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j.at("version").get<int>() != kSnapshotVersion)
      throw ConfigError("model snapshot: unsupported version (expected " +
                        std::to_string(kSnapshotVersion) + ")");
    ChoiceModel m;
    m.cfg_ = AggregatorConfig::from_json(j.at("config"));
    m.d_ = j.at("d").get<int>();
    for (const auto& p : j.at("params")) {
      Tensor t(p.at("shape").get<std::vector<int>>(), p.at("values").get<std::vector<double>>());
      std::size_t expect = 1;
      for (int dim : t.shape) expect *= static_cast<std::size_t>(dim);
      if (t.v.size() != expect) throw ConfigError("model snapshot: shape/value mismatch");
      m.params_.add(p.at("name").get<std::string>(), std::move(t), kind_from(p.at("kind").get<std::string>()));
    }
    if (j.contains("transform")) {
      m.transform.mean = j.at("transform").at("mean").get<std::vector<double>>();
      m.transform.stdev = j.at("transform").at("std").get<std::vector<double>>();
    }
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model snapshot: " + path);
    out << to_json().dump(2) << "\n";
  }

  static ChoiceModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read model snapshot: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("model snapshot parse error: " + std::string(e.what()));
    }
    return from_json(j);
  }

 private:
  AggregatorConfig cfg_;
  int d_ = 0;
  ParamStore params_;

  static const char* kind_name(ParamKind k) {
    switch (k) {
      case ParamKind::Weight: return "weight";
      case ParamKind::Bias: return "bias";
      case ParamKind::KinkScale: return "kink_scale";
      case ParamKind::PowerExponent: return "power_exponent";
    }
    return "?";
  }
  static ParamKind kind_from(const std::string& s) {
    if (s == "weight") return ParamKind::Weight;
    if (s == "bias") return ParamKind::Bias;
    if (s == "kink_scale") return ParamKind::KinkScale;
    if (s == "power_exponent") return ParamKind::PowerExponent;
    throw ConfigError("model snapshot: unknown parameter kind '" + s + "'");
  }

  // symmetric uniform init scaled by fan-in + fan-out
  void add_affine(const std::string& name, int fan_in, int fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor W = Tensor::zeros({fan_in, fan_out});
    for (double& e : W.v) e = rng.uniform(-bound, bound);
    params_.add(name, std::move(W), ParamKind::Weight);
  }

  void add_setnet(const std::string& prefix, int in, int out, Rng& rng) {
    auto layer = [&](const std::string& tag, int fi, int fo) {
      add_affine(prefix + "." + tag, fi, fo, rng);
      params_.add(prefix + ".b" + tag.substr(1), Tensor::zeros({fo}), ParamKind::Bias);
    };
    layer("W1", in, 16);
    layer("W2", 16, 16);
    layer("W3", 16, out);
  }

  // eta: two tanh affine layers per item; mean pool; affine readout
  NodeId setnet(Tape& t, const std::string& prefix, NodeId S, const DropoutCtx* drop) const {
    auto P = [&](const std::string& suffix) {
      return t.param(prefix + "." + suffix, params_.value(prefix + "." + suffix));
    };
    NodeId H1 = t.tanh_(t.add_rowvec(t.matmul(S, P("W1")), P("b1")));
    if (drop && drop->active())
      H1 = t.hadamard(H1, t.constant(drop->mask(t.value(H1).rows(), t.value(H1).cols())));
    NodeId H2 = t.tanh_(t.add_rowvec(t.matmul(H1, P("W2")), P("b2")));
    if (drop && drop->active())
      H2 = t.hadamard(H2, t.constant(drop->mask(t.value(H2).rows(), t.value(H2).cols())));
    NodeId pooled = t.mean_rows(H2);
    return t.add(t.vecmat(pooled, P("W3")), P("b3"));
  }
};

// Score of one item within a set; convenience wrapper over score_values.
inline double aggregate_score(const ChoiceModel& model, const Tensor& items, int x_index) {
  std::vector<double> s = model.score_values(items);
  if (x_index < 0 || x_index >= static_cast<int>(s.size()))
    throw ContractError("aggregate_score: x must be a member of s");
  return s[static_cast<std::size_t>(x_index)];
}

}  // namespace setagg
