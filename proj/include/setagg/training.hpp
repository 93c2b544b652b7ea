#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setagg/data.hpp"
#include "setagg/model.hpp"
#include "setagg/tape.hpp"

namespace setagg {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double dropout_keep = 1.0;
  int batch_size = 128;
  double decay_rate = 0.95;
  int decay_steps = 10;  // epochs per staircase step
  int early_stop_window = 25;
  int max_epochs = 200;
  unsigned long long seed = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
    if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
    if (!(dropout_keep > 0 && dropout_keep <= 1))
      throw ConfigError("train config: dropout_keep must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(decay_rate > 0 && decay_rate <= 1))
      throw ConfigError("train config: decay_rate must be in (0, 1]");
    if (decay_steps < 1) throw ConfigError("train config: decay_steps must be >= 1");
    if (early_stop_window < 1) throw ConfigError("train config: early_stop_window must be >= 1");
    if (max_epochs < 0) throw ConfigError("train config: max_epochs must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"weight_decay", weight_decay},
            {"dropout_keep", dropout_keep},
            {"batch_size", batch_size},
            {"decay_rate", decay_rate},
            {"decay_steps", decay_steps},
            {"early_stop_window", early_stop_window},
            {"max_epochs", max_epochs},
            {"seed", seed}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.dropout_keep = j.value("dropout_keep", c.dropout_keep);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.decay_rate = j.value("decay_rate", c.decay_rate);
    c.decay_steps = j.value("decay_steps", c.decay_steps);
    c.early_stop_window = j.value("early_stop_window", c.early_stop_window);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

// staircase schedule: rate * decay^floor(epoch / steps)
inline double lr_at(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0, "lr_at: epoch must be >= 0");
  return cfg.learning_rate * std::pow(cfg.decay_rate, epoch / cfg.decay_steps);
}

// mean choice NLL over the batch plus lambda * squared L2 norm of the affine
// weights (bias, kink, and exponent parameters are not penalized)
inline NodeId batch_loss(Tape& t, const ChoiceModel& model, const Dataset& ds,
                         const std::vector<int>& batch, double lambda,
                         const DropoutCtx* drop = nullptr) {
  require(!batch.empty(), "batch_loss: empty batch");
  std::vector<NodeId> terms;
  std::vector<double> weights;
  terms.reserve(batch.size() + 8);
  double inv = 1.0 / static_cast<double>(batch.size());
  for (int i : batch) {
    require(i >= 0 && i < static_cast<int>(ds.size()), "batch_loss: index out of range");
    const ChoiceExample& ex = ds.examples[static_cast<std::size_t>(i)];
    terms.push_back(t.softmax_nll(model.scores(t, ex.items, drop), ex.chosen));
    weights.push_back(inv);
  }
  if (lambda > 0) {
    for (const auto& e : model.params().entries)
      if (e.kind == ParamKind::Weight) {
        terms.push_back(t.sum_squares(t.param(e.name, e.value)));
        weights.push_back(lambda);
      }
  }
  return t.lin_comb(terms, weights);
}

struct OptimizerState {
  struct Moments {
    Tensor m, v;
  };
  std::map<std::string, Moments> moments;
  long long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// standard Adam with bias correction; kink scales are clamped to stay > 1 and
// power exponents to stay in (0, 1] after every update
inline void adam_step(OptimizerState& st, ParamStore& params, const GradMap& grads, double lr) {
  ++st.step;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (auto& e : params.entries) {
    auto it = grads.find(e.name);
    require(it != grads.end(), "adam_step: missing gradient for " + e.name);
    const Tensor& g = it->second;
    require(g.same_shape(e.value), "adam_step: gradient shape mismatch for " + e.name);
    if (!g.all_finite())
      throw NumericError("non-finite gradient for '" + e.name + "' at optimizer step " +
                         std::to_string(st.step));
    auto [slot, inserted] = st.moments.try_emplace(e.name);
    if (inserted) {
      slot->second.m = Tensor(e.value.shape, std::vector<double>(e.value.v.size(), 0.0));
      slot->second.v = slot->second.m;
    }
    Tensor& m = slot->second.m;
    Tensor& v = slot->second.v;
    for (std::size_t k = 0; k < e.value.v.size(); ++k) {
      m.v[k] = st.beta1 * m.v[k] + (1.0 - st.beta1) * g.v[k];
      v.v[k] = st.beta2 * v.v[k] + (1.0 - st.beta2) * g.v[k] * g.v[k];
      double mhat = m.v[k] / bc1;
      double vhat = v.v[k] / bc2;
      e.value.v[k] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
    if (e.kind == ParamKind::KinkScale)
      for (double& c : e.value.v) c = std::max(c, 1.0 + 1e-6);
    if (e.kind == ParamKind::PowerExponent)
      for (double& r : e.value.v) r = std::min(std::max(r, 1e-6), 1.0);
  }
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_top1 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ChoiceModel model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  double best_val_top1 = 0.0;
  int best_epoch = -1;
};

inline double accuracy_top1(const ChoiceModel& model, const Dataset& ds) {
  require(!ds.examples.empty(), "accuracy_top1: empty dataset");
  int hits = 0;
  for (const auto& ex : ds.examples) hits += model.predict(ex.items) == ex.chosen;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

inline double mean_nll(const ChoiceModel& model, const Dataset& ds) {
  require(!ds.examples.empty(), "mean_nll: empty dataset");
  double acc = 0.0;
  for (const auto& ex : ds.examples) {
    Tape t;
    acc += t.value(t.softmax_nll(model.scores(t, ex.items), ex.chosen)).v[0];
  }
  return acc / static_cast<double>(ds.size());
}

// Mini-batch optimization with per-epoch validation, best-snapshot tracking,
// and early stopping once the window passes without a strict improvement.
// Fully deterministic given cfg.seed: initialization, epoch shuffles, and
// dropout masks all come from one seeded stream in a fixed draw order.
inline TrainResult train(const AggregatorConfig& model_cfg, const TrainConfig& cfg,
                         const Dataset& train_set, const Dataset& val_set) {
  cfg.validate();
  require(!train_set.examples.empty(), "train: empty training set");
  require(!val_set.examples.empty(), "train: empty validation set");
  require(train_set.d == val_set.d, "train: train/validation dimension mismatch");

  Rng rng(cfg.seed);
  ChoiceModel model(model_cfg, train_set.d, rng);

  TrainResult result;
  if (cfg.max_epochs == 0) {
    result.model = model;
    return result;
  }

  OptimizerState opt;
  int m = static_cast<int>(train_set.size());
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double lr = lr_at(epoch, cfg);
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (int start = 0; start < m; start += cfg.batch_size, ++batch_index) {
      int stop = std::min(start + cfg.batch_size, m);
      std::vector<int> batch(order.begin() + start, order.begin() + stop);
      Tape t;
      DropoutCtx drop{cfg.dropout_keep, &rng};
      const DropoutCtx* drop_ptr = cfg.dropout_keep < 1.0 ? &drop : nullptr;
      NodeId loss = batch_loss(t, model, train_set, batch, cfg.weight_decay, drop_ptr);
      double loss_value = t.value(loss).v[0];
      if (!std::isfinite(loss_value))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      loss_sum += loss_value * static_cast<double>(batch.size());
      GradMap grads = t.backward(loss);
      adam_step(opt, model.params(), grads, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(m);
    rec.val_top1 = accuracy_top1(model, val_set);
    rec.lr = lr;
    result.history.push_back(rec);

    if (rec.val_top1 > result.best_val_top1 || result.best_epoch < 0) {
      result.best_val_top1 = rec.val_top1;
      result.best_epoch = epoch;
      result.model = model;
    } else if (epoch - result.best_epoch >= cfg.early_stop_window) {
      break;
    }
  }
  return result;
}

inline std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  for (const auto& rec : history)
    out << nlohmann::json{{"epoch", rec.epoch},
                          {"train_loss", rec.train_loss},
                          {"val_top1", rec.val_top1},
                          {"lr", rec.lr}}
               .dump()
        << "\n";
  return out.str();
}

struct SearchSpace {
  double lr_lo = 1e-5, lr_hi = 1e-3;
  double wd_lo = 1e-10, wd_hi = 1e-3;
  double keep_lo = 0.5, keep_hi = 1.0;
  int trials = 10;

  void validate() const {
    if (!(lr_lo > 0 && lr_lo <= lr_hi)) throw ConfigError("search space: bad learning-rate range");
    if (!(wd_lo > 0 && wd_lo <= wd_hi)) throw ConfigError("search space: bad weight-decay range");
    if (!(keep_lo > 0 && keep_lo <= keep_hi && keep_hi <= 1))
      throw ConfigError("search space: bad dropout-keep range");
    if (trials < 1) throw ConfigError("search space: trials must be >= 1");
  }
};

struct TrialResult {
  int trial = 0;
  TrainConfig config;
  double val_top1 = 0.0;
  double val_loss = 0.0;
};

struct SearchResult {
  TrainConfig best;
  std::vector<TrialResult> leaderboard;  // sorted: top1 desc, then loss asc
};

// Seeded random hyperparameter search: learning rate and weight decay are
// sampled log-uniformly, dropout keep uniformly. Trials are ranked by
// validation top-1 with validation loss breaking ties.
inline SearchResult random_search(const SearchSpace& space, const AggregatorConfig& model_cfg,
                                  const TrainConfig& base, const Dataset& train_set,
                                  const Dataset& val_set, unsigned long long seed) {
  space.validate();
  Rng rng(seed);
  SearchResult result;
  for (int trial = 0; trial < space.trials; ++trial) {
    TrainConfig cfg = base;
    cfg.learning_rate = rng.log_uniform(space.lr_lo, space.lr_hi);
    cfg.weight_decay = rng.log_uniform(space.wd_lo, space.wd_hi);
    cfg.dropout_keep = rng.uniform(space.keep_lo, space.keep_hi);
    cfg.seed = splitmix64(seed ^ splitmix64(static_cast<unsigned long long>(trial) + 1));
    TrainResult tr = train(model_cfg, cfg, train_set, val_set);
    TrialResult row;
    row.trial = trial;
    row.config = cfg;
    row.val_top1 = tr.history.empty() ? accuracy_top1(tr.model, val_set) : tr.best_val_top1;
    row.val_loss = mean_nll(tr.model, val_set);
    result.leaderboard.push_back(std::move(row));
  }
  std::stable_sort(result.leaderboard.begin(), result.leaderboard.end(),
                   [](const TrialResult& a, const TrialResult& b) {
                     if (a.val_top1 != b.val_top1) return a.val_top1 > b.val_top1;
                     return a.val_loss < b.val_loss;
                   });
  result.best = result.leaderboard.front().config;
  return result;
}

}  // namespace setagg
