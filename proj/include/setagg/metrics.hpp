#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setagg/data.hpp"
#include "setagg/model.hpp"

namespace setagg {

struct EvalReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double mrr_reciprocal = 0.0;  // mean of 1/rank (higher is better)
  double mean_rank = 0.0;       // mean rank (lower is better)
  std::size_t m = 0;

  nlohmann::json to_json() const {
    return {{"top1", top1},
            {"top5", top5},
            {"mrr_reciprocal", mrr_reciprocal},
            {"mean_rank", mean_rank},
            {"m", m}};
  }
};

// 1-based rank of the chosen item by descending score; on ties the chosen item
// is ranked worst among its equals, so constant-score models get no credit
inline int chosen_rank(const std::vector<double>& scores, int chosen) {
  double sc = scores[static_cast<std::size_t>(chosen)];
  int rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (static_cast<int>(j) == chosen) continue;
    if (scores[j] >= sc) ++rank;
  }
  return rank;
}

inline EvalReport evaluate(const ChoiceModel& model, const Dataset& ds) {
  require(!ds.examples.empty(), "evaluate: empty dataset");
  EvalReport rep;
  rep.m = ds.size();
  for (const auto& ex : ds.examples) {
    int rank = chosen_rank(model.score_values(ex.items), ex.chosen);
    rep.top1 += rank == 1;
    rep.top5 += rank <= 5;
    rep.mrr_reciprocal += 1.0 / static_cast<double>(rank);
    rep.mean_rank += static_cast<double>(rank);
  }
  double inv = 1.0 / static_cast<double>(rep.m);
  rep.top1 *= inv;
  rep.top5 *= inv;
  rep.mrr_reciprocal *= inv;
  rep.mean_rank *= inv;
  return rep;
}

enum class CompareTo { Label, FullSetPrediction };

struct CapacityReport {
  double kappa = 0.0;               // mean over included (non-singleton) examples
  std::vector<double> per_example;  // aligned with the dataset; NaN for skipped singletons
  std::size_t included = 0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const {
    return {{"kappa", kappa}, {"included", included}, {"skipped_singletons", skipped}};
  }
};

// Deletion sensitivity: for each example, remove one non-chosen item at a time
// and count how often the prediction on the reduced set leaves the target
// (the label by default, or the model's own full-set prediction). Singleton
// sets have no deletions and are skipped.
inline CapacityReport violation_capacity(const ChoiceModel& model, const Dataset& ds,
                                         CompareTo mode = CompareTo::Label) {
  CapacityReport rep;
  rep.per_example.reserve(ds.size());
  for (const auto& ex : ds.examples) {
    int n = ex.n();
    if (n < 2) {
      ++rep.skipped;
      rep.per_example.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    int target = mode == CompareTo::Label ? ex.chosen : model.predict(ex.items);
    int changes = 0;
    Tensor reduced = Tensor::zeros({n - 1, ex.d()});
    for (int drop = 0; drop < n; ++drop) {
      if (drop == ex.chosen) continue;
      int r = 0;
      for (int i = 0; i < n; ++i) {
        if (i == drop) continue;
        for (int j = 0; j < ex.d(); ++j) reduced.at(r, j) = ex.items.at(i, j);
        ++r;
      }
      int pred = model.predict(reduced);
      int original = pred < drop ? pred : pred + 1;  // undo the index shift
      changes += original != target;
    }
    double kappa_ex = static_cast<double>(changes) / static_cast<double>(n - 1);
    rep.per_example.push_back(kappa_ex);
    rep.kappa += kappa_ex;
    ++rep.included;
  }
  if (rep.included > 0) rep.kappa /= static_cast<double>(rep.included);
  return rep;
}

struct RegionTable {
  struct Cell {
    std::string pattern;  // char j is '1' when model j predicted the label
    std::size_t count = 0;
    std::size_t included = 0;             // non-singleton examples in the cell
    std::vector<double> mean_kappa;       // per model, over included examples
  };
  std::vector<std::string> model_names;
  std::vector<Cell> cells;  // sorted by pattern
  std::size_t m = 0;

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : cells)
      rows.push_back({{"pattern", c.pattern},
                      {"count", c.count},
                      {"included", c.included},
                      {"mean_kappa", c.mean_kappa}});
    return {{"models", model_names}, {"m", m}, {"cells", rows}};
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "pattern,count,included";
    for (const auto& name : model_names) out << ",kappa_" << name;
    out << "\n";
    char buf[64];
    for (const auto& c : cells) {
      out << c.pattern << "," << c.count << "," << c.included;
      for (double k : c.mean_kappa) {
        std::snprintf(buf, sizeof(buf), "%.17g", k);
        out << "," << buf;
      }
      out << "\n";
    }
    return out.str();
  }
};

// Partition examples by which models predicted the label, and attach each
// model's mean deletion sensitivity within every cell.
inline RegionTable region_partition(const std::vector<const ChoiceModel*>& models,
                                    const std::vector<std::string>& names, const Dataset& ds,
                                    CompareTo mode = CompareTo::Label) {
  require(models.size() >= 2, "region_partition: at least two models required");
  require(models.size() == names.size(), "region_partition: one name per model");
  require(!ds.examples.empty(), "region_partition: empty dataset");

  std::vector<CapacityReport> caps;
  caps.reserve(models.size());
  for (const ChoiceModel* m : models) caps.push_back(violation_capacity(*m, ds, mode));

  struct Acc {
    std::size_t count = 0, included = 0;
    std::vector<double> kappa_sum;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& ex = ds.examples[i];
    std::string pattern(models.size(), '0');
    for (std::size_t j = 0; j < models.size(); ++j)
      if (models[j]->predict(ex.items) == ex.chosen) pattern[j] = '1';
    Acc& a = acc[pattern];
    if (a.kappa_sum.empty()) a.kappa_sum.assign(models.size(), 0.0);
    ++a.count;
    if (!std::isnan(caps[0].per_example[i])) {
      ++a.included;
      for (std::size_t j = 0; j < models.size(); ++j)
        a.kappa_sum[j] += caps[j].per_example[i];
    }
  }

  RegionTable table;
  table.model_names = names;
  table.m = ds.size();
  for (auto& [pattern, a] : acc) {
    RegionTable::Cell cell;
    cell.pattern = pattern;
    cell.count = a.count;
    cell.included = a.included;
    cell.mean_kappa.assign(models.size(), 0.0);
    if (a.included > 0)
      for (std::size_t j = 0; j < models.size(); ++j)
        cell.mean_kappa[j] = a.kappa_sum[j] / static_cast<double>(a.included);
    table.cells.push_back(std::move(cell));
  }
  return table;
}

}  // namespace setagg
