#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setagg/common.hpp"
#include "setagg/tensor.hpp"

namespace setagg {

// One choice task: a set of items (rows of `items`, each a length-d feature
// vector) and the index of the item that was chosen from the set.
struct ChoiceExample {
  Tensor items;  // {n, d}
  int chosen = 0;
  std::string group;  // source id, informational

  int n() const { return items.rows(); }
  int d() const { return items.cols(); }
};

struct Dataset {
  std::vector<ChoiceExample> examples;
  int d = 0;
  std::string provenance;

  std::size_t size() const { return examples.size(); }
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& s, const std::string& context) {
  std::string t = trim(s);
  if (t.empty()) throw DataError(context + ": empty numeric field");
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw DataError(context + ": bad number '" + t + "'");
  return v;
}

}  // namespace detail

// Reads `group_id,chosen,f1..fd` CSV. Rows of one group may appear anywhere in
// the file (grouping is by key); item order inside a group follows file order.
// Each group must mark exactly one row with chosen=1.
inline Dataset parse_grouped_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  std::vector<std::string> header = detail::split_fields(line);
  if (header.size() < 3 || detail::trim(header[0]) != "group_id" ||
      detail::trim(header[1]) != "chosen")
    throw DataError(path + ": header must be group_id,chosen,f1..fd");
  int d = static_cast<int>(header.size()) - 2;

  struct Group {
    std::vector<double> features;  // row-major
    std::vector<int> chosen_rows;
    int rows = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f = detail::split_fields(line);
    std::string gid = detail::trim(f[0]);
    if (static_cast<int>(f.size()) != d + 2)
      throw DataError(path + ":" + std::to_string(lineno) + ": group '" + gid + "': expected " +
                      std::to_string(d + 2) + " fields, got " + std::to_string(f.size()));
    auto it = groups.find(gid);
    if (it == groups.end()) {
      order.push_back(gid);
      it = groups.emplace(gid, Group{}).first;
    }
    Group& g = it->second;
    double ch = detail::parse_number(f[1], "chosen column");
    if (ch != 0.0 && ch != 1.0)
      throw DataError(path + ": group '" + gid + "': chosen must be 0 or 1");
    if (ch == 1.0) g.chosen_rows.push_back(g.rows);
    for (int j = 0; j < d; ++j)
      g.features.push_back(detail::parse_number(f[static_cast<std::size_t>(j) + 2],
                                                "feature column " + std::to_string(j + 1)));
    ++g.rows;
  }
  if (order.empty()) throw DataError(path + ": no data rows (empty dataset)");

  Dataset ds;
  ds.d = d;
  ds.provenance = "csv:" + path;
  for (const std::string& gid : order) {
    Group& g = groups[gid];
    if (g.chosen_rows.size() != 1)
      throw DataError(path + ": group '" + gid + "' has " + std::to_string(g.chosen_rows.size()) +
                      " chosen rows, expected exactly 1");
    ChoiceExample ex;
    ex.items = Tensor::matrix(g.rows, d, std::move(g.features));
    ex.chosen = g.chosen_rows[0];
    ex.group = gid;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// One JSON object per line: {"items": [[...], ...], "chosen": n}
inline Dataset parse_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  Dataset ds;
  ds.provenance = "jsonl:" + path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("items") || !j.contains("chosen"))
      throw DataError(path + ":" + std::to_string(lineno) + ": need 'items' and 'chosen'");
    const auto& items = j["items"];
    if (!items.is_array() || items.empty())
      throw DataError(path + ":" + std::to_string(lineno) + ": items must be a non-empty array");
    int n = static_cast<int>(items.size());
    int d = static_cast<int>(items[0].size());
    if (ds.d == 0)
      ds.d = d;
    else if (d != ds.d)
      throw DataError(path + ":" + std::to_string(lineno) + ": feature dimension " +
                      std::to_string(d) + " != " + std::to_string(ds.d));
    ChoiceExample ex;
    ex.items = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(items[static_cast<std::size_t>(i)].size()) != d)
        throw DataError(path + ":" + std::to_string(lineno) + ": ragged item rows");
      for (int k = 0; k < d; ++k)
        ex.items.at(i, k) = items[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
    int chosen = j["chosen"].get<int>();
    if (chosen < 0 || chosen >= n)
      throw DataError(path + ":" + std::to_string(lineno) + ": chosen out of range");
    ex.chosen = chosen;
    ex.group = "line" + std::to_string(lineno);
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw DataError(path + ": no data rows (empty dataset)");
  return ds;
}

inline void write_grouped_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  out << "group_id,chosen";
  for (int j = 1; j <= ds.d; ++j) out << ",f" << j;
  out << "\n";
  char buf[40];
  for (std::size_t e = 0; e < ds.examples.size(); ++e) {
    const ChoiceExample& ex = ds.examples[e];
    std::string gid = ex.group.empty() ? "g" + std::to_string(e) : ex.group;
    for (int i = 0; i < ex.n(); ++i) {
      out << gid << ',' << (i == ex.chosen ? 1 : 0);
      for (int j = 0; j < ds.d; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", ex.items.at(i, j));
        out << ',' << buf;
      }
      out << "\n";
    }
  }
}

struct SplitResult {
  Dataset train, validation, test;
};

// Deterministic 50:25:25 split: train gets ceil(m/2) examples, validation
// floor(m/4), test the remainder.
inline SplitResult split(const Dataset& ds, std::uint64_t seed) {
  std::size_t m = ds.size();
  if (m < 4) throw ContractError("split: need at least 4 examples, got " + std::to_string(m));
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::size_t n_train = (m + 1) / 2;
  std::size_t n_val = m / 4;
  SplitResult out;
  out.train.d = out.validation.d = out.test.d = ds.d;
  out.train.provenance = ds.provenance + "/train";
  out.validation.provenance = ds.provenance + "/validation";
  out.test.provenance = ds.provenance + "/test";
  for (std::size_t i = 0; i < m; ++i) {
    const ChoiceExample& ex = ds.examples[idx[i]];
    if (i < n_train)
      out.train.examples.push_back(ex);
    else if (i < n_train + n_val)
      out.validation.examples.push_back(ex);
    else
      out.test.examples.push_back(ex);
  }
  return out;
}

// Per-feature z-scoring transform fit on training items. Features whose
// training standard deviation is below 1e-12 are centered but not scaled.
struct FeatureTransform {
  std::vector<double> mean, stdev;

  void apply(Dataset& ds) const {
    for (ChoiceExample& ex : ds.examples)
      for (int i = 0; i < ex.n(); ++i)
        for (int j = 0; j < ex.d(); ++j) {
          double& x = ex.items.at(i, j);
          x = (x - mean[static_cast<std::size_t>(j)]) / stdev[static_cast<std::size_t>(j)];
        }
  }

  bool empty() const { return mean.empty(); }
};

// Fits the transform on `train` (statistics pooled over all items of all
// training sets) and applies it to train plus any further datasets.
inline FeatureTransform standardize(Dataset& train, const std::vector<Dataset*>& others = {}) {
  if (train.examples.empty()) throw ContractError("standardize: empty training split");
  int d = train.d;
  FeatureTransform ft;
  ft.mean.assign(static_cast<std::size_t>(d), 0.0);
  ft.stdev.assign(static_cast<std::size_t>(d), 0.0);
  std::size_t count = 0;
  for (const ChoiceExample& ex : train.examples) {
    count += static_cast<std::size_t>(ex.n());
    for (int i = 0; i < ex.n(); ++i)
      for (int j = 0; j < d; ++j) ft.mean[static_cast<std::size_t>(j)] += ex.items.at(i, j);
  }
  for (double& m : ft.mean) m /= static_cast<double>(count);
  for (const ChoiceExample& ex : train.examples)
    for (int i = 0; i < ex.n(); ++i)
      for (int j = 0; j < d; ++j) {
        double dv = ex.items.at(i, j) - ft.mean[static_cast<std::size_t>(j)];
        ft.stdev[static_cast<std::size_t>(j)] += dv * dv;
      }
  for (double& s : ft.stdev) {
    s = std::sqrt(s / static_cast<double>(count));
    if (s < 1e-12) s = 1.0;  // constant feature: center only
  }
  ft.apply(train);
  for (Dataset* o : others) ft.apply(*o);
  return ft;
}

}  // namespace setagg
