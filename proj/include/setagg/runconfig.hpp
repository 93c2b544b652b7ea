#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "setagg/generator.hpp"
#include "setagg/model.hpp"
#include "setagg/training.hpp"

namespace setagg {

// ---------------------------------------------------------------------------
// TOML-subset parser.  Run configuration files use a small, strict slice of
// TOML: [section] and [[array-of-tables]] headers with dotted paths,
// key = value lines with strings, booleans, integers, floats, and arrays
// (arrays may span multiple lines until their brackets balance), and #
// comments outside strings.  The parse result is a JSON tree so the rest of
// the pipeline speaks one configuration language; a JSON file is accepted
// directly wherever a TOML file is.
// ---------------------------------------------------------------------------

namespace toml_detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Cuts a # comment, honoring double-quoted strings and escapes inside them.
inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

// Net bracket depth outside strings; positive means an array is still open.
inline int bracket_balance(const std::string& s) {
  bool in_str = false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      in_str = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

inline ConfigError parse_error(int line, const std::string& what) {
  return ConfigError("config line " + std::to_string(line) + ": " + what);
}

inline std::string decode_string(const std::string& s, int line) {
  // s includes the surrounding quotes
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    char c = s[i];
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (i + 2 >= s.size()) throw parse_error(line, "dangling escape in string");
    char e = s[++i];
    switch (e) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      default: throw parse_error(line, std::string("unsupported escape \\") + e);
    }
  }
  return out;
}

// Splits "a, [1, 2], \"x,y\"" on top-level commas.
inline std::vector<std::string> split_top_level(const std::string& s, int line) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_str = false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      cur.push_back(c);
      if (c == '\\' && i + 1 < s.size()) cur.push_back(s[++i]);
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') {
      in_str = true;
      cur.push_back(c);
    } else if (c == '[') {
      ++depth;
      cur.push_back(c);
    } else if (c == ']') {
      --depth;
      if (depth < 0) throw parse_error(line, "unbalanced ']' in value");
      cur.push_back(c);
    } else if (c == ',' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (in_str) throw parse_error(line, "unterminated string");
  if (depth != 0) throw parse_error(line, "unbalanced '[' in value");
  parts.push_back(cur);
  return parts;
}

inline nlohmann::json parse_value(const std::string& raw, int line) {
  std::string s = trim(raw);
  if (s.empty()) throw parse_error(line, "missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"' || bracket_balance(s) != 0)
      throw parse_error(line, "malformed string value");
    // reject trailing garbage such as "a" b by re-scanning for the close
    bool in_str = true;
    for (std::size_t i = 1; i < s.size(); ++i) {
      char c = s[i];
      if (c == '\\') { ++i; continue; }
      if (c == '"') {
        if (i + 1 != s.size()) throw parse_error(line, "unexpected text after string");
        in_str = false;
      }
    }
    if (in_str) throw parse_error(line, "unterminated string");
    return decode_string(s, line);
  }
  if (s == "true") return true;
  if (s == "false") return false;
  if (s.front() == '[') {
    if (s.back() != ']') throw parse_error(line, "unterminated array");
    std::string inner = trim(s.substr(1, s.size() - 2));
    nlohmann::json arr = nlohmann::json::array();
    if (inner.empty()) return arr;
    std::vector<std::string> parts = split_top_level(inner, line);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      std::string p = trim(parts[i]);
      if (p.empty()) {
        if (i + 1 == parts.size()) continue;  // trailing comma
        throw parse_error(line, "empty array element");
      }
      arr.push_back(parse_value(p, line));
    }
    return arr;
  }
  // number: plain integers stay integral, everything else must parse as double
  bool integral = true;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) integral = false;
  }
  if (s == "+" || s == "-") integral = false;
  try {
    if (integral) return static_cast<std::int64_t>(std::stoll(s));
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error(line, "cannot parse value '" + s + "'");
  }
}

inline std::vector<std::string> split_dotted(const std::string& key, int line) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      if (trim(cur).empty()) throw parse_error(line, "empty path segment in '" + key + "'");
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (trim(cur).empty()) throw parse_error(line, "empty path segment in '" + key + "'");
  parts.push_back(trim(cur));
  for (std::string& p : parts)
    if (p.size() >= 2 && p.front() == '"' && p.back() == '"') p = decode_string(p, line);
  return parts;
}

// Walks (and creates) the table path for a header; the last segment becomes a
// fresh element when `array_of_tables` is set.
inline nlohmann::json* open_table(nlohmann::json& root, const std::vector<std::string>& path,
                                  bool array_of_tables, int line) {
  nlohmann::json* node = &root;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const std::string& seg = path[i];
    bool last = i + 1 == path.size();
    nlohmann::json& child = (*node)[seg];
    if (last && array_of_tables) {
      if (child.is_null()) child = nlohmann::json::array();
      if (!child.is_array()) throw parse_error(line, "'" + seg + "' is not an array of tables");
      child.push_back(nlohmann::json::object());
      return &child.back();
    }
    if (child.is_null()) child = nlohmann::json::object();
    if (child.is_array()) {
      if (child.empty() || !child.back().is_object())
        throw parse_error(line, "cannot extend array '" + seg + "' with a table");
      node = &child.back();
    } else if (child.is_object()) {
      node = &child;
    } else {
      throw parse_error(line, "'" + seg + "' already holds a value");
    }
  }
  return node;
}

}  // namespace toml_detail

inline nlohmann::json parse_toml(const std::string& text) {
  using namespace toml_detail;
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;

  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }

  for (std::size_t li = 0; li < lines.size(); ++li) {
    int line_no = static_cast<int>(li) + 1;
    std::string line = trim(strip_comment(lines[li]));
    if (line.empty()) continue;

    if (line.front() == '[') {
      bool array_of_tables = line.size() > 1 && line[1] == '[';
      std::string close = array_of_tables ? "]]" : "]";
      std::size_t start = array_of_tables ? 2 : 1;
      std::size_t end = line.find(close, start);
      if (end == std::string::npos || !trim(line.substr(end + close.size())).empty())
        throw parse_error(line_no, "malformed table header");
      std::string inner = trim(line.substr(start, end - start));
      if (inner.empty()) throw parse_error(line_no, "empty table header");
      current = open_table(root, split_dotted(inner, line_no), array_of_tables, line_no);
      continue;
    }

    std::size_t eq = std::string::npos;
    {
      bool in_str = false;
      for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_str) {
          if (c == '\\') ++i;
          else if (c == '"') in_str = false;
        } else if (c == '"') {
          in_str = true;
        } else if (c == '=') {
          eq = i;
          break;
        }
      }
    }
    if (eq == std::string::npos) throw parse_error(line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw parse_error(line_no, "missing key");
    std::string value = trim(line.substr(eq + 1));

    // pull in continuation lines while an array stays open
    while (bracket_balance(value) > 0) {
      if (++li >= lines.size()) throw parse_error(line_no, "unterminated array");
      value += " " + trim(strip_comment(lines[li]));
    }

    std::vector<std::string> path = split_dotted(key, line_no);
    nlohmann::json* node = current;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      nlohmann::json& child = (*node)[path[i]];
      if (child.is_null()) child = nlohmann::json::object();
      if (!child.is_object()) throw parse_error(line_no, "'" + path[i] + "' already holds a value");
      node = &child;
    }
    (*node)[path.back()] = parse_value(value, line_no);
  }
  return root;
}

// Reads a configuration file; `.json` files are parsed as JSON, anything else
// as the TOML subset above.
inline nlohmann::json parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    try {
      return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config JSON parse error: ") + e.what());
    }
  }
  return parse_toml(buf.str());
}

// ---------------------------------------------------------------------------
// Generator spec <-> JSON
// ---------------------------------------------------------------------------

inline nlohmann::json generator_to_json(const GeneratorSpec& g) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : g.components) comps.push_back({{"weight", c.weight}, {"theta", c.theta}});
  return {{"kind", g.kind == GeneratorKind::Mnl ? "mnl" : "mixture_mnl"},
          {"d", g.d},
          {"m", g.m},
          {"set_size_min", g.set_size_min},
          {"set_size_max", g.set_size_max},
          {"temperature", g.temperature},
          {"seed", g.seed},
          {"components", comps}};
}

inline GeneratorSpec generator_from_json(const nlohmann::json& j) {
  GeneratorSpec g;
  std::string kind = j.value("kind", std::string("mnl"));
  if (kind == "mnl")
    g.kind = GeneratorKind::Mnl;
  else if (kind == "mixture_mnl")
    g.kind = GeneratorKind::MixtureMnl;
  else
    throw ConfigError("generator: unknown kind '" + kind + "' (expected mnl or mixture_mnl)");
  g.d = j.value("d", 0);
  g.m = j.value("m", 0);
  g.set_size_min = j.value("set_size_min", 1);
  g.set_size_max = j.value("set_size_max", g.set_size_min);
  g.temperature = j.value("temperature", 1.0);
  g.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("components")) {
    for (const auto& cj : j.at("components")) {
      GeneratorSpec::Component c;
      c.weight = cj.value("weight", 1.0);
      if (!cj.contains("theta")) throw ConfigError("generator component: theta is required");
      c.theta = cj.at("theta").get<std::vector<double>>();
      g.components.push_back(std::move(c));
    }
  } else if (j.contains("theta")) {
    // single-component shorthand
    GeneratorSpec::Component c;
    c.weight = 1.0;
    c.theta = j.at("theta").get<std::vector<double>>();
    g.components.push_back(std::move(c));
  }
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// Resolved run configuration
// ---------------------------------------------------------------------------

namespace config_detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: [" + where + "] must be a table");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError("config: unknown key '" + item.key() + "' in [" + where + "]");
  }
}

}  // namespace config_detail

// A fully validated run description: one data source, a model architecture,
// training hyperparameters, a search space, output directory, and the seed
// list driving multi-seed commands.  resolved() emits a JSON echo that
// resolves back to the identical configuration.
struct RunConfig {
  enum class DataSource { None, File, Generator };

  DataSource source = DataSource::None;
  std::string data_path;
  int max_items = 0;  // drop examples whose sets exceed this size; 0 = no cap
  GeneratorSpec generator;
  AggregatorConfig model;
  TrainConfig train;
  SearchSpace search;
  std::string out_dir = "setagg_out";
  std::vector<unsigned long long> seeds;

  static RunConfig resolve(const nlohmann::json& tree) {
    using config_detail::reject_unknown;
    if (!tree.is_object()) throw ConfigError("config: top level must be a table");
    reject_unknown(tree,
                   {"data", "model", "train", "search", "output", "seeds", "seed_base", "n_seeds"},
                   "top level");
    RunConfig rc;
    rc.model = preset("sda_default");

    if (tree.contains("data")) {
      const nlohmann::json& dj = tree.at("data");
      reject_unknown(dj,
                     {"path", "kind", "d", "m", "set_size_min", "set_size_max", "temperature",
                      "seed", "components", "theta", "max_items"},
                     "data");
      rc.max_items = dj.value("max_items", 0);
      if (rc.max_items < 0) throw ConfigError("config: data.max_items must be >= 0");
      bool has_path = dj.contains("path");
      bool has_gen = dj.contains("kind") || dj.contains("m") || dj.contains("d");
      if (has_path && has_gen)
        throw ConfigError("config: [data] must specify exactly one of a file path or a generator");
      if (has_path) {
        rc.source = DataSource::File;
        rc.data_path = dj.at("path").get<std::string>();
        std::ifstream probe(rc.data_path);
        if (!probe) throw ConfigError("config: data file not found: " + rc.data_path);
      } else if (has_gen) {
        rc.source = DataSource::Generator;
        rc.generator = generator_from_json(dj);
      } else if (!dj.empty()) {
        throw ConfigError("config: [data] needs either path or generator fields");
      }
    }

    {
      nlohmann::json mj = tree.value("model", nlohmann::json::object());
      reject_unknown(mj,
                     {"preset", "mechanism", "ell", "h", "comparison", "mu", "w_mode", "r_mode",
                      "per_dim_kink"},
                     "model");
      if (mj.contains("mechanism")) {
        rc.model = AggregatorConfig::from_json(mj);
      } else {
        std::string p = mj.value("preset", std::string("sda_default"));
        rc.model = preset(p);
        using namespace enum_names;
        if (mj.contains("ell")) rc.model.ell = mj.at("ell").get<int>();
        if (mj.contains("h")) rc.model.h = mj.at("h").get<int>();
        if (mj.contains("comparison"))
          rc.model.comparison = comparison_from(mj.at("comparison").get<std::string>());
        if (mj.contains("mu")) rc.model.mu = mu_from(mj.at("mu").get<std::string>());
        if (mj.contains("w_mode")) rc.model.w_mode = w_mode_from(mj.at("w_mode").get<std::string>());
        if (mj.contains("r_mode")) rc.model.r_mode = r_mode_from(mj.at("r_mode").get<std::string>());
        if (mj.contains("per_dim_kink")) rc.model.per_dim_kink = mj.at("per_dim_kink").get<bool>();
        rc.model.validate();
      }
    }

    {
      nlohmann::json tj = tree.value("train", nlohmann::json::object());
      reject_unknown(tj,
                     {"learning_rate", "weight_decay", "dropout_keep", "batch_size", "decay_rate",
                      "decay_steps", "early_stop_window", "max_epochs", "seed"},
                     "train");
      rc.train = TrainConfig::from_json(tj);
    }

    {
      nlohmann::json sj = tree.value("search", nlohmann::json::object());
      reject_unknown(sj, {"trials", "lr_lo", "lr_hi", "wd_lo", "wd_hi", "keep_lo", "keep_hi"},
                     "search");
      rc.search.trials = sj.value("trials", rc.search.trials);
      rc.search.lr_lo = sj.value("lr_lo", rc.search.lr_lo);
      rc.search.lr_hi = sj.value("lr_hi", rc.search.lr_hi);
      rc.search.wd_lo = sj.value("wd_lo", rc.search.wd_lo);
      rc.search.wd_hi = sj.value("wd_hi", rc.search.wd_hi);
      rc.search.keep_lo = sj.value("keep_lo", rc.search.keep_lo);
      rc.search.keep_hi = sj.value("keep_hi", rc.search.keep_hi);
      rc.search.validate();
    }

    {
      nlohmann::json oj = tree.value("output", nlohmann::json::object());
      reject_unknown(oj, {"dir"}, "output");
      rc.out_dir = oj.value("dir", rc.out_dir);
      if (rc.out_dir.empty()) throw ConfigError("config: output.dir must not be empty");
    }

    if (tree.contains("seeds")) {
      if (tree.contains("seed_base") || tree.contains("n_seeds"))
        throw ConfigError("config: give either seeds or seed_base/n_seeds, not both");
      rc.seeds = tree.at("seeds").get<std::vector<unsigned long long>>();
      if (rc.seeds.empty()) throw ConfigError("config: seeds must not be empty");
    } else {
      unsigned long long base = tree.value("seed_base", 0ull);
      int n = tree.value("n_seeds", 10);
      if (n < 1) throw ConfigError("config: n_seeds must be >= 1");
      for (int i = 0; i < n; ++i) rc.seeds.push_back(base + static_cast<unsigned long long>(i));
    }
    return rc;
  }

  nlohmann::json resolved() const {
    nlohmann::json t = nlohmann::json::object();
    if (source == DataSource::File)
      t["data"] = {{"path", data_path}};
    else if (source == DataSource::Generator)
      t["data"] = generator_to_json(generator);
    if (source != DataSource::None && max_items > 0) t["data"]["max_items"] = max_items;
    t["model"] = model.to_json();
    t["train"] = train.to_json();
    t["search"] = {{"trials", search.trials},   {"lr_lo", search.lr_lo},
                   {"lr_hi", search.lr_hi},     {"wd_lo", search.wd_lo},
                   {"wd_hi", search.wd_hi},     {"keep_lo", search.keep_lo},
                   {"keep_hi", search.keep_hi}};
    t["output"] = {{"dir", out_dir}};
    t["seeds"] = seeds;
    return t;
  }

  Dataset load_data() const {
    Dataset ds;
    switch (source) {
      case DataSource::File: {
        bool jsonl = data_path.size() >= 6 &&
                     data_path.compare(data_path.size() - 6, 6, ".jsonl") == 0;
        ds = jsonl ? parse_jsonl(data_path) : parse_grouped_csv(data_path);
        break;
      }
      case DataSource::Generator:
        ds = generate(generator);
        break;
      case DataSource::None:
        throw ConfigError("config: this command needs a [data] section");
    }
    if (max_items > 0) {
      std::size_t before = ds.size();
      std::erase_if(ds.examples,
                    [&](const ChoiceExample& ex) { return ex.n() > max_items; });
      if (ds.examples.empty())
        throw DataError("max_items=" + std::to_string(max_items) + " filtered out all " +
                        std::to_string(before) + " examples");
    }
    return ds;
  }
};

}  // namespace setagg
