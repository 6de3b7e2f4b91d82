#include "margo/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace margo::config {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config: bad number for " + key + ": '" + v + "'");
  }
}

int to_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw UsageError("config: bad integer for " + key + ": '" + v + "'");
  }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<uint64_t>(x);
  } catch (const std::exception&) {
    throw UsageError("config: bad integer for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw UsageError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError(path + ": expected key=value at line " + std::to_string(lineno));
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw DataError(path + ": empty key at line " + std::to_string(lineno));
    out[key] = value;
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& tok : split_commas(s)) out.push_back(to_double(tok, key));
  if (out.empty()) throw UsageError("config: empty list for " + key);
  return out;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  for (const auto& tok : split_commas(s)) out.push_back(to_int(tok, key));
  if (out.empty()) throw UsageError("config: empty list for " + key);
  return out;
}

RunConfig resolve(const std::map<std::string, std::string>& file_values,
                  const std::map<std::string, std::string>& overrides, bool allow_grid) {
  RunConfig cfg;
  // flag > config file > default
  std::map<std::string, std::string> merged = file_values;
  for (const auto& [k, v] : overrides) merged[k] = v;

  for (const auto& [key, value] : merged) {
    auto& hp = cfg.train.hp;
    if (key == "alpha") {
      auto xs = parse_double_list(value, key);
      if (xs.size() > 1) {
        if (!allow_grid) throw UsageError("config: alpha list only allowed in grid mode");
        cfg.alpha_grid = xs;
      } else {
        hp.alpha = xs[0];
      }
    } else if (key == "tau") {
      auto xs = parse_double_list(value, key);
      if (xs.size() > 1) {
        if (!allow_grid) throw UsageError("config: tau list only allowed in grid mode");
        cfg.tau_grid = xs;
      } else {
        hp.tau = xs[0];
      }
    } else if (key == "beta") {
      hp.beta = to_double(value, key);
    } else if (key == "embed_dim") {
      hp.embed_dim = to_int(value, key);
    } else if (key == "lr") {
      hp.learning_rate = to_double(value, key);
    } else if (key == "batch_size") {
      hp.batch_size = to_int(value, key);
    } else if (key == "max_epochs") {
      hp.max_epochs = to_int(value, key);
    } else if (key == "patience") {
      hp.patience = to_int(value, key);
    } else if (key == "k_list") {
      hp.k_list = parse_int_list(value, key);
    } else if (key == "variant") {
      hp.variant = losses::variant_from_string(value);
    } else if (key == "seed") {
      hp.seed = to_u64(value, key);
    } else if (key == "normalize_joint_weights") {
      hp.normalize_joint_weights = to_bool(value, key);
    } else if (key == "eval_every") {
      cfg.train.eval_every = to_int(value, key);
    } else if (key == "interactions") {
      cfg.interactions_path = value;
    } else if (key == "features") {
      cfg.feature_paths = split_commas(value);
    } else if (key == "ground_truth") {
      cfg.ground_truth_path = value;
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else if (key == "feature_cache") {
      cfg.feature_cache = to_bool(value, key);
    } else {
      throw UsageError("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

std::string effective_config(const RunConfig& cfg) {
  const auto& hp = cfg.train.hp;
  std::ostringstream os;
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto join_d = [&num](const std::vector<double>& xs) {
    std::string s;
    for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + num(xs[i]);
    return s;
  };
  if (cfg.alpha_grid.size() > 1)
    os << "alpha=" << join_d(cfg.alpha_grid) << "\n";
  else
    os << "alpha=" << num(hp.alpha) << "\n";
  os << "beta=" << num(hp.beta) << "\n";
  if (cfg.tau_grid.size() > 1)
    os << "tau=" << join_d(cfg.tau_grid) << "\n";
  else
    os << "tau=" << num(hp.tau) << "\n";
  os << "embed_dim=" << hp.embed_dim << "\n";
  os << "lr=" << num(hp.learning_rate) << "\n";
  os << "batch_size=" << hp.batch_size << "\n";
  os << "max_epochs=" << hp.max_epochs << "\n";
  os << "patience=" << hp.patience << "\n";
  os << "k_list=";
  for (size_t i = 0; i < hp.k_list.size(); ++i) os << (i ? "," : "") << hp.k_list[i];
  os << "\n";
  os << "variant=" << losses::to_string(hp.variant) << "\n";
  os << "seed=" << hp.seed << "\n";
  os << "normalize_joint_weights=" << (hp.normalize_joint_weights ? 1 : 0) << "\n";
  os << "eval_every=" << cfg.train.eval_every << "\n";
  os << "interactions=" << cfg.interactions_path << "\n";
  os << "features=";
  for (size_t i = 0; i < cfg.feature_paths.size(); ++i)
    os << (i ? "," : "") << cfg.feature_paths[i];
  os << "\n";
  os << "ground_truth=" << cfg.ground_truth_path << "\n";
  os << "out_dir=" << cfg.out_dir << "\n";
  os << "feature_cache=" << (cfg.feature_cache ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace margo::config
