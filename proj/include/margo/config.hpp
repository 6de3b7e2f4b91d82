#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "margo/losses.hpp"
#include "margo/train.hpp"

namespace margo::config {

// Flat key=value file. '#' starts a comment; blank lines are skipped.
std::map<std::string, std::string> parse_file(const std::string& path);

// Run configuration resolved from defaults, then config file, then explicit
// CLI overrides (highest precedence).
struct RunConfig {
  train::TrainRunConfig train;
  std::string interactions_path;
  std::vector<std::string> feature_paths;  // one per modality, in modality order
  std::string ground_truth_path;
  std::string out_dir = "out";
  bool feature_cache = false;
  // Grid mode: full alpha x tau cross product (comma lists).
  std::vector<double> alpha_grid;
  std::vector<double> tau_grid;
};

RunConfig resolve(const std::map<std::string, std::string>& file_values,
                  const std::map<std::string, std::string>& overrides, bool allow_grid);

std::vector<double> parse_double_list(const std::string& s, const std::string& key);
std::vector<int> parse_int_list(const std::string& s, const std::string& key);

// Serializes the effective configuration; every run echoes this next to its
// outputs for reproducibility.
std::string effective_config(const RunConfig& cfg);

}  // namespace margo::config
