#include "margo/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace margo::data {

namespace {

int intern(const std::string& raw, std::unordered_map<std::string, int>& index,
           std::vector<std::string>& ids) {
  auto it = index.find(raw);
  if (it != index.end()) return it->second;
  int idx = static_cast<int>(ids.size());
  index.emplace(raw, idx);
  ids.push_back(raw);
  return idx;
}

// Splits a line at its single tab. Lines with zero or multiple tabs, or an
// empty field, are malformed.
bool split_tab(const std::string& line, std::string& left, std::string& right) {
  auto tab = line.find('\t');
  if (tab == std::string::npos) return false;
  if (line.find('\t', tab + 1) != std::string::npos) return false;
  left = line.substr(0, tab);
  right = line.substr(tab + 1);
  return !left.empty() && !right.empty();
}

}  // namespace

std::vector<std::vector<int>> InteractionDataset::split_positives(Split s) const {
  std::vector<std::vector<int>> out(user_count);
  for (const auto& x : interactions)
    if (x.split == s) out[x.user].push_back(x.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

void InteractionDataset::finalize() {
  train_positives.assign(user_count, {});
  all_positives.assign(user_count, {});
  for (const auto& x : interactions) {
    all_positives[x.user].push_back(x.item);
    if (x.split == Split::train) train_positives[x.user].push_back(x.item);
  }
  for (auto& v : train_positives) std::sort(v.begin(), v.end());
  for (auto& v : all_positives) std::sort(v.begin(), v.end());
}

InteractionDataset load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path);

  InteractionDataset ds;
  std::vector<std::pair<int, int>> pairs;
  std::string line, user_raw, item_raw;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;  // trailing newline
    if (!split_tab(line, user_raw, item_raw))
      throw DataError(path + ": malformed interaction at line " + std::to_string(lineno));
    int u = intern(user_raw, ds.user_index, ds.user_ids);
    int i = intern(item_raw, ds.item_index, ds.item_ids);
    pairs.emplace_back(u, i);
  }
  if (pairs.empty()) throw DataError(path + ": no interactions");

  ds.user_count = static_cast<int>(ds.user_ids.size());
  ds.item_count = static_cast<int>(ds.item_ids.size());

  // Collapse duplicate pairs, keeping first-appearance order.
  std::vector<std::vector<int>> seen(ds.user_count);
  for (auto [u, i] : pairs) {
    auto& s = seen[u];
    if (std::find(s.begin(), s.end(), i) != s.end()) continue;
    s.push_back(i);
    ds.interactions.push_back({u, i, Split::train});
  }
  ds.finalize();
  return ds;
}

ModalityFeatureTable load_modality_features(const std::string& path, int modality_id,
                                            const InteractionDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file: " + path);

  ModalityFeatureTable table;
  table.modality_id = modality_id;

  std::vector<Vec> rows(ds.item_count);
  std::vector<uint8_t> have(ds.item_count, 0);
  std::string line, item_raw, values;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    if (!split_tab(line, item_raw, values))
      throw DataError(path + ": malformed feature line " + std::to_string(lineno));
    auto it = ds.item_index.find(item_raw);
    if (it == ds.item_index.end())
      throw DataError(path + ": unknown item '" + item_raw + "' at line " +
                      std::to_string(lineno));
    int idx = it->second;
    if (have[idx])
      throw DataError(path + ": duplicate feature row for item '" + item_raw + "'");

    Vec row;
    std::stringstream ss(values);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      size_t pos = 0;
      double v;
      try {
        v = std::stod(tok, &pos);
      } catch (const std::exception&) {
        throw DataError(path + ": bad value '" + tok + "' at line " + std::to_string(lineno));
      }
      if (pos != tok.size())
        throw DataError(path + ": bad value '" + tok + "' at line " + std::to_string(lineno));
      if (!std::isfinite(v))
        throw DataError(path + ": non-finite value at line " + std::to_string(lineno));
      row.push_back(v);
    }
    if (row.empty())
      throw DataError(path + ": empty feature row at line " + std::to_string(lineno));
    if (table.dim == 0)
      table.dim = static_cast<int>(row.size());
    else if (static_cast<int>(row.size()) != table.dim)
      throw DataError(path + ": inconsistent dimension at line " + std::to_string(lineno) +
                      " (expected " + std::to_string(table.dim) + ", got " +
                      std::to_string(row.size()) + ")");
    rows[idx] = std::move(row);
    have[idx] = 1;
  }

  for (int i = 0; i < ds.item_count; ++i)
    if (!have[i])
      throw DataError(path + ": incomplete modality " + std::to_string(modality_id) +
                      ": missing item '" + ds.item_ids[i] + "'");

  table.features = Mat(ds.item_count, table.dim);
  for (int i = 0; i < ds.item_count; ++i)
    std::copy(rows[i].begin(), rows[i].end(), table.features.row(i));
  return table;
}

void save_feature_cache(const ModalityFeatureTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature cache: " + path);
  out.write("MRGF", 4);
  uint32_t n = static_cast<uint32_t>(table.features.rows);
  uint32_t d = static_cast<uint32_t>(table.dim);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  for (double v : table.features.a) {
    float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!out) throw DataError("short write on feature cache: " + path);
}

ModalityFeatureTable load_feature_cache(const std::string& path, int modality_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MRGF", 4) != 0)
    throw DataError(path + ": not a feature cache (bad magic)");
  uint32_t n = 0, d = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  if (!in || d == 0) throw DataError(path + ": corrupt feature cache header");

  ModalityFeatureTable table;
  table.modality_id = modality_id;
  table.dim = static_cast<int>(d);
  table.features = Mat(static_cast<int>(n), static_cast<int>(d));
  for (auto& v : table.features.a) {
    float f;
    in.read(reinterpret_cast<char*>(&f), 4);
    if (!in) throw DataError(path + ": truncated feature cache");
    v = static_cast<double>(f);
  }
  return table;
}

void split_dataset(InteractionDataset& ds, const std::array<double, 3>& ratios, uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");

  // Group interaction indices per user, preserving file order within a user.
  std::vector<std::vector<int>> by_user(ds.user_count);
  for (int n = 0; n < static_cast<int>(ds.interactions.size()); ++n)
    by_user[ds.interactions[n].user].push_back(n);

  std::mt19937_64 rng(seed);
  for (int u = 0; u < ds.user_count; ++u) {
    auto& idx = by_user[u];
    std::shuffle(idx.begin(), idx.end(), rng);
    int n = static_cast<int>(idx.size());
    int n_val = static_cast<int>(std::lround(ratios[1] * n));
    int n_test = static_cast<int>(std::lround(ratios[2] * n));
    // Keep at least one training interaction: shrink test first, then val.
    while (n - n_val - n_test < 1 && n_test > 0) --n_test;
    while (n - n_val - n_test < 1 && n_val > 0) --n_val;
    int n_train = n - n_val - n_test;
    for (int r = 0; r < n; ++r) {
      Split s = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
      ds.interactions[idx[r]].split = s;
    }
  }
  ds.split_done = true;
  ds.finalize();
}

std::vector<Triplet> sample_triplets(const InteractionDataset& ds, int count, uint64_t seed) {
  if (!ds.split_done) throw UsageError("sample_triplets: dataset not split");
  std::vector<std::pair<int, int>> train_pairs;
  for (const auto& x : ds.interactions)
    if (x.split == Split::train) train_pairs.emplace_back(x.user, x.item);
  if (train_pairs.empty()) throw UsageError("sample_triplets: no training interactions");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> item_dist(0, ds.item_count - 1);

  std::vector<Triplet> out;
  out.reserve(count);
  size_t cursor = train_pairs.size();  // forces an initial shuffle
  for (int n = 0; n < count; ++n) {
    if (cursor == train_pairs.size()) {
      std::shuffle(train_pairs.begin(), train_pairs.end(), rng);
      cursor = 0;
    }
    auto [u, i] = train_pairs[cursor++];
    const auto& pos = ds.all_positives[u];
    if (static_cast<int>(pos.size()) >= ds.item_count)
      throw DataError("user " + ds.user_ids[u] + " interacted with every item; cannot sample a negative");
    int k = -1;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      int cand = item_dist(rng);
      if (!std::binary_search(pos.begin(), pos.end(), cand)) {
        k = cand;
        break;
      }
    }
    if (k < 0)
      throw DataError("negative sampling exceeded 1000 rejections for user " + ds.user_ids[u]);
    out.push_back({u, i, k});
  }
  return out;
}

}  // namespace margo::data
