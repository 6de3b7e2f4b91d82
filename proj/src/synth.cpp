#include "margo/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

namespace margo::synth {

void SyntheticSpec::validate() const {
  if (user_count < 1 || item_count < 1 || latent_dim < 1 || interactions_per_user < 1)
    throw UsageError("synthetic spec: all counts must be >= 1");
  if (modality_dims.size() < 2) throw UsageError("synthetic spec: need at least 2 modalities");
  for (int d : modality_dims)
    if (d < 1) throw UsageError("synthetic spec: modality dims must be >= 1");
  if (corruption_fraction < 0.0 || corruption_fraction > 1.0)
    throw UsageError("synthetic spec: corruption_fraction must be in [0,1]");
  if (noise_scale <= 0.0) throw UsageError("synthetic spec: noise_scale must be > 0");
  if (corrupted_modality < 0 || corrupted_modality >= static_cast<int>(modality_dims.size()))
    throw UsageError("synthetic spec: corrupted_modality out of range");
  if (interactions_per_user >= item_count)
    throw UsageError("synthetic spec: interactions_per_user must be < item_count");
}

namespace {

Mat random_normal(int rows, int cols, double stddev, std::mt19937_64& rng) {
  Mat m(rows, cols);
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : m.a) v = normal(rng);
  return m;
}

std::string user_id(int u) { return "u" + std::to_string(u); }
std::string item_id(int i) { return "i" + std::to_string(i); }

}  // namespace

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  SyntheticData out;
  auto& truth = out.truth;
  truth.user_latent = random_normal(spec.user_count, spec.latent_dim, 1.0, rng);
  truth.item_latent = random_normal(spec.item_count, spec.latent_dim, 1.0, rng);

  // Interactions: Gumbel-top-k over latent dot products, which draws
  // interactions_per_user distinct items from the per-user softmax.
  std::uniform_real_distribution<double> unit(std::numeric_limits<double>::min(), 1.0);
  auto& ds = out.dataset;
  ds.user_count = spec.user_count;
  ds.item_count = spec.item_count;
  for (int u = 0; u < spec.user_count; ++u) ds.user_ids.push_back(user_id(u));
  for (int i = 0; i < spec.item_count; ++i) ds.item_ids.push_back(item_id(i));
  for (int u = 0; u < spec.user_count; ++u) ds.user_index[ds.user_ids[u]] = u;
  for (int i = 0; i < spec.item_count; ++i) ds.item_index[ds.item_ids[i]] = i;

  std::vector<std::pair<double, int>> keyed(spec.item_count);
  for (int u = 0; u < spec.user_count; ++u) {
    for (int i = 0; i < spec.item_count; ++i) {
      double score = 0.0;
      for (int j = 0; j < spec.latent_dim; ++j)
        score += truth.user_latent(u, j) * truth.item_latent(i, j);
      double gumbel = -std::log(-std::log(unit(rng)));
      keyed[i] = {score + gumbel, i};
    }
    std::partial_sort(keyed.begin(), keyed.begin() + spec.interactions_per_user, keyed.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int r = 0; r < spec.interactions_per_user; ++r)
      ds.interactions.push_back({u, keyed[r].second, data::Split::train});
  }
  ds.finalize();

  // Corrupted item set: seeded shuffle, first round(fraction * item_count).
  int n_corrupt = static_cast<int>(std::lround(spec.corruption_fraction * spec.item_count));
  std::vector<int> order(spec.item_count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  truth.corrupted_items.assign(order.begin(), order.begin() + n_corrupt);
  std::sort(truth.corrupted_items.begin(), truth.corrupted_items.end());
  truth.corrupted_flag.assign(spec.item_count, 0);
  for (int i : truth.corrupted_items) truth.corrupted_flag[i] = 1;

  // Features: fixed random linear expansion of the item latent plus small
  // noise; corrupted rows are replaced by pure noise (information destroyed).
  const int M = static_cast<int>(spec.modality_dims.size());
  std::normal_distribution<double> feature_noise(0.0, 0.1);
  std::normal_distribution<double> corrupt_noise(0.0, spec.noise_scale);
  for (int m = 0; m < M; ++m) {
    int dm = spec.modality_dims[m];
    truth.mixing.push_back(
        random_normal(dm, spec.latent_dim, 1.0 / std::sqrt(spec.latent_dim), rng));
    data::ModalityFeatureTable table;
    table.modality_id = m;
    table.dim = dm;
    table.features = Mat(spec.item_count, dm);
    const Mat& mix = truth.mixing[m];
    for (int i = 0; i < spec.item_count; ++i) {
      double* row = table.features.row(i);
      if (m == spec.corrupted_modality && truth.corrupted_flag[i]) {
        for (int c = 0; c < dm; ++c) row[c] = corrupt_noise(rng);
      } else {
        for (int c = 0; c < dm; ++c) {
          double v = 0.0;
          for (int j = 0; j < spec.latent_dim; ++j) v += mix(c, j) * truth.item_latent(i, j);
          row[c] = v + feature_noise(rng);
        }
      }
    }
    out.features.push_back(std::move(table));
  }
  return out;
}

void write_files(const SyntheticData& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream out(fs::path(dir) / "interactions.tsv");
    if (!out) throw DataError("cannot write interactions under " + dir);
    for (const auto& x : d.dataset.interactions)
      out << d.dataset.user_ids[x.user] << '\t' << d.dataset.item_ids[x.item] << '\n';
  }

  char buf[32];
  for (size_t m = 0; m < d.features.size(); ++m) {
    std::ofstream out(fs::path(dir) / ("features_m" + std::to_string(m) + ".tsv"));
    if (!out) throw DataError("cannot write features under " + dir);
    const auto& table = d.features[m];
    for (int i = 0; i < table.features.rows; ++i) {
      out << d.dataset.item_ids[i] << '\t';
      const double* row = table.features.row(i);
      for (int c = 0; c < table.dim; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", row[c]);
        out << (c ? "," : "") << buf;
      }
      out << '\n';
    }
  }

  {
    std::ofstream out(fs::path(dir) / "ground_truth.tsv");
    if (!out) throw DataError("cannot write ground truth under " + dir);
    for (int i = 0; i < d.dataset.item_count; ++i)
      out << d.dataset.item_ids[i] << '\t' << int(d.truth.corrupted_flag[i]) << '\n';
  }
}

GroundTruth load_ground_truth(const std::string& path, const data::InteractionDataset& ds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth file: " + path);
  GroundTruth truth;
  truth.corrupted_flag.assign(ds.item_count, 0);
  std::vector<uint8_t> seen(ds.item_count, 0);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ": malformed line " + std::to_string(lineno));
    std::string item_raw = line.substr(0, tab);
    std::string flag = line.substr(tab + 1);
    auto it = ds.item_index.find(item_raw);
    if (it == ds.item_index.end())
      throw DataError(path + ": unknown item '" + item_raw + "' at line " +
                      std::to_string(lineno));
    if (flag != "0" && flag != "1")
      throw DataError(path + ": flag must be 0 or 1 at line " + std::to_string(lineno));
    truth.corrupted_flag[it->second] = flag == "1" ? 1 : 0;
    seen[it->second] = 1;
  }
  for (int i = 0; i < ds.item_count; ++i)
    if (!seen[i]) throw DataError(path + ": missing item '" + ds.item_ids[i] + "'");
  for (int i = 0; i < ds.item_count; ++i)
    if (truth.corrupted_flag[i]) truth.corrupted_items.push_back(i);
  return truth;
}

}  // namespace margo::synth
