#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "margo/core.hpp"

namespace margo::data {

enum class Split : uint8_t { train = 0, val = 1, test = 2 };

struct Interaction {
  int user = 0;
  int item = 0;
  Split split = Split::train;
};

// User-item interactions with dense indices. Raw string ids are reindexed in
// first-appearance order, so reloading the same file reproduces the same maps.
struct InteractionDataset {
  int user_count = 0;
  int item_count = 0;
  std::vector<Interaction> interactions;
  bool split_done = false;

  std::vector<std::string> user_ids;  // index -> raw id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, int> user_index;  // raw id -> index
  std::unordered_map<std::string, int> item_index;

  // Sorted per-user item sets, rebuilt by finalize().
  std::vector<std::vector<int>> train_positives;  // only split==train
  std::vector<std::vector<int>> all_positives;    // every split

  std::vector<std::vector<int>> split_positives(Split s) const;

  // Rebuilds the per-user positive sets from `interactions`.
  void finalize();
};

// One modality's item feature matrix (item_count x dim, dense item order).
struct ModalityFeatureTable {
  int modality_id = 0;
  int dim = 0;
  Mat features;  // item_count x dim
};

struct Triplet {
  int user = 0;
  int pos_item = 0;
  int neg_item = 0;
};

// Reads `user<TAB>item` lines. Duplicate pairs collapse to one interaction.
InteractionDataset load_interactions(const std::string& path);

// Reads `item<TAB>f1,f2,...,fd` lines; every item of `ds` must be present
// exactly once and all rows must share one dimension.
ModalityFeatureTable load_modality_features(const std::string& path, int modality_id,
                                            const InteractionDataset& ds);

// Binary feature cache ("MRGF"): u32 item_count, u32 dim, row-major f32.
// Derived data for fast reload; float32 rounding makes it lossy vs the TSV.
void save_feature_cache(const ModalityFeatureTable& table, const std::string& path);
ModalityFeatureTable load_feature_cache(const std::string& path, int modality_id);

// Per-user random split. Each user's interactions are shuffled and partitioned
// by rounding count*ratio for val and test, with at least one interaction kept
// in train. Deterministic for a fixed seed.
void split_dataset(InteractionDataset& ds, const std::array<double, 3>& ratios, uint64_t seed);

// Draws `count` training triplets: positives cycle through a seeded shuffle of
// the train interactions (reshuffled each pass), negatives are rejection
// sampled uniformly outside the user's positives in every split.
std::vector<Triplet> sample_triplets(const InteractionDataset& ds, int count, uint64_t seed);

}  // namespace margo::data
