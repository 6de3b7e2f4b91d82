#pragma once

#include <string>
#include <vector>

#include "margo/core.hpp"
#include "margo/data.hpp"

namespace margo::synth {

// Controls for the synthetic generator. One modality can be "corrupted":
// a fraction of items get that modality's feature row replaced by pure noise,
// destroying its information while the other modality stays predictive.
struct SyntheticSpec {
  int user_count = 300;
  int item_count = 200;
  int latent_dim = 8;
  std::vector<int> modality_dims = {32, 32};
  int interactions_per_user = 20;
  int corrupted_modality = 1;
  double corruption_fraction = 0.4;
  // Kept below the clean feature scale: corrupted ratings then sit inside the
  // clean rating range, where a reversed per-modality margin marks the
  // modality unreliable instead of being censored by the confidence gate.
  double noise_scale = 0.35;
  uint64_t seed = 7;

  void validate() const;
};

struct GroundTruth {
  std::vector<int> corrupted_items;         // sorted item indices
  std::vector<uint8_t> corrupted_flag;      // per item
  Mat user_latent;                          // user_count x latent_dim
  Mat item_latent;                          // item_count x latent_dim
  std::vector<Mat> mixing;                  // per modality: dim x latent_dim expansion
};

struct SyntheticData {
  data::InteractionDataset dataset;  // unsplit
  std::vector<data::ModalityFeatureTable> features;
  GroundTruth truth;
};

SyntheticData generate(const SyntheticSpec& spec);

// Writes interactions.tsv, features_m<m>.tsv and ground_truth.tsv under dir,
// in the same text formats the loaders read.
void write_files(const SyntheticData& d, const std::string& dir);

// Reads `item<TAB>corrupted_flag` back against a loaded dataset. Only the
// corruption fields of the result are populated.
GroundTruth load_ground_truth(const std::string& path, const data::InteractionDataset& ds);

}  // namespace margo::synth
