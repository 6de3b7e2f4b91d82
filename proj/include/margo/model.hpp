#pragma once

#include <string>
#include <vector>

#include "margo/core.hpp"
#include "margo/data.hpp"

namespace margo::model {

// Stage I fuses modality ratings by plain summation; stage II by the item's
// softmax weights.
enum class Stage : uint8_t { I = 1, II = 2 };

// Per-modality trainables: user embedding table plus a linear item encoder
// that projects the raw feature vector into the shared embedding space.
struct ModalityParams {
  Mat user_embeddings;  // user_count x d
  Mat item_projection;  // d x dim_m
  Vec item_bias;        // d
};

// All trainables. Modality weights live as free per-item logits; the
// probability vector is materialized by modality_weights() at read time.
struct ModelParams {
  int user_count = 0;
  int item_count = 0;
  int modality_count = 0;
  int embed_dim = 0;
  std::vector<int> modality_dims;
  std::vector<ModalityParams> modalities;
  Mat weight_logits;  // item_count x M

  // Fingerprint over every parameter byte, in a fixed block order.
  uint64_t fingerprint() const;
};

// Forward pass of one triplet with everything the backward pass needs.
struct TripletScores {
  data::Triplet triplet;
  Stage stage = Stage::I;
  std::vector<Vec> e_u;        // per modality, d
  std::vector<Vec> e_pos;      // per modality, d
  std::vector<Vec> e_neg;      // per modality, d
  Vec pos_rating;              // per modality y_ui^m
  Vec neg_rating;              // per modality y_uk^m
  Vec w_pos;                   // softmax weights of pos item (stage II)
  Vec w_neg;
  double fused_pos = 0.0;      // y_ui
  double fused_neg = 0.0;      // y_uk
};

// Gaussian init, std 0.01 for embeddings / projections / weight logits,
// zero biases. Near-zero logits start the modality weights near uniform.
ModelParams init_params(int user_count, int item_count, int modality_count, int embed_dim,
                        const std::vector<int>& modality_dims, uint64_t seed);

// e_u^m = user row of U_m; e_i^m = P_m f_i^m + b_m.
void encode(const ModelParams& p, int user, int item, int m,
            const std::vector<data::ModalityFeatureTable>& features, Vec& e_u, Vec& e_i);

double modality_rating(std::span<const double> e_u, std::span<const double> e_i);

// softmax of the item's logit row.
Vec modality_weights(const ModelParams& p, int item);

double fuse_weighted(std::span<const double> weights, std::span<const double> ratings);
double fuse_uniform(std::span<const double> ratings);

TripletScores score_triplet(const ModelParams& p, const std::vector<data::ModalityFeatureTable>& features,
                            const data::Triplet& t, Stage stage);

// Per-modality encoded item table (item_count x d); lets full-catalog scoring
// reuse one encoding pass per item. OpenMP-parallel across items.
std::vector<Mat> encode_all_items(const ModelParams& p,
                                  const std::vector<data::ModalityFeatureTable>& features);
// Plain-loop reference for the kernel above; must agree bitwise.
std::vector<Mat> encode_all_items_serial(const ModelParams& p,
                                         const std::vector<data::ModalityFeatureTable>& features);

// Fused rating of user u against every item. Matches score_triplet pointwise.
Vec score_all_items(const ModelParams& p, const std::vector<data::ModalityFeatureTable>& features,
                    int user, Stage stage);
// Variant over a prebuilt item-encoding cache; serial, safe inside parallel loops.
Vec score_all_items_cached(const ModelParams& p, const std::vector<Mat>& item_enc, int user,
                           Stage stage);

// Versioned binary checkpoint ("MRGC"); round-trips bit-exactly.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace margo::model
