#pragma once

#include <string>
#include <vector>

#include "margo/data.hpp"
#include "margo/eval.hpp"
#include "margo/losses.hpp"
#include "margo/model.hpp"
#include "margo/synth.hpp"

namespace margo::analysis {

struct Histogram {
  Vec edges;                 // bins+1 edges over [0,1]
  std::vector<int> counts;   // per bin; sums to item_count
};

// Distribution of one modality's softmax weight across items, over `bins`
// equal-width bins spanning [0,1].
Histogram weight_histogram(const model::ModelParams& p, int modality_id, int bins);

struct WeightStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// Mean and dispersion of one modality's weight across items.
WeightStats weight_stats(const model::ModelParams& p, int modality_id);

void write_histogram_tsv(const Histogram& h, const std::string& path);

struct ConflictProbe {
  double inner_product = 0.0;
  bool violation = false;          // inner_product < 0
  bool precondition_held = false;  // every positive-item modality rating >= 0
};

// Gradients of the ranking loss and the calibration loss taken directly with
// respect to the positive items' weight vectors (post-softmax view), summed
// over the batch, and their full inner product. Mirrors the convergence
// argument's parameterization rather than the logits used in training.
ConflictProbe conflict_probe(const std::vector<data::Triplet>& batch,
                             const model::ModelParams& p,
                             const std::vector<data::ModalityFeatureTable>& features,
                             const losses::Hyperparams& hp);

struct RecoveryScore {
  double mean_w_corrupted = 0.0;  // mean learned weight of the corrupted modality, corrupted items
  double mean_w_clean = 0.0;      // same over clean items
  double auc = 0.0;               // AUC of (1 - weight) as a corruption detector
};

RecoveryScore reliability_recovery_score(const model::ModelParams& p,
                                         const synth::GroundTruth& truth, int corrupted_modality);

struct VariantReport {
  std::string name;
  eval::EvalReport report;
};

// Aligned Recall/NDCG table per variant plus a relative-improvement row of
// the reference variant over the best of the others, (a-b)/b per metric.
std::string compare_variants(const std::vector<VariantReport>& reports,
                             const std::string& reference = "full");

}  // namespace margo::analysis
