#pragma once

#include <optional>
#include <string>
#include <vector>

#include "margo/data.hpp"
#include "margo/eval.hpp"
#include "margo/losses.hpp"
#include "margo/model.hpp"

namespace margo::train {

struct TrainRunConfig {
  losses::Hyperparams hp;
  int eval_every = 1;  // validation cadence in epochs
};

struct EpochRecord {
  int epoch = 0;        // strictly increasing across stages
  model::Stage stage = model::Stage::I;
  double mean_rec = 0.0;
  double mean_cal = 0.0;
  double mean_gamma = 0.0;
  double val_recall20 = 0.0;
  // Conflict probe over the first batch of the epoch (stage II only).
  double probe_inner = 0.0;
  int probe_violation = 0;
  int probe_precondition = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  uint64_t stage1_best_fingerprint = 0;  // 0 until stage I finished
  uint64_t stage2_init_fingerprint = 0;  // 0 unless stage II ran

  void write_tsv(const std::string& path) const;
};

struct TrainResult {
  model::ModelParams params;            // best-validation checkpoint
  std::optional<model::ModelParams> stage1_params;  // best of stage I, when it ran
  TrainLog log;
  model::Stage eval_stage = model::Stage::II;  // fusion mode the model is evaluated with
};

// Stage I of the two-stage schedule: uniform fusion, BPR + L2 only, weight
// logits held fixed. Early stops on validation Recall@20; returns the
// best-validation parameters.
TrainResult train_stage1(const TrainRunConfig& cfg, const data::InteractionDataset& ds,
                         const std::vector<data::ModalityFeatureTable>& features);

// Stage II: weighted fusion; the calibration term supervises the weights with
// signals recomputed every step. Starts from the given parameters.
TrainResult train_stage2(const model::ModelParams& start, const TrainRunConfig& cfg,
                         const data::InteractionDataset& ds,
                         const std::vector<data::ModalityFeatureTable>& features,
                         int first_epoch = 1);

// Dispatches the ablation variants:
//   full          stage I then stage II
//   no_weight     stage I only, evaluated with uniform fusion
//   no_cal        both stages with alpha forced to 0
//   no_two_stage  stage II from fresh init
//   no_nograd     stage II with gradients flowing through z and gamma
TrainResult run_variant(losses::Variant variant, const TrainRunConfig& cfg,
                        const data::InteractionDataset& ds,
                        const std::vector<data::ModalityFeatureTable>& features);

}  // namespace margo::train
