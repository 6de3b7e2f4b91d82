#pragma once

#include <string>
#include <vector>

#include "margo/core.hpp"
#include "margo/data.hpp"
#include "margo/model.hpp"

namespace margo::losses {

enum class Variant : uint8_t { full, no_weight, no_cal, no_two_stage, no_nograd };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct Hyperparams {
  double alpha = 0.1;
  double beta = 0.01;
  double tau = 5.0;
  int embed_dim = 64;
  int batch_size = 2048;
  int max_epochs = 100;
  int patience = 10;
  double learning_rate = 1e-4;
  std::vector<int> k_list = {10, 20};
  uint64_t seed = 42;
  Variant variant = Variant::full;
  // Off by default: the calibration target q = w_i + w_k is used literally
  // (sums to 2). Enabling divides q by 2; this shifts the loss value but
  // leaves its gradient unchanged.
  bool normalize_joint_weights = false;

  void validate() const;
};

// Supervision signal of one triplet. Constants to the gradient engine: the
// backward pass never differentiates through these unless the no_nograd
// variant explicitly asks for it.
struct ReliabilitySignal {
  Vec difference;   // d_uik, per modality
  Vec reliability;  // z_uik, probability vector
  double confidence = 0.0;  // gamma_uik in [0,1)
};

// -log sigmoid(y_ui - y_uk), evaluated as softplus(-(y_ui - y_uk)).
double bpr_loss(double y_ui, double y_uk);

// Per-modality rating margins of the positive item over the negative one.
Vec difference_vector(const model::TripletScores& s);

// Identity on non-negative inputs; negative inputs collapse to -e^6 so their
// softmax mass vanishes.
double g_map(double x);

// z = softmax over modalities of g_map(d).
Vec reliability_vector(std::span<const double> difference);

// tanh((y_ui - y_uk)/tau) when the ranking is satisfied, else 0.
double confidence(double y_ui, double y_uk, double tau);

ReliabilitySignal make_signal(const model::TripletScores& s, double tau);

// gamma * sum_m z_m (log z_m - log q_m) with q = w_i + w_k taken literally
// (sum 2, not renormalized) unless normalize_joint is set. 0*log 0 counts as
// 0 and probabilities are clamped at 1e-300 inside the logs. Because q is
// unnormalized the value can be negative.
double calibration_loss(const ReliabilitySignal& sig, std::span<const double> w_pos,
                        std::span<const double> w_neg, bool normalize_joint = false);

// Square root of the sum of squares over all encoder parameters. Weight
// logits are not part of the regularized set.
double param_l2_norm(const model::ModelParams& p);

// Stage I: sum of BPR over the batch (uniform fusion) + beta * ||Theta||_2.
double stage1_loss(const std::vector<data::Triplet>& batch, const model::ModelParams& p,
                   const std::vector<data::ModalityFeatureTable>& features, double beta);

// Stage II: BPR (weighted fusion) + alpha * calibration + beta * ||Theta||_2.
// Signals are recomputed from the current ratings, then treated as constants.
double stage2_loss(const std::vector<data::Triplet>& batch, const model::ModelParams& p,
                   const std::vector<data::ModalityFeatureTable>& features, double alpha,
                   double beta, double tau, bool normalize_joint = false);

// Same objective with the supervision signals pinned to externally supplied
// values; this is the function the analytic gradient actually differentiates.
double stage2_loss_frozen_signals(const std::vector<data::Triplet>& batch,
                                  const model::ModelParams& p,
                                  const std::vector<data::ModalityFeatureTable>& features,
                                  const std::vector<ReliabilitySignal>& signals, double alpha,
                                  double beta, bool normalize_joint = false);

}  // namespace margo::losses
