#include "margo/losses.hpp"

#include <algorithm>
#include <cmath>

namespace margo::losses {

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_weight") return Variant::no_weight;
  if (s == "no_cal") return Variant::no_cal;
  if (s == "no_two_stage") return Variant::no_two_stage;
  if (s == "no_nograd") return Variant::no_nograd;
  throw UsageError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_weight: return "no_weight";
    case Variant::no_cal: return "no_cal";
    case Variant::no_two_stage: return "no_two_stage";
    case Variant::no_nograd: return "no_nograd";
  }
  return "?";
}

void Hyperparams::validate() const {
  if (alpha < 0 || beta < 0) throw UsageError("alpha and beta must be >= 0");
  if (tau <= 0) throw UsageError("tau must be > 0");
  if (embed_dim < 1 || batch_size < 1 || max_epochs < 1)
    throw UsageError("embed_dim, batch_size, max_epochs must be >= 1");
  if (patience < 0) throw UsageError("patience must be >= 0");
  if (learning_rate <= 0) throw UsageError("learning rate must be > 0");
  if (k_list.empty()) throw UsageError("k_list must not be empty");
  for (int k : k_list)
    if (k < 1) throw UsageError("k_list entries must be >= 1");
}

double bpr_loss(double y_ui, double y_uk) {
  return softplus(-(y_ui - y_uk));
}

Vec difference_vector(const model::TripletScores& s) {
  Vec d(s.pos_rating.size());
  for (size_t m = 0; m < d.size(); ++m) d[m] = s.pos_rating[m] - s.neg_rating[m];
  return d;
}

double g_map(double x) {
  return x >= 0.0 ? x : g_negative_logit();
}

Vec reliability_vector(std::span<const double> difference) {
  Vec mapped(difference.size());
  for (size_t m = 0; m < difference.size(); ++m) mapped[m] = g_map(difference[m]);
  Vec z(difference.size());
  stable_softmax(mapped, z);
  return z;
}

double confidence(double y_ui, double y_uk, double tau) {
  if (tau <= 0) throw UsageError("confidence: tau must be > 0");
  if (y_ui <= y_uk) return 0.0;
  return std::tanh((y_ui - y_uk) / tau);
}

ReliabilitySignal make_signal(const model::TripletScores& s, double tau) {
  ReliabilitySignal sig;
  sig.difference = difference_vector(s);
  sig.reliability = reliability_vector(sig.difference);
  sig.confidence = confidence(s.fused_pos, s.fused_neg, tau);
  return sig;
}

double calibration_loss(const ReliabilitySignal& sig, std::span<const double> w_pos,
                        std::span<const double> w_neg, bool normalize_joint) {
  const auto& z = sig.reliability;
  double s = 0.0;
  for (size_t m = 0; m < z.size(); ++m) {
    if (z[m] == 0.0) continue;  // 0*log 0 = 0
    double q = w_pos[m] + w_neg[m];
    if (normalize_joint) q *= 0.5;
    s += z[m] * (std::log(std::max(z[m], tol::kLogClamp)) -
                 std::log(std::max(q, tol::kLogClamp)));
  }
  return sig.confidence * s;
}

double param_l2_norm(const model::ModelParams& p) {
  double ss = 0.0;
  for (const auto& mp : p.modalities) {
    for (double v : mp.user_embeddings.a) ss += v * v;
    for (double v : mp.item_projection.a) ss += v * v;
    for (double v : mp.item_bias) ss += v * v;
  }
  return std::sqrt(ss);
}

double stage1_loss(const std::vector<data::Triplet>& batch, const model::ModelParams& p,
                   const std::vector<data::ModalityFeatureTable>& features, double beta) {
  double total = 0.0;
  for (const auto& t : batch) {
    auto s = model::score_triplet(p, features, t, model::Stage::I);
    total += bpr_loss(s.fused_pos, s.fused_neg);
  }
  return total + beta * param_l2_norm(p);
}

double stage2_loss(const std::vector<data::Triplet>& batch, const model::ModelParams& p,
                   const std::vector<data::ModalityFeatureTable>& features, double alpha,
                   double beta, double tau, bool normalize_joint) {
  double total = 0.0;
  for (const auto& t : batch) {
    auto s = model::score_triplet(p, features, t, model::Stage::II);
    total += bpr_loss(s.fused_pos, s.fused_neg);
    if (alpha != 0.0) {
      auto sig = make_signal(s, tau);
      total += alpha * calibration_loss(sig, s.w_pos, s.w_neg, normalize_joint);
    }
  }
  return total + beta * param_l2_norm(p);
}

double stage2_loss_frozen_signals(const std::vector<data::Triplet>& batch,
                                  const model::ModelParams& p,
                                  const std::vector<data::ModalityFeatureTable>& features,
                                  const std::vector<ReliabilitySignal>& signals, double alpha,
                                  double beta, bool normalize_joint) {
  if (signals.size() != batch.size())
    throw UsageError("stage2_loss_frozen_signals: one signal per triplet required");
  double total = 0.0;
  for (size_t n = 0; n < batch.size(); ++n) {
    auto s = model::score_triplet(p, features, batch[n], model::Stage::II);
    total += bpr_loss(s.fused_pos, s.fused_neg);
    if (alpha != 0.0)
      total += alpha * calibration_loss(signals[n], s.w_pos, s.w_neg, normalize_joint);
  }
  return total + beta * param_l2_norm(p);
}

}  // namespace margo::losses
