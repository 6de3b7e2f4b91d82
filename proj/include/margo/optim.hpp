#pragma once

#include <functional>
#include <vector>

#include "margo/core.hpp"
#include "margo/losses.hpp"
#include "margo/model.hpp"

namespace margo::optim {

// Same shapes as ModelParams.
struct Gradients {
  std::vector<Mat> user_embeddings;
  std::vector<Mat> item_projection;
  std::vector<Vec> item_bias;
  Mat weight_logits;

  static Gradients zeros_like(const model::ModelParams& p);
  double linf_diff(const Gradients& o) const;
};

// Per-batch diagnostics, filled on request. The calibration and confidence
// numbers are computed in stage II even when alpha is 0, so ablation logs
// stay comparable.
struct BatchStats {
  double bpr_sum = 0.0;
  double cal_sum = 0.0;
  double gamma_sum = 0.0;
  int count = 0;
};

struct BackwardOptions {
  // no_nograd variant: also differentiate through the reliability vector and
  // the confidence (softmax/tanh Jacobians of the signal path).
  bool allow_signal_grad = false;
  BatchStats* stats = nullptr;
};

// Hand-derived chain rule for the stage objectives. z and gamma are treated
// as constants unless opts.allow_signal_grad. Accumulation order is fixed:
// triplet, then modality, then coordinate.
std::pair<double, Gradients> backward(const std::vector<data::Triplet>& batch,
                                      const model::ModelParams& p,
                                      const std::vector<data::ModalityFeatureTable>& features,
                                      model::Stage stage, const losses::Hyperparams& hp,
                                      const BackwardOptions& opts = {});

struct AdamState {
  Gradients m;  // first moments
  Gradients v;  // second moments
  int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(const model::ModelParams& p);
};

// Standard Adam with bias correction.
void adam_step(model::ModelParams& p, const Gradients& g, AdamState& state, double lr);

// Central finite differences on `sample_count` coordinates picked by `seed`.
// Reports the max relative error against the analytic gradient, with
// denominator max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const std::function<double(const model::ModelParams&)>& loss_fn,
                         const model::ModelParams& params, const Gradients& analytic, double h,
                         int sample_count, uint64_t seed);

}  // namespace margo::optim
