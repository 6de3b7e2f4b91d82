#include "margo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "margo/analysis.hpp"
#include "margo/optim.hpp"

namespace margo::train {

namespace {

// Distinct, reproducible triplet stream per (seed, stage, epoch).
uint64_t epoch_seed(uint64_t seed, model::Stage stage, int epoch) {
  uint64_t x = seed;
  x = fnv1a64(&stage, sizeof stage, x);
  x = fnv1a64(&epoch, sizeof epoch, x);
  return x;
}

int train_interaction_count(const data::InteractionDataset& ds) {
  int n = 0;
  for (const auto& x : ds.interactions)
    if (x.split == data::Split::train) ++n;
  return n;
}

struct StageOutcome {
  model::ModelParams best;
  std::vector<EpochRecord> epochs;
  int last_epoch = 0;
};

// One early-stopped optimization stage. Fresh negatives every epoch; the
// best-validation parameters (Recall@20) are returned, not the final ones.
StageOutcome run_stage(model::ModelParams params, model::Stage stage, const TrainRunConfig& cfg,
                       const data::InteractionDataset& ds,
                       const std::vector<data::ModalityFeatureTable>& features, int first_epoch,
                       bool allow_signal_grad) {
  const auto& hp = cfg.hp;
  const int per_epoch = train_interaction_count(ds);
  optim::AdamState adam = optim::AdamState::zeros_like(params);

  StageOutcome out;
  out.best = params;
  double best_recall = -1.0;
  int best_local_epoch = 0;

  for (int e = 1; e <= hp.max_epochs; ++e) {
    auto triplets = data::sample_triplets(ds, per_epoch, epoch_seed(hp.seed, stage, e));

    EpochRecord rec;
    rec.epoch = first_epoch + e - 1;
    rec.stage = stage;

    optim::BatchStats stats;
    bool probed = false;
    for (size_t b0 = 0; b0 < triplets.size(); b0 += hp.batch_size) {
      size_t b1 = std::min(triplets.size(), b0 + hp.batch_size);
      std::vector<data::Triplet> batch(triplets.begin() + b0, triplets.begin() + b1);
      if (stage == model::Stage::II && !probed) {
        auto probe = analysis::conflict_probe(batch, params, features, hp);
        rec.probe_inner = probe.inner_product;
        rec.probe_violation = probe.violation ? 1 : 0;
        rec.probe_precondition = probe.precondition_held ? 1 : 0;
        probed = true;
      }
      optim::BackwardOptions opts;
      opts.allow_signal_grad = allow_signal_grad;
      opts.stats = &stats;
      auto [loss, grads] = optim::backward(batch, params, features, stage, hp, opts);
      (void)loss;
      optim::adam_step(params, grads, adam, hp.learning_rate);
    }
    rec.mean_rec = stats.count ? stats.bpr_sum / stats.count : 0.0;
    rec.mean_cal = stats.count ? stats.cal_sum / stats.count : 0.0;
    rec.mean_gamma = stats.count ? stats.gamma_sum / stats.count : 0.0;

    bool do_eval = (e % cfg.eval_every == 0) || e == hp.max_epochs;
    rec.val_recall20 = std::nan("");
    if (do_eval) {
      auto report = eval::evaluate(params, features, ds, data::Split::val, {20}, stage);
      rec.val_recall20 = report.recall[0];
      // Ties go to the later epoch: on this metric's coarse grid, plateaued
      // epochs are still training the weights.
      if (rec.val_recall20 >= best_recall) {
        best_recall = rec.val_recall20;
        out.best = params;
        best_local_epoch = e;
      }
    }
    out.epochs.push_back(rec);
    out.last_epoch = rec.epoch;
    if (do_eval && e - best_local_epoch >= hp.patience) break;
  }
  return out;
}

}  // namespace

void TrainLog::write_tsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write train log: " + path);
  char buf[256];
  std::snprintf(buf, sizeof buf, "# stage1_best_fingerprint=%016llx\n",
                static_cast<unsigned long long>(stage1_best_fingerprint));
  out << buf;
  std::snprintf(buf, sizeof buf, "# stage2_init_fingerprint=%016llx\n",
                static_cast<unsigned long long>(stage2_init_fingerprint));
  out << buf;
  out << "epoch\tstage\tmean_rec\tmean_cal\tmean_gamma\tval_recall20\tprobe_inner\t"
         "probe_violation\tprobe_precondition\n";
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%d\t%s\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%d\t%d\n",
                  r.epoch, r.stage == model::Stage::I ? "I" : "II", r.mean_rec, r.mean_cal,
                  r.mean_gamma, r.val_recall20, r.probe_inner, r.probe_violation,
                  r.probe_precondition);
    out << buf;
  }
}

TrainResult train_stage1(const TrainRunConfig& cfg, const data::InteractionDataset& ds,
                         const std::vector<data::ModalityFeatureTable>& features) {
  cfg.hp.validate();
  if (!ds.split_done) throw UsageError("train: dataset not split");
  if (cfg.eval_every < 1) throw UsageError("train: eval cadence must be >= 1");
  if (features.empty()) throw UsageError("train: no modality features");

  std::vector<int> dims;
  for (const auto& f : features) dims.push_back(f.dim);
  auto params = model::init_params(ds.user_count, ds.item_count,
                                   static_cast<int>(features.size()), cfg.hp.embed_dim, dims,
                                   cfg.hp.seed);

  auto outcome = run_stage(std::move(params), model::Stage::I, cfg, ds, features, 1, false);
  TrainResult r;
  r.params = std::move(outcome.best);
  r.log.epochs = std::move(outcome.epochs);
  r.log.stage1_best_fingerprint = r.params.fingerprint();
  r.eval_stage = model::Stage::I;
  return r;
}

TrainResult train_stage2(const model::ModelParams& start, const TrainRunConfig& cfg,
                         const data::InteractionDataset& ds,
                         const std::vector<data::ModalityFeatureTable>& features,
                         int first_epoch) {
  cfg.hp.validate();
  if (!ds.split_done) throw UsageError("train: dataset not split");

  bool allow_signal_grad = cfg.hp.variant == losses::Variant::no_nograd;
  TrainResult r;
  r.log.stage2_init_fingerprint = start.fingerprint();
  auto outcome =
      run_stage(start, model::Stage::II, cfg, ds, features, first_epoch, allow_signal_grad);
  r.params = std::move(outcome.best);
  r.log.epochs = std::move(outcome.epochs);
  r.eval_stage = model::Stage::II;
  return r;
}

TrainResult run_variant(losses::Variant variant, const TrainRunConfig& cfg,
                        const data::InteractionDataset& ds,
                        const std::vector<data::ModalityFeatureTable>& features) {
  TrainRunConfig c = cfg;
  c.hp.variant = variant;
  if (variant == losses::Variant::no_cal) c.hp.alpha = 0.0;

  switch (variant) {
    case losses::Variant::no_weight:
      return train_stage1(c, ds, features);
    case losses::Variant::no_two_stage: {
      std::vector<int> dims;
      for (const auto& f : features) dims.push_back(f.dim);
      auto fresh = model::init_params(ds.user_count, ds.item_count,
                                      static_cast<int>(features.size()), c.hp.embed_dim, dims,
                                      c.hp.seed);
      return train_stage2(fresh, c, ds, features, 1);
    }
    case losses::Variant::full:
    case losses::Variant::no_cal:
    case losses::Variant::no_nograd: {
      auto s1 = train_stage1(c, ds, features);
      auto s2 = train_stage2(s1.params, c, ds, features,
                             s1.log.epochs.empty() ? 1 : s1.log.epochs.back().epoch + 1);
      TrainResult r;
      r.params = std::move(s2.params);
      r.stage1_params = std::move(s1.params);
      r.log.epochs = std::move(s1.log.epochs);
      r.log.epochs.insert(r.log.epochs.end(), s2.log.epochs.begin(), s2.log.epochs.end());
      r.log.stage1_best_fingerprint = s1.log.stage1_best_fingerprint;
      r.log.stage2_init_fingerprint = s2.log.stage2_init_fingerprint;
      r.eval_stage = model::Stage::II;
      return r;
    }
  }
  throw UsageError("run_variant: unknown variant");
}

}  // namespace margo::train
