#include "margo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace margo::analysis {

Histogram weight_histogram(const model::ModelParams& p, int modality_id, int bins) {
  if (bins < 2) throw UsageError("weight_histogram: bins must be >= 2");
  if (modality_id < 0 || modality_id >= p.modality_count)
    throw UsageError("weight_histogram: modality out of range");

  Histogram h;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = static_cast<double>(b) / bins;
  h.counts.assign(bins, 0);
  for (int i = 0; i < p.item_count; ++i) {
    double w = model::modality_weights(p, i)[modality_id];
    int b = std::min(bins - 1, static_cast<int>(w * bins));
    ++h.counts[b];
  }
  return h;
}

WeightStats weight_stats(const model::ModelParams& p, int modality_id) {
  if (modality_id < 0 || modality_id >= p.modality_count)
    throw UsageError("weight_stats: modality out of range");
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < p.item_count; ++i) {
    double w = model::modality_weights(p, i)[modality_id];
    sum += w;
    sumsq += w * w;
  }
  WeightStats s;
  s.mean = sum / p.item_count;
  s.stddev = std::sqrt(std::max(0.0, sumsq / p.item_count - s.mean * s.mean));
  return s;
}

void write_histogram_tsv(const Histogram& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write histogram: " + path);
  out << "bin_lo\tbin_hi\tcount\n";
  char buf[96];
  for (size_t b = 0; b < h.counts.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\t%d\n", h.edges[b], h.edges[b + 1],
                  h.counts[b]);
    out << buf;
  }
}

ConflictProbe conflict_probe(const std::vector<data::Triplet>& batch,
                             const model::ModelParams& p,
                             const std::vector<data::ModalityFeatureTable>& features,
                             const losses::Hyperparams& hp) {
  const int M = p.modality_count;
  // Gradients w.r.t. the positive items' post-softmax weight rows, the
  // parameterization of the convergence argument. The negative item's weights
  // are held constant inside each triplet's derivative.
  Mat g_rec(p.item_count, M);
  Mat g_cal(p.item_count, M);
  bool precondition = true;

  for (const auto& t : batch) {
    auto s = model::score_triplet(p, features, t, model::Stage::II);
    for (int m = 0; m < M; ++m)
      if (s.pos_rating[m] < 0.0) precondition = false;

    double slack = 1.0 - sigmoid(s.fused_pos - s.fused_neg);
    double* gr = g_rec.row(t.pos_item);
    for (int m = 0; m < M; ++m) gr[m] += -s.pos_rating[m] * slack;

    auto sig = losses::make_signal(s, hp.tau);
    double* gc = g_cal.row(t.pos_item);
    for (int m = 0; m < M; ++m) {
      if (sig.reliability[m] == 0.0) continue;
      double q = s.w_pos[m] + s.w_neg[m];
      if (q <= tol::kLogClamp) continue;
      gc[m] += -sig.confidence * sig.reliability[m] / q;
    }
  }

  ConflictProbe out;
  for (size_t i = 0; i < g_rec.a.size(); ++i) out.inner_product += g_rec.a[i] * g_cal.a[i];
  out.violation = out.inner_product < 0.0;
  out.precondition_held = precondition;
  return out;
}

RecoveryScore reliability_recovery_score(const model::ModelParams& p,
                                         const synth::GroundTruth& truth,
                                         int corrupted_modality) {
  if (static_cast<int>(truth.corrupted_flag.size()) != p.item_count)
    throw UsageError("recovery score: ground truth size mismatch");

  RecoveryScore r;
  Vec detector(p.item_count);
  double sum_c = 0.0, sum_k = 0.0;
  int n_c = 0, n_k = 0;
  for (int i = 0; i < p.item_count; ++i) {
    double w = model::modality_weights(p, i)[corrupted_modality];
    detector[i] = 1.0 - w;
    if (truth.corrupted_flag[i]) {
      sum_c += w;
      ++n_c;
    } else {
      sum_k += w;
      ++n_k;
    }
  }
  r.mean_w_corrupted = n_c ? sum_c / n_c : std::nan("");
  r.mean_w_clean = n_k ? sum_k / n_k : std::nan("");

  // Mann-Whitney AUC of the detector, with average ranks on ties.
  if (n_c == 0 || n_k == 0) {
    r.auc = std::nan("");
    return r;
  }
  std::vector<int> order(p.item_count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&detector](int a, int b) { return detector[a] < detector[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && detector[order[j]] == detector[order[i]]) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
    for (size_t k = i; k < j; ++k)
      if (truth.corrupted_flag[order[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  r.auc = (rank_sum_pos - 0.5 * n_c * (n_c + 1)) / (static_cast<double>(n_c) * n_k);
  return r;
}

std::string compare_variants(const std::vector<VariantReport>& reports,
                             const std::string& reference) {
  if (reports.size() < 2) throw UsageError("compare_variants: need at least 2 reports");
  const auto& ks = reports.front().report.k_list;
  for (const auto& vr : reports)
    if (vr.report.k_list != ks) throw UsageError("compare_variants: mismatched k_list");

  int ref_idx = -1;
  for (size_t v = 0; v < reports.size(); ++v)
    if (reports[v].name == reference) ref_idx = static_cast<int>(v);
  if (ref_idx < 0) throw UsageError("compare_variants: reference variant '" + reference +
                                    "' not among the reports");

  std::ostringstream os;
  char buf[64];
  os << "variant";
  for (int k : ks) os << "\tR@" << k << "\tN@" << k;
  os << "\n";
  for (const auto& vr : reports) {
    os << vr.name;
    for (size_t j = 0; j < ks.size(); ++j) {
      std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f", vr.report.recall[j], vr.report.ndcg[j]);
      os << buf;
    }
    os << "\n";
  }

  // Relative improvement of the reference over the best of the others.
  os << "impro.";
  for (size_t j = 0; j < ks.size(); ++j) {
    for (int metric = 0; metric < 2; ++metric) {
      double ref = metric == 0 ? reports[ref_idx].report.recall[j]
                               : reports[ref_idx].report.ndcg[j];
      double best = -std::numeric_limits<double>::infinity();
      for (size_t v = 0; v < reports.size(); ++v) {
        if (static_cast<int>(v) == ref_idx) continue;
        double x = metric == 0 ? reports[v].report.recall[j] : reports[v].report.ndcg[j];
        best = std::max(best, x);
      }
      if (best > 0.0)
        std::snprintf(buf, sizeof buf, "\t%+.2f%%", (ref - best) / best * 100.0);
      else
        std::snprintf(buf, sizeof buf, "\tn/a");
      os << buf;
    }
  }
  os << "\n";
  return os.str();
}

}  // namespace margo::analysis
