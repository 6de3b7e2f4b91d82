#include "margo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace margo::eval {

namespace {

std::vector<int> rank_from_scores(const Vec& scores, const std::vector<int>& exclude) {
  std::vector<int> items;
  items.reserve(scores.size());
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (!std::binary_search(exclude.begin(), exclude.end(), i)) items.push_back(i);
  std::stable_sort(items.begin(), items.end(), [&scores](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return items;
}

struct UserMetrics {
  Vec recall;
  Vec ndcg;
  bool counted = false;
};

UserMetrics evaluate_user(const model::ModelParams& p, const std::vector<Mat>& item_enc,
                          int user, const std::vector<int>& exclude,
                          const std::vector<int>& relevant, const std::vector<int>& k_list,
                          model::Stage stage) {
  UserMetrics um;
  if (relevant.empty()) return um;
  Vec scores = model::score_all_items_cached(p, item_enc, user, stage);
  auto ranked = rank_from_scores(scores, exclude);
  um.recall.reserve(k_list.size());
  um.ndcg.reserve(k_list.size());
  for (int k : k_list) {
    um.recall.push_back(recall_at_k(ranked, relevant, k));
    um.ndcg.push_back(ndcg_at_k(ranked, relevant, k));
  }
  um.counted = true;
  return um;
}

EvalReport reduce_users(const std::vector<UserMetrics>& per_user,
                        const std::vector<int>& k_list, data::Split split) {
  EvalReport r;
  r.k_list = k_list;
  r.split = split;
  r.recall.assign(k_list.size(), 0.0);
  r.ndcg.assign(k_list.size(), 0.0);
  // Fixed user-order reduction: identical for any thread count.
  for (const auto& um : per_user) {
    if (!um.counted) continue;
    ++r.users_evaluated;
    for (size_t j = 0; j < k_list.size(); ++j) {
      r.recall[j] += um.recall[j];
      r.ndcg[j] += um.ndcg[j];
    }
  }
  if (r.users_evaluated > 0)
    for (size_t j = 0; j < k_list.size(); ++j) {
      r.recall[j] /= r.users_evaluated;
      r.ndcg[j] /= r.users_evaluated;
    }
  return r;
}

}  // namespace

std::vector<int> rank_items(const model::ModelParams& p,
                            const std::vector<data::ModalityFeatureTable>& features, int user,
                            const std::vector<int>& exclude, model::Stage stage) {
  Vec scores = model::score_all_items(p, features, user, stage);
  std::vector<int> sorted_exclude = exclude;
  std::sort(sorted_exclude.begin(), sorted_exclude.end());
  return rank_from_scores(scores, sorted_exclude);
}

double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant, int k) {
  if (relevant.empty()) throw UsageError("recall_at_k: empty relevant set");
  int hits = 0;
  int top = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int r = 0; r < top; ++r)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[r])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant, int k) {
  if (relevant.empty()) throw UsageError("ndcg_at_k: empty relevant set");
  double dcg = 0.0;
  int top = std::min<int>(k, static_cast<int>(ranked.size()));
  for (int r = 1; r <= top; ++r)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[r - 1]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
  double idcg = 0.0;
  for (int r = 1; r <= ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
  return dcg / idcg;
}

EvalReport evaluate(const model::ModelParams& p,
                    const std::vector<data::ModalityFeatureTable>& features,
                    const data::InteractionDataset& ds, data::Split split,
                    const std::vector<int>& k_list, model::Stage stage) {
  if (split == data::Split::train) throw UsageError("evaluate: split must be val or test");
  auto relevant = ds.split_positives(split);
  // No leakage: ranking for the test split also hides validation positives.
  std::vector<std::vector<int>> exclude = ds.train_positives;
  if (split == data::Split::test) {
    auto val = ds.split_positives(data::Split::val);
    for (int u = 0; u < ds.user_count; ++u) {
      exclude[u].insert(exclude[u].end(), val[u].begin(), val[u].end());
      std::sort(exclude[u].begin(), exclude[u].end());
    }
  }

  auto item_enc = model::encode_all_items(p, features);
  std::vector<UserMetrics> per_user(ds.user_count);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int u = 0; u < ds.user_count; ++u)
    per_user[u] = evaluate_user(p, item_enc, u, exclude[u], relevant[u], k_list, stage);

  return reduce_users(per_user, k_list, split);
}

EvalReport evaluate_reference(const model::ModelParams& p,
                              const std::vector<data::ModalityFeatureTable>& features,
                              const data::InteractionDataset& ds, data::Split split,
                              const std::vector<int>& k_list, model::Stage stage) {
  if (split == data::Split::train) throw UsageError("evaluate: split must be val or test");
  auto relevant = ds.split_positives(split);
  std::vector<std::vector<int>> exclude = ds.train_positives;
  if (split == data::Split::test) {
    auto val = ds.split_positives(data::Split::val);
    for (int u = 0; u < ds.user_count; ++u) {
      exclude[u].insert(exclude[u].end(), val[u].begin(), val[u].end());
      std::sort(exclude[u].begin(), exclude[u].end());
    }
  }

  auto item_enc = model::encode_all_items_serial(p, features);
  std::vector<UserMetrics> per_user(ds.user_count);
  for (int u = 0; u < ds.user_count; ++u)
    per_user[u] = evaluate_user(p, item_enc, u, exclude[u], relevant[u], k_list, stage);

  return reduce_users(per_user, k_list, split);
}

void write_report_tsv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path);
  out << "k\trecall\tndcg\n";
  char buf[64];
  for (size_t j = 0; j < r.k_list.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\n", r.k_list[j], r.recall[j], r.ndcg[j]);
    out << buf;
  }
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "split=" << (r.split == data::Split::val ? "val" : "test")
     << " users=" << r.users_evaluated << "\n";
  char buf[96];
  for (size_t j = 0; j < r.k_list.size(); ++j) {
    std::snprintf(buf, sizeof buf, "  Recall@%-3d %.6f   NDCG@%-3d %.6f\n", r.k_list[j],
                  r.recall[j], r.k_list[j], r.ndcg[j]);
    os << buf;
  }
  return os.str();
}

}  // namespace margo::eval
