#pragma once

#include <string>
#include <vector>

#include "margo/data.hpp"
#include "margo/model.hpp"

namespace margo::eval {

struct EvalReport {
  std::vector<int> k_list;
  Vec recall;  // per K
  Vec ndcg;    // per K
  int users_evaluated = 0;
  data::Split split = data::Split::val;

  bool operator==(const EvalReport&) const = default;
};

// Items sorted by fused rating descending, ties broken by ascending item
// index. Items in `exclude` (sorted) never appear.
std::vector<int> rank_items(const model::ModelParams& p,
                            const std::vector<data::ModalityFeatureTable>& features, int user,
                            const std::vector<int>& exclude, model::Stage stage);

double recall_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant, int k);

// Binary-relevance DCG with 1/log2(rank+1) discount, normalized by the ideal
// DCG over min(|relevant|, k).
double ndcg_at_k(const std::vector<int>& ranked, const std::vector<int>& relevant, int k);

// Mean metrics over users with at least one relevant item in `split`.
// Exclusions: train positives for val; train+val positives for test.
// OpenMP-parallel across users; results are independent of thread count.
EvalReport evaluate(const model::ModelParams& p,
                    const std::vector<data::ModalityFeatureTable>& features,
                    const data::InteractionDataset& ds, data::Split split,
                    const std::vector<int>& k_list, model::Stage stage);

// Straight serial loop kept as the reference the parallel kernel is tested
// and benchmarked against.
EvalReport evaluate_reference(const model::ModelParams& p,
                              const std::vector<data::ModalityFeatureTable>& features,
                              const data::InteractionDataset& ds, data::Split split,
                              const std::vector<int>& k_list, model::Stage stage);

void write_report_tsv(const EvalReport& r, const std::string& path);
std::string format_report(const EvalReport& r);

}  // namespace margo::eval
