#pragma once

// Exact ranking metrics. Metrics that are undefined for a query (no
// relevance, no ordered pairs) return std::nullopt and the query is skipped.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pirank/relaxsort.hpp"

namespace pirank::metrics {

/// g = 2^y - 1.
double gain(double label);
/// c_j = 1 / log2(1 + j) for 1-based rank j.
double discount(std::size_t rank);

/// Relevance position: sum_j y_{pi_j} j / sum_j y_j (1-based ranks).
std::optional<double> rp(std::span<const double> labels,
                         const relaxsort::Permutation& ranking);

/// DCG over the first min(k, L) ranks.
double dcg_at_k(std::span<const double> labels,
                const relaxsort::Permutation& ranking, std::size_t k);
/// DCG@k of the stable descending sort of the labels.
double ideal_dcg_at_k(std::span<const double> labels, std::size_t k);
std::optional<double> ndcg_at_k(std::span<const double> labels,
                                const relaxsort::Permutation& ranking,
                                std::size_t k);

/// Reciprocal rank of the first item with label >= 1.
std::optional<double> mrr(std::span<const double> labels,
                          const relaxsort::Permutation& ranking);

/// Over pairs with y_i > y_j, the fraction with yhat_i > yhat_j. Ties in
/// yhat count as incorrect.
std::optional<double> opa(std::span<const double> labels,
                          std::span<const double> scores);

struct QueryMetrics {
  std::string qid;
  std::vector<std::size_t> cutoffs;
  std::optional<double> rp;
  std::optional<double> mrr;
  std::optional<double> opa;
  std::vector<double> dcg;                   // one per cutoff
  std::vector<std::optional<double>> ndcg;   // one per cutoff
};

/// All metrics for one query, ranking by stable descending sort of scores.
QueryMetrics evaluate_query(std::span<const double> labels,
                            std::span<const double> scores,
                            std::span<const std::size_t> cutoffs,
                            std::string qid = {});

/// Named per-query column ("ndcg@10", "dcg@5", "rp", "mrr", "opa").
std::optional<double> metric_value(const QueryMetrics& row, const std::string& name);
std::vector<std::string> metric_names(std::span<const std::size_t> cutoffs);
/// False only for rank-position metrics (rp), where lower is better.
bool higher_is_better(const std::string& name);

/// Mean over non-skipped queries; nullopt when all are skipped.
std::optional<double> mean_metric(std::span<const QueryMetrics> rows,
                                  const std::string& name);

}  // namespace pirank::metrics
