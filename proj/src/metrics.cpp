#include "pirank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pirank::metrics {

double gain(double label) { return std::exp2(label) - 1.0; }

double discount(std::size_t rank) {
  return 1.0 / std::log2(1.0 + static_cast<double>(rank));
}

std::optional<double> rp(std::span<const double> labels,
                         const relaxsort::Permutation& ranking) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < ranking.size(); ++j) {
    num += labels[ranking[j]] * static_cast<double>(j + 1);
    den += labels[j];
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

double dcg_at_k(std::span<const double> labels,
                const relaxsort::Permutation& ranking, std::size_t k) {
  const std::size_t top = std::min(k, ranking.size());
  double total = 0.0;
  for (std::size_t j = 0; j < top; ++j) total += gain(labels[ranking[j]]) * discount(j + 1);
  return total;
}

double ideal_dcg_at_k(std::span<const double> labels, std::size_t k) {
  return dcg_at_k(labels, relaxsort::hard_sort_desc(labels), k);
}

std::optional<double> ndcg_at_k(std::span<const double> labels,
                                const relaxsort::Permutation& ranking,
                                std::size_t k) {
  const double ideal = ideal_dcg_at_k(labels, k);
  if (ideal <= 0.0) return std::nullopt;
  return dcg_at_k(labels, ranking, k) / ideal;
}

std::optional<double> mrr(std::span<const double> labels,
                          const relaxsort::Permutation& ranking) {
  for (std::size_t j = 0; j < ranking.size(); ++j) {
    if (labels[ranking[j]] >= 1.0) return 1.0 / static_cast<double>(j + 1);
  }
  return std::nullopt;
}

std::optional<double> opa(std::span<const double> labels,
                          std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw std::invalid_argument("opa: labels and scores differ in length");
  }
  std::size_t pairs = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[i] > labels[j]) {
        ++pairs;
        if (scores[i] > scores[j]) ++correct;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(pairs);
}

QueryMetrics evaluate_query(std::span<const double> labels,
                            std::span<const double> scores,
                            std::span<const std::size_t> cutoffs,
                            std::string qid) {
  if (labels.size() != scores.size()) {
    throw std::invalid_argument("evaluate_query: labels and scores differ in length");
  }
  const relaxsort::Permutation ranking = relaxsort::hard_sort_desc(scores);
  QueryMetrics row;
  row.qid = std::move(qid);
  row.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  row.rp = rp(labels, ranking);
  row.mrr = mrr(labels, ranking);
  row.opa = opa(labels, scores);
  for (std::size_t k : cutoffs) {
    row.dcg.push_back(dcg_at_k(labels, ranking, k));
    row.ndcg.push_back(ndcg_at_k(labels, ranking, k));
  }
  return row;
}

std::optional<double> metric_value(const QueryMetrics& row, const std::string& name) {
  if (name == "rp") return row.rp;
  if (name == "mrr") return row.mrr;
  if (name == "opa") return row.opa;
  const auto at = name.find('@');
  if (at != std::string::npos) {
    const std::string base = name.substr(0, at);
    const std::size_t k = std::stoul(name.substr(at + 1));
    const auto it = std::find(row.cutoffs.begin(), row.cutoffs.end(), k);
    if (it != row.cutoffs.end()) {
      const auto idx = static_cast<std::size_t>(it - row.cutoffs.begin());
      if (base == "ndcg") return row.ndcg[idx];
      if (base == "dcg") return row.dcg[idx];
    }
  }
  throw std::invalid_argument("unknown metric '" + name + "'");
}

std::vector<std::string> metric_names(std::span<const std::size_t> cutoffs) {
  std::vector<std::string> names;
  for (std::size_t k : cutoffs) names.push_back("ndcg@" + std::to_string(k));
  for (std::size_t k : cutoffs) names.push_back("dcg@" + std::to_string(k));
  names.insert(names.end(), {"rp", "mrr", "opa"});
  return names;
}

bool higher_is_better(const std::string& name) { return name != "rp"; }

std::optional<double> mean_metric(std::span<const QueryMetrics> rows,
                                  const std::string& name) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& row : rows) {
    if (auto v = metric_value(row, name)) {
      total += *v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

}  // namespace pirank::metrics
