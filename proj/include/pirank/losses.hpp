#pragma once

// Ranking losses as graph builders over one query's predicted scores.
//
// The per-loss builders take labels and scores of the same length (real items
// only). build_loss() is the entry point for padded query groups: it gathers
// the masked-in items first, so padding never takes part in a sort.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pirank/autodiff.hpp"
#include "pirank/relaxsort.hpp"
#include "pirank/topk_dnc.hpp"

namespace pirank::losses {

enum class LossKind {
  pirank_ndcg,
  pirank_arp,
  mse,
  ranknet,
  lambdarank,
  softmax_listwise,
  neuralsort_ce,
};

/// CLI spelling: pirank-ndcg, pirank-arp, mse, ranknet, lambdarank, softmax,
/// neuralsort-ce.
std::optional<LossKind> parse_loss_kind(std::string_view name);
std::string_view loss_name(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::pirank_ndcg;
  std::size_t k = 10;
  double tau = 5.0;
  std::size_t depth = 1;
  bool straight_through = true;
  dnc::PlanOptions plan;
};

/// Per-query loss. Skipped queries (metric undefined) carry a constant zero.
struct QueryLoss {
  Var value;
  bool skipped = false;
};

std::vector<double> gain_vector(std::span<const double> labels);
std::vector<double> discount_vector(std::size_t k);

/// Relaxed top-min(k, L) rows for the configured depth; straight-through is
/// applied when enabled.
Var relaxed_topk_rows(Var scores, std::size_t k, const LossConfig& cfg);

/// sum_{j<=k} [P g]_j / log2(1 + j).
Var relaxed_dcg(std::span<const double> labels, Var scores, const LossConfig& cfg);
QueryLoss pirank_ndcg_loss(std::span<const double> labels, Var scores,
                           const LossConfig& cfg);
QueryLoss pirank_arp_loss(std::span<const double> labels, Var scores,
                          const LossConfig& cfg);
QueryLoss mse_loss(std::span<const double> labels, Var scores);
QueryLoss ranknet_loss(std::span<const double> labels, Var scores);
/// |Delta NDCG@k| pair weights, computed from the current ranking and held
/// constant. weights[i * L + j] for the ordered pair (i, j).
std::vector<double> lambda_weights(std::span<const double> labels,
                                   std::span<const double> scores, std::size_t k);
QueryLoss lambdarank_loss(std::span<const double> labels, Var scores, std::size_t k);
QueryLoss softmax_listwise_loss(std::span<const double> labels, Var scores);
QueryLoss neuralsort_ce_loss(std::span<const double> labels, Var scores, double tau);

/// Dispatches on cfg.kind; `mask` (1 = real item) may be empty.
QueryLoss build_loss(const LossConfig& cfg, std::span<const double> labels,
                     std::span<const std::uint8_t> mask, Var scores);

}  // namespace pirank::losses
