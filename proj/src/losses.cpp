#include "pirank/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pirank/metrics.hpp"

namespace pirank::losses {

namespace {

QueryLoss skipped(Var scores) {
  return QueryLoss{scores.graph().constant(Tensor::scalar(0.0)), true};
}

void require_vector(std::span<const double> labels, Var scores) {
  if (scores.shape().size() != 1 || scores.size() != labels.size()) {
    throw std::invalid_argument("scores of shape " + shape_str(scores.shape()) +
                                " do not match " + std::to_string(labels.size()) +
                                " labels");
  }
  if (labels.empty()) throw std::invalid_argument("empty query");
}

Var column(Graph& g, std::vector<double> values) {
  const std::size_t n = values.size();
  return g.constant(Tensor(Shape{n, 1}, std::move(values)));
}

struct Pairs {
  std::vector<std::size_t> winners;
  std::vector<std::size_t> losers;
};

Pairs ordered_pairs(std::span<const double> labels) {
  Pairs p;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels[i] > labels[j]) {
        p.winners.push_back(i);
        p.losers.push_back(j);
      }
  return p;
}

}  // namespace

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  if (name == "pirank-ndcg") return LossKind::pirank_ndcg;
  if (name == "pirank-arp") return LossKind::pirank_arp;
  if (name == "mse") return LossKind::mse;
  if (name == "ranknet") return LossKind::ranknet;
  if (name == "lambdarank") return LossKind::lambdarank;
  if (name == "softmax") return LossKind::softmax_listwise;
  if (name == "neuralsort-ce") return LossKind::neuralsort_ce;
  return std::nullopt;
}

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::pirank_ndcg: return "pirank-ndcg";
    case LossKind::pirank_arp: return "pirank-arp";
    case LossKind::mse: return "mse";
    case LossKind::ranknet: return "ranknet";
    case LossKind::lambdarank: return "lambdarank";
    case LossKind::softmax_listwise: return "softmax";
    case LossKind::neuralsort_ce: return "neuralsort-ce";
  }
  return "unknown";
}

std::vector<double> gain_vector(std::span<const double> labels) {
  std::vector<double> g(labels.size());
  std::transform(labels.begin(), labels.end(), g.begin(), metrics::gain);
  return g;
}

std::vector<double> discount_vector(std::size_t k) {
  std::vector<double> c(k);
  for (std::size_t j = 0; j < k; ++j) c[j] = metrics::discount(j + 1);
  return c;
}

Var relaxed_topk_rows(Var scores, std::size_t k, const LossConfig& cfg) {
  const std::size_t n = scores.size();
  const std::size_t top = std::min(k, n);
  relaxsort::RelaxedPermutation relaxed;
  std::vector<double> columns(scores.value().data().begin(), scores.value().data().end());
  if (cfg.depth <= 1 && cfg.plan.branching.empty()) {
    relaxed = relaxsort::neuralsort(scores, cfg.tau, top);
  } else {
    const dnc::DnCPlan plan = dnc::make_plan(n, top, cfg.depth, cfg.tau, cfg.plan);
    relaxed = dnc::dnc_topk(scores, plan);
    columns = dnc::padded_scores(columns, plan);
  }
  if (cfg.straight_through) return relaxsort::straight_through(relaxed, columns);
  return relaxed.rows;
}

Var relaxed_dcg(std::span<const double> labels, Var scores, const LossConfig& cfg) {
  require_vector(labels, scores);
  Graph& g = scores.graph();
  Var rows = relaxed_topk_rows(scores, cfg.k, cfg);
  std::vector<double> gains = gain_vector(labels);
  gains.resize(rows.shape()[1], 0.0);  // padded columns carry no gain
  Var ranked_gains = matmul(rows, column(g, std::move(gains)));
  return sum(mul(ranked_gains, column(g, discount_vector(rows.shape()[0]))));
}

QueryLoss pirank_ndcg_loss(std::span<const double> labels, Var scores,
                           const LossConfig& cfg) {
  require_vector(labels, scores);
  const double ideal = metrics::ideal_dcg_at_k(labels, cfg.k);
  if (ideal <= 0.0) return skipped(scores);
  return QueryLoss{shift(scale(relaxed_dcg(labels, scores, cfg), -1.0 / ideal), 1.0)};
}

QueryLoss pirank_arp_loss(std::span<const double> labels, Var scores,
                          const LossConfig& cfg) {
  require_vector(labels, scores);
  const std::size_t top = std::min(cfg.k, labels.size());
  double denom = 0.0;
  for (std::size_t j = 0; j < top; ++j) denom += labels[j];
  if (denom <= 0.0) return skipped(scores);
  Graph& g = scores.graph();
  Var rows = relaxed_topk_rows(scores, cfg.k, cfg);
  std::vector<double> rel(labels.begin(), labels.end());
  rel.resize(rows.shape()[1], 0.0);
  std::vector<double> positions(top);
  for (std::size_t j = 0; j < top; ++j) positions[j] = static_cast<double>(j + 1);
  Var ranked = matmul(rows, column(g, std::move(rel)));
  return QueryLoss{scale(sum(mul(ranked, column(g, std::move(positions)))), 1.0 / denom)};
}

QueryLoss mse_loss(std::span<const double> labels, Var scores) {
  require_vector(labels, scores);
  Graph& g = scores.graph();
  Var diff = sub(scores, g.constant(Tensor::vector({labels.begin(), labels.end()})));
  return QueryLoss{scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(labels.size()))};
}

QueryLoss ranknet_loss(std::span<const double> labels, Var scores) {
  require_vector(labels, scores);
  const Pairs pairs = ordered_pairs(labels);
  if (pairs.winners.empty()) {
    return QueryLoss{scores.graph().constant(Tensor::scalar(0.0))};
  }
  Var diff = sub(gather(scores, pairs.winners), gather(scores, pairs.losers));
  return QueryLoss{scale(sum(log_sigmoid(diff)), -1.0)};
}

std::vector<double> lambda_weights(std::span<const double> labels,
                                   std::span<const double> scores, std::size_t k) {
  const std::size_t n = labels.size();
  std::vector<double> w(n * n, 0.0);
  const double ideal = metrics::ideal_dcg_at_k(labels, k);
  if (ideal <= 0.0) return w;
  const std::vector<std::size_t> rank = relaxsort::hard_sort_desc(scores).rank_of();
  auto disc = [&](std::size_t r) { return r < k ? metrics::discount(r + 1) : 0.0; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!(labels[i] > labels[j])) continue;
      w[i * n + j] = std::abs(metrics::gain(labels[i]) - metrics::gain(labels[j])) *
                     std::abs(disc(rank[i]) - disc(rank[j])) / ideal;
    }
  }
  return w;
}

QueryLoss lambdarank_loss(std::span<const double> labels, Var scores, std::size_t k) {
  require_vector(labels, scores);
  if (metrics::ideal_dcg_at_k(labels, k) <= 0.0) return skipped(scores);
  const std::size_t n = labels.size();
  const std::vector<double> w = lambda_weights(labels, scores.value().data(), k);
  std::vector<std::size_t> winners, losers;
  std::vector<double> weights;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (w[i * n + j] > 0.0) {
        winners.push_back(i);
        losers.push_back(j);
        weights.push_back(w[i * n + j]);
      }
  Graph& g = scores.graph();
  if (winners.empty()) return QueryLoss{g.constant(Tensor::scalar(0.0))};
  Var diff = sub(gather(scores, winners), gather(scores, losers));
  Var weighted = mul(log_sigmoid(diff), g.constant(Tensor::vector(std::move(weights))));
  return QueryLoss{scale(sum(weighted), -1.0)};
}

QueryLoss softmax_listwise_loss(std::span<const double> labels, Var scores) {
  require_vector(labels, scores);
  double total = 0.0;
  for (double y : labels) total += y;
  if (total <= 0.0) return skipped(scores);
  std::vector<double> target(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) target[i] = labels[i] / total;
  Graph& g = scores.graph();
  Var logp = log_softmax_rows(scores);
  return QueryLoss{scale(sum(mul(logp, g.constant(Tensor::vector(std::move(target))))), -1.0)};
}

QueryLoss neuralsort_ce_loss(std::span<const double> labels, Var scores, double tau) {
  require_vector(labels, scores);
  const std::size_t n = labels.size();
  Var log_rows = log_softmax_rows(neuralsort_logits(scores, n, tau));
  const relaxsort::Permutation target = relaxsort::hard_sort_desc(labels);
  std::vector<std::size_t> picks(n);
  for (std::size_t i = 0; i < n; ++i) picks[i] = i * n + target[i];
  return QueryLoss{scale(sum(gather(log_rows, picks)), -1.0 / static_cast<double>(n))};
}

QueryLoss build_loss(const LossConfig& cfg, std::span<const double> labels,
                     std::span<const std::uint8_t> mask, Var scores) {
  if (scores.shape().size() != 1 || scores.size() != labels.size()) {
    throw std::invalid_argument("build_loss: scores and labels differ in length");
  }
  Var items = scores;
  std::vector<double> kept;
  std::span<const double> y = labels;
  if (!mask.empty()) {
    if (mask.size() != labels.size()) throw std::invalid_argument("mask length mismatch");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) idx.push_back(i);
    if (idx.empty()) return skipped(scores);
    if (idx.size() != labels.size()) {
      for (std::size_t i : idx) kept.push_back(labels[i]);
      items = gather(scores, idx);
      y = kept;
    }
  }
  switch (cfg.kind) {
    case LossKind::pirank_ndcg: return pirank_ndcg_loss(y, items, cfg);
    case LossKind::pirank_arp: return pirank_arp_loss(y, items, cfg);
    case LossKind::mse: return mse_loss(y, items);
    case LossKind::ranknet: return ranknet_loss(y, items);
    case LossKind::lambdarank: return lambdarank_loss(y, items, cfg.k);
    case LossKind::softmax_listwise: return softmax_listwise_loss(y, items);
    case LossKind::neuralsort_ce: return neuralsort_ce_loss(y, items, cfg.tau);
  }
  throw std::invalid_argument("unknown loss kind");
}

}  // namespace pirank::losses
