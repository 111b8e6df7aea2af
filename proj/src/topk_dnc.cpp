#include "pirank/topk_dnc.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pirank::dnc {

std::size_t DnCPlan::subtrees(std::size_t level) const {
  std::size_t s = 1;
  for (std::size_t j = level; j < branching.size(); ++j) s *= branching[j];
  return s;
}

std::size_t DnCPlan::leaves_per_subtree(std::size_t level) const {
  std::size_t n = 1;
  for (std::size_t j = 0; j < level; ++j) n *= branching[j];
  return n;
}

void DnCPlan::validate() const {
  const std::size_t d = branching.size();
  if (d == 0) throw std::invalid_argument("plan depth must be >= 1");
  if (widths.size() != d + 1 || temperatures.size() != d) {
    throw std::invalid_argument("plan widths/temperatures do not match depth");
  }
  std::size_t product = 1;
  for (std::size_t b : branching) {
    if (b == 0) throw std::invalid_argument("branching factors must be positive");
    product *= b;
  }
  if (product != padded || padded < num_items) {
    throw std::invalid_argument("branching product " + std::to_string(product) +
                                " does not cover " + std::to_string(num_items) +
                                " items");
  }
  if (widths[0] != 1) throw std::invalid_argument("k_0 must be 1");
  const std::size_t k = widths[d];
  for (std::size_t j = 1; j <= d; ++j) {
    const std::size_t kmax = widths[j - 1] * branching[j - 1];
    const std::size_t kmin = std::min(k, kmax);
    if (widths[j] < kmin || widths[j] > kmax) {
      throw std::invalid_argument("width k_" + std::to_string(j) + " = " +
                                  std::to_string(widths[j]) + " outside [" +
                                  std::to_string(kmin) + ", " +
                                  std::to_string(kmax) + "]");
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (!(temperatures[j] > 0.0)) throw std::invalid_argument("temperatures must be positive");
    if (j + 1 < d && temperatures[j] > temperatures[j + 1]) {
      throw std::invalid_argument("temperatures must be nondecreasing with height");
    }
  }
}

std::size_t integer_root_ceil(std::size_t n, std::size_t depth) {
  if (n <= 1) return 1;
  auto covers = [&](std::size_t b) {
    std::size_t p = 1;
    for (std::size_t j = 0; j < depth; ++j) {
      p *= b;
      if (p >= n) return true;
    }
    return p >= n;
  };
  std::size_t b = 1;
  while (!covers(b)) ++b;
  return b;
}

DnCPlan make_plan(std::size_t num_items, std::size_t k, std::size_t depth,
                  double tau, const PlanOptions& options) {
  if (num_items == 0) throw std::invalid_argument("empty score list");
  if (k < 1 || k > num_items) {
    throw std::invalid_argument("k = " + std::to_string(k) + " outside 1.." +
                                std::to_string(num_items));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (options.tau_ratio < 1.0) throw std::invalid_argument("tau ratio must be >= 1");

  DnCPlan plan;
  plan.num_items = num_items;
  if (!options.branching.empty()) {
    plan.branching = options.branching;
  } else {
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    plan.branching.assign(depth, integer_root_ceil(num_items, depth));
  }
  std::size_t product = 1;
  for (std::size_t b : plan.branching) product *= b;
  if (product < num_items) {
    throw std::invalid_argument("branching product " + std::to_string(product) +
                                " is smaller than L = " + std::to_string(num_items));
  }
  plan.padded = product;

  const std::size_t d = plan.branching.size();
  plan.widths.assign(d + 1, 1);
  for (std::size_t j = 1; j <= d; ++j) {
    const std::size_t kmax = plan.widths[j - 1] * plan.branching[j - 1];
    plan.widths[j] = j == d ? k : std::min(kmax, std::min(k, kmax) + options.slack);
  }
  plan.temperatures.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double t = tau;
    for (std::size_t e = j + 1; e < d; ++e) t /= options.tau_ratio;
    plan.temperatures[j] = t;
  }
  plan.validate();
  return plan;
}

std::size_t leaf_index(std::span<const std::size_t> coords,
                       std::span<const std::size_t> branching) {
  if (coords.size() != branching.size()) {
    throw std::invalid_argument("coordinate rank does not match depth");
  }
  std::size_t index = 0;
  std::size_t stride = 1;
  for (std::size_t j = 0; j < coords.size(); ++j) {
    if (coords[j] >= branching[j]) throw std::out_of_range("tree coordinate out of range");
    index += coords[j] * stride;
    stride *= branching[j];
  }
  return index;
}

double padding_value(std::span<const double> scores) {
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  return *lo - 10.0 * (*hi - *lo + 1.0);
}

std::vector<double> padded_scores(std::span<const double> scores,
                                  const DnCPlan& plan) {
  std::vector<double> out(scores.begin(), scores.end());
  if (plan.padded > out.size()) out.resize(plan.padded, padding_value(scores));
  return out;
}

LevelState reshape_leaves(Var padded_scores, const DnCPlan& plan) {
  if (padded_scores.size() != plan.padded) {
    throw std::invalid_argument("score length " + std::to_string(padded_scores.size()) +
                                " does not match plan size " + std::to_string(plan.padded));
  }
  Graph& g = padded_scores.graph();
  LevelState state;
  state.level = 0;
  state.values = reshape(padded_scores, Shape{plan.padded, 1});
  state.weights = g.constant(Tensor(Shape{plan.padded, 1, 1}, 1.0));
  return state;
}

LevelState dnc_level(const LevelState& state, const DnCPlan& plan,
                     std::size_t level) {
  if (level < 1 || level > plan.depth() || state.level + 1 != level) {
    throw std::invalid_argument("level " + std::to_string(level) +
                                " out of range for state at height " +
                                std::to_string(state.level));
  }
  const std::size_t b = plan.branching[level - 1];
  const std::size_t k_in = plan.widths[level - 1];
  const std::size_t k_out = plan.widths[level];
  const std::size_t nodes = plan.subtrees(level);
  const std::size_t merged = k_in * b;
  const std::size_t leaves_in = plan.leaves_per_subtree(level - 1);
  const std::size_t leaves_out = leaves_in * b;

  // Children of node s are nodes b*s .. b*s + b - 1 one level down, so each
  // merged list is a contiguous (child, rank) block of length k_in * b.
  Var merged_values = reshape(state.values, Shape{nodes, merged});
  Var q = softmax_rows(
      neuralsort_logits(merged_values, k_out, plan.temperatures[level - 1]));

  Var values = reshape(bmm(q, reshape(merged_values, Shape{nodes, merged, 1})),
                       Shape{nodes, k_out});

  // weights[s, l, child*L_in + leaf] = sum_m q[s, l, child, m] * w[child][m, leaf]
  Var q_by_child = reshape(
      permute(reshape(q, Shape{nodes, k_out, b, k_in}), {0, 2, 1, 3}),
      Shape{nodes * b, k_out, k_in});
  Var per_child = bmm(q_by_child, state.weights);
  Var weights = reshape(
      permute(reshape(per_child, Shape{nodes, b, k_out, leaves_in}), {0, 2, 1, 3}),
      Shape{nodes, k_out, leaves_out});

  return LevelState{level, values, weights};
}

relaxsort::RelaxedPermutation dnc_topk(Var scores, const DnCPlan& plan) {
  if (scores.shape().size() != 1 || scores.size() != plan.num_items) {
    throw std::invalid_argument("dnc_topk expects " + std::to_string(plan.num_items) +
                                " scores, got shape " + shape_str(scores.shape()));
  }
  Var padded = scores;
  if (plan.padded > plan.num_items) {
    // Sentinel built in the graph so it moves with min and max.
    const auto data = scores.value().data();
    const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    const std::size_t count = plan.padded - plan.num_items;
    Var mins = gather(scores, std::vector<std::size_t>(count, static_cast<std::size_t>(lo - data.begin())));
    Var maxs = gather(scores, std::vector<std::size_t>(count, static_cast<std::size_t>(hi - data.begin())));
    Var pad = sub(mins, scale(shift(sub(maxs, mins), 1.0), 10.0));
    padded = concat({scores, pad}, 0);
  }
  LevelState state = reshape_leaves(padded, plan);
  for (std::size_t j = 1; j <= plan.depth(); ++j) state = dnc_level(state, plan, j);
  Var rows = reshape(state.weights, Shape{plan.k(), plan.padded});
  return relaxsort::RelaxedPermutation{rows, plan.tau(), plan.num_items};
}

OpCount count_ops(const DnCPlan& plan) {
  OpCount count;
  for (std::size_t j = 1; j <= plan.depth(); ++j) {
    const std::uint64_t nodes = plan.subtrees(j);
    const std::uint64_t n = plan.widths[j - 1] * plan.branching[j - 1];
    const std::uint64_t k_out = plan.widths[j];
    count.sort_terms += nodes * n * n;
    count.row_terms += nodes * 3 * k_out * n;
    count.weight_contraction += k_out * plan.widths[j - 1] * plan.padded;
  }
  return count;
}

}  // namespace pirank::dnc
