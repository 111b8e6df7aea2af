#pragma once

// Divide-and-conquer construction of the top-k rows of the relaxed sort
// operator. The padded score list (length b_1 * ... * b_d) is viewed as the
// leaves of a tree with branching b_j at height j. At height j every node
// runs the unimodal relaxation on the concatenated top-k_{j-1} values of its
// b_j children and keeps k_j rows; the relaxed permutation weights are
// compounded so they always map back to the leaves.
//
// Leaf f sits at tree position (i_1, ..., i_d) with
// f = sum_j i_j * prod_{l<j} b_l (0-based), so the b_1 consecutive leaves
// share a parent, the b_2 consecutive height-1 nodes share a parent, etc.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pirank/autodiff.hpp"
#include "pirank/relaxsort.hpp"

namespace pirank::dnc {

struct PlanOptions {
  /// Explicit factorization; its product must cover L. Empty means
  /// b_j = ceil(L^(1/d)) for every level.
  std::vector<std::size_t> branching;
  /// Extra rows kept at intermediate levels above min(k, k_{j-1} b_j).
  std::size_t slack = 0;
  /// Geometric temperature cascade tau_j = tau * ratio^(j - d), ratio >= 1.
  double tau_ratio = 1.0;
};

struct DnCPlan {
  std::size_t num_items = 0;
  std::size_t padded = 0;
  std::vector<std::size_t> branching;   // b_1..b_d
  std::vector<std::size_t> widths;      // k_0..k_d, k_0 = 1, k_d = k
  std::vector<double> temperatures;     // tau_1..tau_d

  std::size_t depth() const { return branching.size(); }
  std::size_t k() const { return widths.back(); }
  double tau() const { return temperatures.back(); }

  /// Number of nodes at height j (0 = leaves).
  std::size_t subtrees(std::size_t level) const;
  /// Leaves below one node at height j.
  std::size_t leaves_per_subtree(std::size_t level) const;

  /// Throws std::invalid_argument when a structural invariant fails.
  void validate() const;
};

DnCPlan make_plan(std::size_t num_items, std::size_t k, std::size_t depth,
                  double tau, const PlanOptions& options = {});

/// Smallest b with b^depth >= n.
std::size_t integer_root_ceil(std::size_t n, std::size_t depth);

/// Flat leaf index of 0-based tree coordinates (i_1, ..., i_d).
std::size_t leaf_index(std::span<const std::size_t> coords,
                       std::span<const std::size_t> branching);

/// Sentinel for padded leaves: min - 10 (max - min + 1).
double padding_value(std::span<const double> scores);

/// State after height j.
///   values:  (S_j, k_j)       relaxed top-k_j scores of each node
///   weights: (S_j, k_j, L_j)  compounded relaxed permutation rows over the
///                             L_j leaves of each node
struct LevelState {
  std::size_t level = 0;
  Var values;
  Var weights;
};

/// Height-0 state; `padded_scores` must have plan.padded entries.
LevelState reshape_leaves(Var padded_scores, const DnCPlan& plan);

/// One merge step: height level-1 -> level.
LevelState dnc_level(const LevelState& state, const DnCPlan& plan,
                     std::size_t level);

/// Pads, runs every level and returns the k x padded relaxed permutation
/// rows. Columns >= plan.num_items are padding.
relaxsort::RelaxedPermutation dnc_topk(Var scores, const DnCPlan& plan);

/// The padded score vector dnc_topk feeds to the tree (plain doubles).
std::vector<double> padded_scores(std::span<const double> scores,
                                  const DnCPlan& plan);

struct OpCount {
  std::uint64_t sort_terms = 0;         // sum_j S_j n_j^2 (pairwise sums)
  std::uint64_t row_terms = 0;          // logits, softmax, value contraction
  std::uint64_t weight_contraction = 0; // compounding of permutation weights
  std::uint64_t total() const { return sort_terms + row_terms + weight_contraction; }
};

/// Analytic multiply-add count of one dnc_topk forward pass.
OpCount count_ops(const DnCPlan& plan);

}  // namespace pirank::dnc
