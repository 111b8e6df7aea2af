#include "pirank/relaxsort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pirank::relaxsort {

Permutation::Permutation(std::vector<std::size_t> order) : order_(std::move(order)) {
  std::vector<bool> seen(order_.size(), false);
  for (std::size_t idx : order_) {
    if (idx >= order_.size() || seen[idx]) {
      throw std::invalid_argument("not a permutation of 0.." +
                                  std::to_string(order_.size()) + "-1");
    }
    seen[idx] = true;
  }
}

Permutation Permutation::identity(std::size_t size) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return Permutation(std::move(order));
}

std::vector<std::size_t> Permutation::rank_of() const {
  std::vector<std::size_t> ranks(order_.size());
  for (std::size_t j = 0; j < order_.size(); ++j) ranks[order_[j]] = j;
  return ranks;
}

Permutation Permutation::inverse() const { return Permutation(rank_of()); }

Permutation hard_sort_desc(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("cannot sort an empty score list");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return Permutation(std::move(order));
}

Tensor permutation_matrix(const Permutation& perm, std::size_t rows) {
  const std::size_t n = perm.size();
  if (rows == 0) rows = n;
  if (rows > n) throw std::invalid_argument("more rows than items");
  Tensor out(Shape{rows, n});
  for (std::size_t j = 0; j < rows; ++j) out.at(j, perm[j]) = 1.0;
  return out;
}

Tensor abs_diff_matrix(std::span<const double> scores) {
  const std::size_t n = scores.size();
  Tensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = std::abs(scores[i] - scores[j]);
  return out;
}

RelaxedPermutation neuralsort(Var scores, double tau, std::size_t k) {
  if (scores.shape().size() != 1) {
    throw std::invalid_argument("neuralsort expects a score vector, got " +
                                shape_str(scores.shape()));
  }
  Var rows = softmax_rows(neuralsort_logits(scores, k, tau));
  return RelaxedPermutation{rows, tau, scores.size()};
}

Var straight_through(const RelaxedPermutation& relaxed,
                     std::span<const double> scores) {
  if (scores.size() != relaxed.columns()) {
    throw std::invalid_argument("straight-through needs one score per column");
  }
  Tensor hard = permutation_matrix(hard_sort_desc(scores), relaxed.k());
  return pirank::straight_through(relaxed.rows, hard);
}

std::vector<std::size_t> row_argmax(const Tensor& matrix) {
  const std::size_t rows = matrix.dim(0);
  const std::size_t cols = matrix.dim(1);
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (matrix.at(r, c) > matrix.at(r, best)) best = c;
    out[r] = best;
  }
  return out;
}

}  // namespace pirank::relaxsort
