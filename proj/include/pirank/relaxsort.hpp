#pragma once

// Exact sorting machinery and the unimodal (NeuralSort) relaxation of the
// descending-sort permutation matrix. Indices are 0-based throughout.

#include <cstddef>
#include <span>
#include <vector>

#include "pirank/autodiff.hpp"
#include "pirank/tensor.hpp"

namespace pirank::relaxsort {

/// Ranking: order()[j] is the index of the item placed at rank j.
class Permutation {
 public:
  Permutation() = default;
  /// Throws std::invalid_argument unless `order` is a bijection on 0..L-1.
  explicit Permutation(std::vector<std::size_t> order);

  static Permutation identity(std::size_t size);

  std::size_t size() const { return order_.size(); }
  std::size_t operator[](std::size_t rank) const { return order_[rank]; }
  const std::vector<std::size_t>& order() const { return order_; }

  /// rank_of()[i] is the rank of item i.
  std::vector<std::size_t> rank_of() const;
  Permutation inverse() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> order_;
};

/// Descending order; ties keep the smaller original index first.
Permutation hard_sort_desc(std::span<const double> scores);

/// Rows 0..rows-1 of the permutation matrix (row j has a 1 at column
/// order[j]). rows == 0 means all L rows.
Tensor permutation_matrix(const Permutation& perm, std::size_t rows = 0);

/// [A]_ij = |s_i - s_j|.
Tensor abs_diff_matrix(std::span<const double> scores);

/// First k rows of a relaxed sort operator over `columns` inputs. Columns at
/// index >= num_items are padding (divide-and-conquer only).
struct RelaxedPermutation {
  Var rows;  // shape (k, columns)
  double tau = 1.0;
  std::size_t num_items = 0;

  std::size_t k() const { return rows.shape()[0]; }
  std::size_t columns() const { return rows.shape()[1]; }
};

/// Rows 1..k of softmax(((L + 1 - 2i) s - A_s 1) / tau).
RelaxedPermutation neuralsort(Var scores, double tau, std::size_t k);

/// Forward value: the hard top-k permutation rows of `scores` (which must
/// cover every column of `relaxed`). Backward: the relaxed gradient.
Var straight_through(const RelaxedPermutation& relaxed,
                     std::span<const double> scores);

/// Row-wise argmax of a k x L matrix (first maximum on ties).
std::vector<std::size_t> row_argmax(const Tensor& matrix);

}  // namespace pirank::relaxsort
