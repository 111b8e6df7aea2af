#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "pirank/relaxsort.hpp"

using namespace pirank;
using namespace pirank::relaxsort;

namespace {

Tensor relaxed_rows(const std::vector<double>& s, double tau, std::size_t k) {
  Graph g;
  return neuralsort(g.constant(Tensor::vector(s)), tau, k).rows.value();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Permutation, RejectsNonBijection) {
  EXPECT_THROW(Permutation({0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(Permutation({0, 3}), std::invalid_argument);
  EXPECT_NO_THROW(Permutation({2, 0, 1}));
}

TEST(HardSort, Examples) {
  EXPECT_EQ(hard_sort_desc(std::vector<double>{0.2, 0.5, 0.3}).order(),
            (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(hard_sort_desc(std::vector<double>{0.2, 0.5, 0.3, 0.4, 0.1, 0.7}).order(),
            (std::vector<std::size_t>{5, 1, 3, 2, 0, 4}));
  EXPECT_EQ(hard_sort_desc(std::vector<double>{1, 1, 1}).order(),
            (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(hard_sort_desc(std::vector<double>{}), std::invalid_argument);
}

TEST(HardSort, MatchesCountingOracle) {
  Rng rng(1);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> s(1 + rng.uniform_int(12));
    for (double& v : s) v = static_cast<double>(rng.uniform_int(4));  // many ties
    EXPECT_EQ(hard_sort_desc(s).order(), oracle::order(s));
  }
}

TEST(PermutationMatrix, Properties) {
  EXPECT_EQ(permutation_matrix(Permutation::identity(3)), Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));

  const Permutation p({1, 2, 0});
  const Tensor m = permutation_matrix(p);
  const std::vector<double> s{0.2, 0.5, 0.3};
  std::vector<double> sorted(3, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) sorted[i] += m.at(i, j) * s[j];
  EXPECT_EQ(sorted, (std::vector<double>{0.5, 0.3, 0.2}));

  const Tensor inv = permutation_matrix(p.inverse());
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double v = 0.0;
      for (std::size_t l = 0; l < 3; ++l) v += m.at(i, l) * inv.at(l, j);
      EXPECT_EQ(v, i == j ? 1.0 : 0.0);
    }
}

TEST(AbsDiffMatrix, SymmetricZeroDiagonal) {
  Rng rng(2);
  const auto s = oracle::uniform_vector(rng, 6, -1, 1);
  const Tensor a = abs_diff_matrix(s);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.at(i, i), 0.0);
    for (std::size_t j = 0; j < 6; ++j) {
      EXPECT_EQ(a.at(i, j), a.at(j, i));
      EXPECT_GE(a.at(i, j), 0.0);
    }
  }
}

TEST(NeuralSort, FirstRowLogits) {
  // Row 1 logits at tau = 1 are (0.0, 0.5, 0.3); compare the softmax of them.
  const Tensor rows = relaxed_rows({0.2, 0.5, 0.3}, 1.0, 1);
  const double z = std::exp(0.0) + std::exp(0.5) + std::exp(0.3);
  EXPECT_NEAR(rows.at(0, 0), std::exp(0.0) / z, 1e-15);
  EXPECT_NEAR(rows.at(0, 1), std::exp(0.5) / z, 1e-15);
  EXPECT_NEAR(rows.at(0, 2), std::exp(0.3) / z, 1e-15);
}

TEST(NeuralSort, MatchesScalarOracle) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.uniform_int(10);
    const std::size_t k = 1 + rng.uniform_int(n);
    const double tau = rng.uniform(0.05, 3.0);
    const auto s = oracle::uniform_vector(rng, n, -2, 2);
    const Tensor rows = relaxed_rows(s, tau, k);
    ASSERT_EQ(rows.shape(), (Shape{k, n}));
    for (std::size_t i = 0; i < k; ++i) {
      const auto expect = oracle::neuralsort_row(s, i, tau);
      for (std::size_t c = 0; c < n; ++c) EXPECT_NEAR(rows.at(i, c), expect[c], 1e-12);
    }
  }
}

TEST(NeuralSort, ZeroTemperatureLimit) {
  const Tensor rows = relaxed_rows({0.2, 0.5, 0.3}, 1e-6, 3);
  EXPECT_LT(max_abs_diff(rows, Tensor::matrix(3, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0})), 1e-12);
}

TEST(NeuralSort, RowArgmaxIsHardSort) {
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.uniform_int(15);
    const auto s = oracle::gapped_scores(rng, n, 0.05);
    const auto arg = row_argmax(relaxed_rows(s, 1.0, n));
    EXPECT_EQ(arg, hard_sort_desc(s).order());
    EXPECT_EQ(std::set<std::size_t>(arg.begin(), arg.end()).size(), n);
  }
}

TEST(NeuralSort, RowStochasticAtAnyTemperature) {
  Rng rng(5);
  for (double tau : {1e-4, 1e-2, 1.0, 100.0}) {
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 1 + rng.uniform_int(16);
      const Tensor rows = relaxed_rows(oracle::uniform_vector(rng, n, -3, 3), tau, n);
      for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          EXPECT_GE(rows.at(i, c), 0.0);
          EXPECT_LE(rows.at(i, c), 1.0);
          total += rows.at(i, c);
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
}

TEST(NeuralSort, ConvergesMonotonically) {
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.uniform_int(15);
    const auto s = oracle::gapped_scores(rng, n, 0.1);
    const Tensor hard = permutation_matrix(hard_sort_desc(s));
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {1.0, 0.1, 0.01, 0.001}) {
      const double d = max_abs_diff(relaxed_rows(s, tau, n), hard);
      EXPECT_LE(d, prev) << "tau=" << tau;
      prev = d;
    }
    EXPECT_LE(prev, 1e-6);
  }
}

TEST(NeuralSort, ShiftKeepsArgmax) {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const auto s = oracle::gapped_scores(rng, 8, 0.05);
    auto shifted = s;
    for (double& v : shifted) v += 3.7;
    EXPECT_EQ(row_argmax(relaxed_rows(s, 0.5, 8)), row_argmax(relaxed_rows(shifted, 0.5, 8)));
  }
}

TEST(NeuralSort, RejectsBadArguments) {
  Graph g;
  Var s = g.constant(Tensor::vector({1, 2, 3}));
  EXPECT_THROW(neuralsort(s, 0.0, 2), std::invalid_argument);
  EXPECT_THROW(neuralsort(s, -1.0, 2), std::invalid_argument);
  EXPECT_THROW(neuralsort(s, 1.0, 4), std::invalid_argument);
}

TEST(StraightThrough, ForwardIsHardTopK) {
  const std::vector<double> s{0.2, 0.5, 0.3};
  for (double tau : {0.1, 1.0, 100.0}) {
    Graph g;
    Var x = g.leaf(Tensor::vector(s));
    Var st = straight_through(neuralsort(x, tau, 2), s);
    EXPECT_EQ(st.value(), Tensor::matrix(2, 3, {0, 1, 0, 0, 0, 1})) << tau;
  }
}

TEST(StraightThrough, GradientEqualsRelaxed) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.uniform_int(8);
    const auto s = oracle::uniform_vector(rng, n, -1, 1);
    const auto w = oracle::uniform_vector(rng, 2 * n, 0, 3);
    auto grad = [&](bool st) {
      Graph g;
      Var x = g.leaf(Tensor::vector(s));
      RelaxedPermutation r = neuralsort(x, 0.7, 2);
      Var rows = st ? straight_through(r, s) : r.rows;
      Var loss = sum(mul(rows, g.constant(Tensor({2, n}, w))));
      return g.backward(loss)[x];
    };
    EXPECT_EQ(grad(true), grad(false));
  }
}
