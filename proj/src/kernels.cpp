#include "pirank/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "omp.hpp"

namespace pirank {

namespace {
int g_threads = 1;

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

void set_num_threads(int threads) { g_threads = std::max(1, threads); }
int num_threads() { return g_threads; }

namespace kernels {

namespace ref {

void matmul(std::span<const double> a, std::span<const double> b,
            std::size_t m, std::size_t n, std::size_t p,
            std::span<double> out) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < n; ++l) acc += a[i * n + l] * b[l * p + j];
      out[i * p + j] = acc;
    }
  }
}

void matmul_nt_acc(std::span<const double> g, std::span<const double> b,
                   std::size_t m, std::size_t n, std::size_t p,
                   std::span<double> grad_a) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < n; ++l) {
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * b[l * p + j];
      grad_a[i * n + l] += acc;
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> g,
                   std::size_t m, std::size_t n, std::size_t p,
                   std::span<double> grad_b) {
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * n + l] * g[i * p + j];
      grad_b[l * p + j] += acc;
    }
  }
}

void softmax_row(const double* in, std::size_t n, double* out) {
  double mx = in[0];
  for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, in[c]);
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    out[c] = std::exp(in[c] - mx);
    total += out[c];
  }
  for (std::size_t c = 0; c < n; ++c) out[c] /= total;
}

void softmax_row_backward(const double* out, const double* g, std::size_t n,
                          double* grad_in) {
  double dot = 0.0;
  for (std::size_t c = 0; c < n; ++c) dot += out[c] * g[c];
  for (std::size_t c = 0; c < n; ++c) grad_in[c] += out[c] * (g[c] - dot);
}

void log_softmax_row(const double* in, std::size_t n, double* out) {
  double mx = in[0];
  for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, in[c]);
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) total += std::exp(in[c] - mx);
  const double lse = mx + std::log(total);
  for (std::size_t c = 0; c < n; ++c) out[c] = in[c] - lse;
}

void log_softmax_row_backward(const double* out, const double* g,
                              std::size_t n, double* grad_in) {
  double gsum = 0.0;
  for (std::size_t c = 0; c < n; ++c) gsum += g[c];
  for (std::size_t c = 0; c < n; ++c) grad_in[c] += g[c] - std::exp(out[c]) * gsum;
}

double abs_rowsum_at(const double* y, std::size_t n, std::size_t c) {
  double acc = 0.0;
  const double v = y[c];
  for (std::size_t o = 0; o < n; ++o) acc += std::abs(v - y[o]);
  return acc;
}

double abs_rowsum_grad_at(const double* y, const double* gr, std::size_t n,
                          std::size_t a) {
  double acc = 0.0;
  const double v = y[a];
  const double ga = gr[a];
  for (std::size_t c = 0; c < n; ++c) acc += sign_of(v - y[c]) * (ga + gr[c]);
  return acc;
}

}  // namespace ref

void matmul(std::span<const double> a, std::span<const double> b,
            std::size_t m, std::size_t n, std::size_t p, std::span<double> out,
            Exec exec) {
  if (exec == Exec::serial) return ref::matmul(a, b, m, n, p, out);
  const auto rows = static_cast<std::int64_t>(m);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* row = out.data() + i * p;
    if (p == 1) {
      const double* arow = a.data() + i * n;
      double acc = 0.0;
      for (std::size_t l = 0; l < n; ++l) acc += arow[l] * b[l];
      row[0] = acc;
      continue;
    }
    std::fill(row, row + p, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
      const double av = a[i * n + l];
      const double* brow = b.data() + l * p;
      for (std::size_t j = 0; j < p; ++j) row[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(std::span<const double> g, std::span<const double> b,
                   std::size_t m, std::size_t n, std::size_t p,
                   std::span<double> grad_a, Exec exec) {
  if (exec == Exec::serial) return ref::matmul_nt_acc(g, b, m, n, p, grad_a);
  const auto rows = static_cast<std::int64_t>(m);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* grow = g.data() + i * p;
    for (std::size_t l = 0; l < n; ++l) {
      const double* brow = b.data() + l * p;
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += grow[j] * brow[j];
      grad_a[i * n + l] += acc;
    }
  }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> g,
                   std::size_t m, std::size_t n, std::size_t p,
                   std::span<double> grad_b, Exec exec) {
  if (exec == Exec::serial) return ref::matmul_tn_acc(a, g, m, n, p, grad_b);
  // Each thread owns whole rows of grad_b; the sum over i stays ascending.
  const auto rows = static_cast<std::int64_t>(n);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t ll = 0; ll < rows; ++ll) {
    const auto l = static_cast<std::size_t>(ll);
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * n + l] * g[i * p + j];
      grad_b[l * p + j] += acc;
    }
  }
}

void bmm(std::span<const double> a, std::span<const double> b,
         std::size_t batch, std::size_t m, std::size_t n, std::size_t p,
         std::span<double> out, Exec exec) {
  const auto count = static_cast<std::int64_t>(batch);
  if (exec == Exec::serial) {
    for (std::size_t t = 0; t < batch; ++t) {
      ref::matmul(a.subspan(t * m * n, m * n), b.subspan(t * n * p, n * p), m,
                  n, p, out.subspan(t * m * p, m * p));
    }
    return;
  }
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t tt = 0; tt < count; ++tt) {
    const auto t = static_cast<std::size_t>(tt);
    ref::matmul(a.subspan(t * m * n, m * n), b.subspan(t * n * p, n * p), m, n,
                p, out.subspan(t * m * p, m * p));
  }
}

void bmm_backward(std::span<const double> a, std::span<const double> b,
                  std::span<const double> g, std::size_t batch, std::size_t m,
                  std::size_t n, std::size_t p, std::span<double> grad_a,
                  std::span<double> grad_b, Exec exec) {
  auto one = [&](std::size_t t) {
    auto gt = g.subspan(t * m * p, m * p);
    if (!grad_a.empty()) {
      ref::matmul_nt_acc(gt, b.subspan(t * n * p, n * p), m, n, p,
                         grad_a.subspan(t * m * n, m * n));
    }
    if (!grad_b.empty()) {
      ref::matmul_tn_acc(a.subspan(t * m * n, m * n), gt, m, n, p,
                         grad_b.subspan(t * n * p, n * p));
    }
  };
  if (exec == Exec::serial) {
    for (std::size_t t = 0; t < batch; ++t) one(t);
    return;
  }
  const auto count = static_cast<std::int64_t>(batch);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t tt = 0; tt < count; ++tt) one(static_cast<std::size_t>(tt));
}

void softmax_rows(std::span<const double> in, std::size_t rows, std::size_t n,
                  std::span<double> out, Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t r = 0; r < rows; ++r)
      ref::softmax_row(in.data() + r * n, n, out.data() + r * n);
    return;
  }
  const auto count = static_cast<std::int64_t>(rows);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t r = 0; r < count; ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    ref::softmax_row(in.data() + off, n, out.data() + off);
  }
}

void softmax_rows_backward(std::span<const double> out,
                           std::span<const double> grad_out, std::size_t rows,
                           std::size_t n, std::span<double> grad_in,
                           Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t r = 0; r < rows; ++r)
      ref::softmax_row_backward(out.data() + r * n, grad_out.data() + r * n, n,
                                grad_in.data() + r * n);
    return;
  }
  const auto count = static_cast<std::int64_t>(rows);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t r = 0; r < count; ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    ref::softmax_row_backward(out.data() + off, grad_out.data() + off, n,
                              grad_in.data() + off);
  }
}

void log_softmax_rows(std::span<const double> in, std::size_t rows,
                      std::size_t n, std::span<double> out, Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t r = 0; r < rows; ++r)
      ref::log_softmax_row(in.data() + r * n, n, out.data() + r * n);
    return;
  }
  const auto count = static_cast<std::int64_t>(rows);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t r = 0; r < count; ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    ref::log_softmax_row(in.data() + off, n, out.data() + off);
  }
}

void log_softmax_rows_backward(std::span<const double> out,
                               std::span<const double> grad_out,
                               std::size_t rows, std::size_t n,
                               std::span<double> grad_in, Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t r = 0; r < rows; ++r)
      ref::log_softmax_row_backward(out.data() + r * n,
                                    grad_out.data() + r * n, n,
                                    grad_in.data() + r * n);
    return;
  }
  const auto count = static_cast<std::int64_t>(rows);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t r = 0; r < count; ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    ref::log_softmax_row_backward(out.data() + off, grad_out.data() + off, n,
                                  grad_in.data() + off);
  }
}

void abs_rowsum(std::span<const double> y, std::size_t blocks, std::size_t n,
                std::span<double> r, Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t s = 0; s < blocks; ++s)
      for (std::size_t c = 0; c < n; ++c)
        r[s * n + c] = ref::abs_rowsum_at(y.data() + s * n, n, c);
    return;
  }
  // Flattened so a single large block still spreads across threads.
  const auto total = static_cast<std::int64_t>(blocks * n);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t t = 0; t < total; ++t) {
    const auto idx = static_cast<std::size_t>(t);
    const std::size_t s = idx / n;
    r[idx] = ref::abs_rowsum_at(y.data() + s * n, n, idx - s * n);
  }
}

void abs_rowsum_backward(std::span<const double> y,
                         std::span<const double> grad_r, std::size_t blocks,
                         std::size_t n, std::span<double> grad_y, Exec exec) {
  if (exec == Exec::serial) {
    for (std::size_t s = 0; s < blocks; ++s)
      for (std::size_t a = 0; a < n; ++a)
        grad_y[s * n + a] += ref::abs_rowsum_grad_at(
            y.data() + s * n, grad_r.data() + s * n, n, a);
    return;
  }
  const auto total = static_cast<std::int64_t>(blocks * n);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t t = 0; t < total; ++t) {
    const auto idx = static_cast<std::size_t>(t);
    const std::size_t s = idx / n;
    grad_y[idx] += ref::abs_rowsum_grad_at(y.data() + s * n,
                                           grad_r.data() + s * n, n, idx - s * n);
  }
}

void neuralsort_logits(std::span<const double> y, std::span<const double> r,
                       std::size_t blocks, std::size_t n, std::size_t rows,
                       double tau, std::span<double> z, Exec exec) {
  auto one = [&](std::size_t s) {
    for (std::size_t l = 0; l < rows; ++l) {
      const double coef = static_cast<double>(n + 1) - 2.0 * static_cast<double>(l + 1);
      double* zrow = z.data() + (s * rows + l) * n;
      for (std::size_t c = 0; c < n; ++c)
        zrow[c] = (coef * y[s * n + c] - r[s * n + c]) / tau;
    }
  };
  if (exec == Exec::serial) {
    for (std::size_t s = 0; s < blocks; ++s) one(s);
    return;
  }
  const auto count = static_cast<std::int64_t>(blocks);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t s = 0; s < count; ++s) one(static_cast<std::size_t>(s));
}

void neuralsort_logits_backward(std::span<const double> grad_z,
                                std::size_t blocks, std::size_t n,
                                std::size_t rows, double tau,
                                std::span<double> grad_y,
                                std::span<double> grad_r, Exec exec) {
  auto one = [&](std::size_t s) {
    for (std::size_t c = 0; c < n; ++c) {
      double gy = 0.0;
      double gr = 0.0;
      for (std::size_t l = 0; l < rows; ++l) {
        const double coef = static_cast<double>(n + 1) - 2.0 * static_cast<double>(l + 1);
        const double g = grad_z[(s * rows + l) * n + c] / tau;
        gy += coef * g;
        gr -= g;
      }
      if (!grad_y.empty()) grad_y[s * n + c] += gy;
      if (!grad_r.empty()) grad_r[s * n + c] += gr;
    }
  };
  if (exec == Exec::serial) {
    for (std::size_t s = 0; s < blocks; ++s) one(s);
    return;
  }
  const auto count = static_cast<std::int64_t>(blocks);
  PIRANK_OMP(parallel for schedule(static) num_threads(g_threads))
  for (std::int64_t s = 0; s < count; ++s) one(static_cast<std::size_t>(s));
}

}  // namespace kernels
}  // namespace pirank
