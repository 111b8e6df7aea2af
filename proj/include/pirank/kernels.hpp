#pragma once

// Data-parallel inner loops used by the autodiff operators.
//
// Every kernel has a serial reference and an OpenMP variant. Each output
// element is produced by exactly one thread with the same summation order as
// the reference, so both paths are bitwise identical for any thread count.
// Backward kernels accumulate (+=) into their gradient outputs.

#include <cstddef>
#include <span>

namespace pirank {

enum class Exec { serial, parallel };

/// Caps the OpenMP team size used by Exec::parallel kernels (>= 1).
void set_num_threads(int threads);
int num_threads();

namespace kernels {

// out[i,j] = sum_l a[i,l] * b[l,j]; a is m x n, b is n x p.
void matmul(std::span<const double> a, std::span<const double> b,
            std::size_t m, std::size_t n, std::size_t p, std::span<double> out,
            Exec exec = Exec::parallel);
// grad_a[i,l] += sum_j g[i,j] * b[l,j]; g is m x p, b is n x p.
void matmul_nt_acc(std::span<const double> g, std::span<const double> b,
                   std::size_t m, std::size_t n, std::size_t p,
                   std::span<double> grad_a, Exec exec = Exec::parallel);
// grad_b[l,j] += sum_i a[i,l] * g[i,j]; a is m x n, g is m x p.
void matmul_tn_acc(std::span<const double> a, std::span<const double> g,
                   std::size_t m, std::size_t n, std::size_t p,
                   std::span<double> grad_b, Exec exec = Exec::parallel);

// Batched variants over `batch` independent contiguous problems.
void bmm(std::span<const double> a, std::span<const double> b,
         std::size_t batch, std::size_t m, std::size_t n, std::size_t p,
         std::span<double> out, Exec exec = Exec::parallel);
void bmm_backward(std::span<const double> a, std::span<const double> b,
                  std::span<const double> g, std::size_t batch, std::size_t m,
                  std::size_t n, std::size_t p, std::span<double> grad_a,
                  std::span<double> grad_b, Exec exec = Exec::parallel);

// Row-wise softmax over `rows` rows of length n, with max subtraction.
void softmax_rows(std::span<const double> in, std::size_t rows, std::size_t n,
                  std::span<double> out, Exec exec = Exec::parallel);
void softmax_rows_backward(std::span<const double> out,
                           std::span<const double> grad_out, std::size_t rows,
                           std::size_t n, std::span<double> grad_in,
                           Exec exec = Exec::parallel);
void log_softmax_rows(std::span<const double> in, std::size_t rows,
                      std::size_t n, std::span<double> out,
                      Exec exec = Exec::parallel);
void log_softmax_rows_backward(std::span<const double> out,
                               std::span<const double> grad_out,
                               std::size_t rows, std::size_t n,
                               std::span<double> grad_in,
                               Exec exec = Exec::parallel);

// r[s,c] = sum_c' |y[s,c] - y[s,c']| for each of `blocks` blocks of length n.
// This is the O(n^2) term of the unimodal sorting relaxation.
void abs_rowsum(std::span<const double> y, std::size_t blocks, std::size_t n,
                std::span<double> r, Exec exec = Exec::parallel);
// grad_y[s,a] += sum_c sign(y[s,a] - y[s,c]) * (grad_r[s,a] + grad_r[s,c]),
// with sign(0) = 0.
void abs_rowsum_backward(std::span<const double> y,
                         std::span<const double> grad_r, std::size_t blocks,
                         std::size_t n, std::span<double> grad_y,
                         Exec exec = Exec::parallel);

// z[s,l,c] = ((n + 1 - 2(l+1)) * y[s,c] - r[s,c]) / tau for l < rows.
void neuralsort_logits(std::span<const double> y, std::span<const double> r,
                       std::size_t blocks, std::size_t n, std::size_t rows,
                       double tau, std::span<double> z,
                       Exec exec = Exec::parallel);
// Accumulates the logits gradient into y and r.
void neuralsort_logits_backward(std::span<const double> grad_z,
                                std::size_t blocks, std::size_t n,
                                std::size_t rows, double tau,
                                std::span<double> grad_y,
                                std::span<double> grad_r,
                                Exec exec = Exec::parallel);

}  // namespace kernels
}  // namespace pirank
