#pragma once

#include <cstddef>

namespace driftless::kernels {

// c[m x n] = a[m x k] * b[k x n], all row-major. The serial version is the
// reference; the OpenMP version splits rows across threads and keeps the
// per-element accumulation order, so both produce identical bits.
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);
void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n);

/// Number of threads parallel kernels may use: DRIFTLESS_THREADS when set,
/// otherwise the OpenMP default (1 when built without OpenMP).
int thread_budget();

/// Products smaller than this many multiply-adds run serially.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

}  // namespace driftless::kernels
