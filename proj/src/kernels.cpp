#include "driftless/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace driftless::kernels {

namespace {

inline void matmul_rows(const double* a, const double* b, double* c, std::size_t row_begin,
                        std::size_t row_end, std::size_t k, std::size_t n) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    double* out = c + i * n;
    std::fill(out, out + n, 0.0);
    const double* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double scale = a_row[p];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        out[j] += scale * b_row[j];
      }
    }
  }
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  matmul_rows(a, b, c, 0, m, k, n);
}

void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
#ifdef _OPENMP
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) num_threads(thread_budget())
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto row = static_cast<std::size_t>(i);
    matmul_rows(a, b, c, row, row + 1, k, n);
  }
#else
  matmul_rows(a, b, c, 0, m, k, n);
#endif
}

int thread_budget() {
  static const int budget = [] {
    int available = 1;
#ifdef _OPENMP
    available = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("DRIFTLESS_THREADS")) {
      try {
        const int requested = std::stoi(env);
        if (requested >= 1) {
          return std::min(requested, available);
        }
      } catch (const std::exception&) {
        // ignored: malformed value falls back to the default
      }
    }
    return available;
  }();
  return budget;
}

}  // namespace driftless::kernels
