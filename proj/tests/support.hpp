#pragma once

#include <cstddef>
#include <cstdint>

#include "driftless/matrix.hpp"
#include "driftless/rng.hpp"

namespace driftless::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) {
    v = scale * rng.normal();
  }
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double scale = 1.0) {
  Rng rng(seed);
  return random_matrix(rows, cols, rng, scale);
}

}  // namespace driftless::testing
