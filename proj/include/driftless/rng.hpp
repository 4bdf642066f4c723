#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace driftless {

/// splitmix64 finalizer; used to derive child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seeded random stream with deterministic child streams.
///
/// Every distribution is implemented here on top of std::mt19937_64 (whose
/// output sequence the standard fixes) so that draws are identical across
/// standard-library implementations. split(key) depends only on the seed and
/// the key, never on how many values were drawn, which lets callers address
/// a stream by (purpose, frame, step) without threading state around.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  [[nodiscard]] Rng split(std::uint64_t key) const;
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal (Box-Muller, spare cached).
  double normal();
  void fill_normal(std::span<double> out);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream keys shared by the generators so that independent code paths that
// are meant to agree (for example PMWD with K=1 and a direct window loop)
// draw from the same streams.
namespace stream {
inline constexpr std::uint64_t kInitNoise = 0x696e6974ULL;      // "init"
inline constexpr std::uint64_t kStepNoise = 0x73746570ULL;      // "step"
inline constexpr std::uint64_t kHistoryNoise = 0x68697374ULL;   // "hist"
inline constexpr std::uint64_t kFifoRenoise = 0x6669666fULL;    // "fifo"
}  // namespace stream

}  // namespace driftless
