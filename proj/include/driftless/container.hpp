#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "driftless/matrix.hpp"

namespace driftless {

// Byte-level helpers shared by the latent container and checkpoints. All
// multi-byte values are written little-endian regardless of host order.
namespace le {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
void put_bytes(std::ostream& out, std::string_view bytes);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);
std::string get_bytes(std::istream& in, std::size_t count);
}  // namespace le

inline constexpr std::string_view kLatentMagic = "DLAT";
inline constexpr std::uint32_t kLatentVersion = 1;

/// "DLAT", u32 version, u64 F, u64 D, then F*D f64 values frame-major.
void write_latents(const std::filesystem::path& path, const Matrix& latents);
Matrix read_latents(const std::filesystem::path& path);

}  // namespace driftless
