#include "driftless/container.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "driftless/errors.hpp"

namespace driftless {

namespace le {

namespace {

template <typename U>
void put(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

template <typename U>
U get(std::istream& in) {
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) {
    throw FormatError("unexpected end of file");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }
void put_bytes(std::ostream& out, std::string_view bytes) {
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}
std::uint32_t get_u32(std::istream& in) { return get<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get<std::uint64_t>(in); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }
std::string get_bytes(std::istream& in, std::size_t count) {
  std::string s(count, '\0');
  in.read(s.data(), static_cast<std::streamsize>(count));
  if (!in) {
    throw FormatError("unexpected end of file");
  }
  return s;
}

}  // namespace le

void write_latents(const std::filesystem::path& path, const Matrix& latents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  le::put_bytes(out, kLatentMagic);
  le::put_u32(out, kLatentVersion);
  le::put_u64(out, latents.rows());
  le::put_u64(out, latents.cols());
  for (double v : latents.data()) {
    le::put_f64(out, v);
  }
  if (!out) {
    throw FormatError("write failed for " + path.string());
  }
}

Matrix read_latents(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  if (le::get_bytes(in, kLatentMagic.size()) != kLatentMagic) {
    throw FormatError(path.string() + ": not a latent container");
  }
  if (const auto version = le::get_u32(in); version != kLatentVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto frames = le::get_u64(in);
  const auto dims = le::get_u64(in);
  if (frames > (1ULL << 32) || dims > (1ULL << 20)) {
    throw FormatError(path.string() + ": implausible shape");
  }
  Matrix m(frames, dims);
  for (double& v : m.data()) {
    v = le::get_f64(in);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes");
  }
  return m;
}

}  // namespace driftless
