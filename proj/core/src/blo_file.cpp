#include "blo/blo_file.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "blo/errors.hpp"

namespace blo {
namespace {

constexpr std::array<char, 4> kMagic = {'B', 'L', 'O', '1'};

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return v;
  }
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64(std::ofstream& out, double d) {
  auto bits = to_little(std::bit_cast<std::uint64_t>(d));
  out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("BLO1: truncated");
  return to_little(v);
}

double get_f64(std::ifstream& in) {
  std::uint64_t bits = 0;
  if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits))
    throw std::runtime_error("BLO1: truncated data");
  return std::bit_cast<double>(to_little(bits));
}

std::uint64_t element_count(std::span<const std::uint32_t> extents) {
  return std::accumulate(extents.begin(), extents.end(), std::uint64_t{1},
                         [](std::uint64_t a, std::uint32_t b) { return a * b; });
}

}  // namespace

void write_blo1(const std::filesystem::path& path, std::span<const std::uint32_t> extents,
                std::span<const double> values) {
  if (element_count(extents) != values.size())
    throw InvalidArgument("write_blo1: extents do not match value count");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_blo1: cannot open " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(extents.size()));
  for (std::uint32_t e : extents) put_u32(out, e);
  for (double v : values) put_f64(out, v);
  if (!out) throw std::runtime_error("write_blo1: write failed for " + path.string());
}

BloArray read_blo1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_blo1: cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw std::runtime_error("read_blo1: bad magic in " + path.string());
  BloArray arr;
  const std::uint32_t rank = get_u32(in);
  arr.extents.resize(rank);
  for (auto& e : arr.extents) e = get_u32(in);
  const std::uint64_t count = element_count(arr.extents);
  arr.values.resize(count);
  for (auto& v : arr.values) v = get_f64(in);
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("read_blo1: trailing bytes in " + path.string());
  return arr;
}

}  // namespace blo
