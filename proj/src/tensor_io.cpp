#include "msm/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace msm {

namespace {

constexpr std::array<char, 4> kMagic{'M', 'S', 'M', 'T'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw FormatError("truncated MSMT header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
  return v;
}

std::uint8_t get_u8(std::istream& is) {
  char c = 0;
  if (!is.get(c)) throw FormatError("truncated MSMT header");
  return static_cast<std::uint8_t>(c);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic.data(), kMagic.size());
  os.put(static_cast<char>(kTensorFormatVersion));
  os.put(static_cast<char>(kTensorDtypeF64));
  os.put(static_cast<char>(t.rank()));
  for (Index d : t.shape()) put_u64(os, static_cast<std::uint64_t>(d));
  for (Index i = 0; i < t.size(); ++i) put_u64(os, std::bit_cast<std::uint64_t>(t[i]));
  if (!os) throw FormatError("failed writing MSMT tensor");
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("bad MSMT magic");
  if (get_u8(is) != kTensorFormatVersion) throw FormatError("unsupported MSMT version");
  if (get_u8(is) != kTensorDtypeF64) throw FormatError("unsupported MSMT dtype");
  const std::uint8_t rank = get_u8(is);
  Shape shape;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const std::uint64_t d = get_u64(is);
    if (d == 0 || d > (1ull << 40)) throw FormatError("bad MSMT dimension");
    shape.push_back(static_cast<Index>(d));
  }
  Vector data(shape_size(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(get_u64(is));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace msm
