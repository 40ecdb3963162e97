#pragma once

#include "msm/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace msm {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// MSMT binary layout (all little-endian):
//   "MSMT" | u8 version=1 | u8 dtype=1 (f64) | u8 rank | u64 dims[rank] | f64 payload
inline constexpr std::uint8_t kTensorFormatVersion = 1;
inline constexpr std::uint8_t kTensorDtypeF64 = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace msm
