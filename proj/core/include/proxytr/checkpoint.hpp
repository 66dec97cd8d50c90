#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "proxytr/tensor.hpp"

namespace proxytr {

// Binary container layout (all integers little-endian):
//   "PTRK" | u32 version | u32 entry count
//   per entry: u32 name length | name (UTF-8) | u8 dtype (0=f32, 1=f64)
//              | u32 rank | u64 extents[rank] | raw little-endian values
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<double> values;  // f32 entries hold exactly representable floats

  template <typename T>
  static CheckpointEntry from(std::string name, const NDArray<T>& array);

  template <typename T>
  NDArray<T> to_array() const;
};

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

}  // namespace proxytr
