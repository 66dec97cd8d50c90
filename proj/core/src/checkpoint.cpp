#include "proxytr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "proxytr/errors.hpp"

namespace proxytr {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(U)) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(raw), std::end(raw));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, raw, sizeof(U));
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
CheckpointEntry CheckpointEntry::from(std::string name, const NDArray<T>& array) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;
  e.shape = array.shape();
  e.values.assign(array.data().begin(), array.data().end());
  return e;
}

template <typename T>
NDArray<T> CheckpointEntry::to_array() const {
  std::vector<T> data(values.begin(), values.end());
  return NDArray<T>(shape, std::move(data));
}

template CheckpointEntry CheckpointEntry::from(std::string, const NDArray<float>&);
template CheckpointEntry CheckpointEntry::from(std::string, const NDArray<double>&);
template NDArray<float> CheckpointEntry::to_array() const;
template NDArray<double> CheckpointEntry::to_array() const;

std::string encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::string out = "PTRK";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw CheckpointError("entry '" + e.name + "' has " + std::to_string(e.values.size()) + " values for shape " +
                            shape_to_string(e.shape));
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto extent : e.shape) put<std::uint64_t>(out, extent);
    for (double v : e.values) {
      if (e.dtype == DType::f32) {
        put<float>(out, static_cast<float>(v));
      } else {
        put<double>(out, v);
      }
    }
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != "PTRK") throw CheckpointError("not a checkpoint: bad magic bytes");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = in.get<std::uint32_t>("entry count");
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = in.get<std::uint32_t>("name length");
    e.name = std::string(in.take(name_len, "name"));
    const auto tag = in.get<std::uint8_t>("dtype");
    if (tag > 1) throw CheckpointError("entry '" + e.name + "' has unknown dtype tag " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    const auto rank = in.get<std::uint32_t>("rank");
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>("extent")));
    const std::size_t n = shape_numel(e.shape);
    const std::size_t width = e.dtype == DType::f32 ? 4 : 8;
    if (n > bytes.size() / width) throw CheckpointError("truncated checkpoint in values of '" + e.name + "'");
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      e.values[k] = e.dtype == DType::f32 ? static_cast<double>(in.get<float>("values")) : in.get<double>("values");
    }
    entries.push_back(std::move(e));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after last checkpoint entry");
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
  const std::string bytes = encode_checkpoint(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing '" + path.string() + "'");
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace proxytr
