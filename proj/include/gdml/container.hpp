#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdml/tensor.hpp"

namespace gdml {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i32 = 3 };
const char* to_string(DType t) noexcept;

// Named tensors in a little-endian binary file:
//   "GDML" | u16 version | u32 count | entries...
//   entry: u16 name length | name | u8 dtype | u8 rank | u32 dims[rank] | payload
// Values are held as doubles in memory; f32 and i32 entries are converted on
// write, so a value survives a round trip only if its dtype represents it.
class TensorContainer {
 public:
  static constexpr std::uint16_t kVersion = 1;

  struct Entry {
    std::string name;
    DType dtype = DType::f64;
    Tensor value;
  };

  void add(std::string name, Tensor value, DType dtype = DType::f64);
  bool contains(std::string_view name) const noexcept;
  const Entry& entry(std::string_view name) const;
  const Tensor& at(std::string_view name) const { return entry(name).value; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::vector<std::uint8_t> to_bytes() const;
  static TensorContainer from_bytes(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace gdml
