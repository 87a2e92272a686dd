#include "gdml/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include <fmt/format.h>

#include "gdml/error.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace gdml {

const char* to_string(DType t) noexcept {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[4] = {'G', 'D', 'M', 'L'};

std::size_t dtype_size(DType t) { return t == DType::f64 ? 8 : 4; }

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> in, const std::string& origin) : in_(in), origin_(origin) {}

  template <typename T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw DataError(fmt::format("{}: truncated container while reading {} at byte {}", origin_, what, pos_));
    }
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const noexcept { return pos_ == in_.size(); }
  std::size_t pos() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  const std::string& origin_;
};

}  // namespace

void TensorContainer::add(std::string name, Tensor value, DType dtype) {
  if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ContractError(fmt::format("container entry name length {} out of range", name.size()));
  }
  if (contains(name)) throw ContractError(fmt::format("container entry '{}' added twice", name));
  if (value.rank() > std::numeric_limits<std::uint8_t>::max()) throw ContractError("container entry rank exceeds 255");
  for (std::size_t d : value.shape) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ContractError("container dimension exceeds u32");
  }
  if (dtype == DType::i32) {
    for (double v : value.data) {
      if (v != std::trunc(v) || v < std::numeric_limits<std::int32_t>::min() ||
          v > std::numeric_limits<std::int32_t>::max()) {
        throw ContractError(fmt::format("container entry '{}': {} is not an i32 value", name, v));
      }
    }
  }
  entries_.push_back({std::move(name), dtype, std::move(value)});
}

bool TensorContainer::contains(std::string_view name) const noexcept {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const TensorContainer::Entry& TensorContainer::entry(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw DataError(fmt::format("container has no entry '{}'", name));
}

std::vector<std::uint8_t> TensorContainer::to_bytes() const {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.value.rank()));
    for (std::size_t d : e.value.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : e.value.data) {
      switch (e.dtype) {
        case DType::f32: w.put<float>(static_cast<float>(v)); break;
        case DType::f64: w.put<double>(v); break;
        case DType::i32: w.put<std::int32_t>(static_cast<std::int32_t>(v)); break;
      }
    }
  }
  return w.take();
}

TensorContainer TensorContainer::from_bytes(std::span<const std::uint8_t> bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) throw DataError(fmt::format("{}: not a GDML container", origin));
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion) throw DataError(fmt::format("{}: unsupported container version {}", origin, version));
  const auto count = r.get<std::uint32_t>("entry count");
  TensorContainer c;
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name(reinterpret_cast<const char*>(r.take(len, "name")), len);
    if (!seen.insert(name).second) throw DataError(fmt::format("{}: duplicate entry '{}'", origin, name));
    const auto tag = r.get<std::uint8_t>("dtype");
    if (tag < 1 || tag > 3) throw DataError(fmt::format("{}: entry '{}' has unknown dtype tag {}", origin, name, tag));
    const auto dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>("dims");
      if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) throw DataError(fmt::format("{}: '{}' too large", origin, name));
      n *= d;
    }
    if (n > (bytes.size() - r.pos()) / dtype_size(dtype)) {
      throw DataError(fmt::format("{}: entry '{}' {} needs {} bytes of {} payload, {} remain", origin, name,
                                  shape_str(shape), n * dtype_size(dtype), to_string(dtype), bytes.size() - r.pos()));
    }
    Tensor t(shape);
    for (double& v : t.data) {
      switch (dtype) {
        case DType::f32: v = r.get<float>("payload"); break;
        case DType::f64: v = r.get<double>("payload"); break;
        case DType::i32: v = r.get<std::int32_t>("payload"); break;
      }
    }
    c.entries_.push_back({std::move(name), dtype, std::move(t)});
  }
  if (!r.done()) throw DataError(fmt::format("{}: {} trailing bytes after the last entry", origin, bytes.size() - r.pos()));
  return c;
}

void TensorContainer::save(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(fmt::format("short write to '{}'", path.string()));
}

TensorContainer TensorContainer::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_bytes(bytes, path.string());
}

}  // namespace gdml
