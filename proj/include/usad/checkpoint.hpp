#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace usad::io {

// Binary tensor container. Layout, all little-endian:
//   magic "USAD" | u16 version | u32 entry count |
//   per entry: u32 name length | name bytes | u8 dtype | u8 rank |
//              u32 shape[rank] | payload
// dtype tags: 0 = u8 (raw bytes), 1 = f32, 2 = f64.
enum class DType : std::uint8_t { kU8 = 0, kF32 = 1, kF64 = 2 };

inline std::size_t dtype_width(DType t) {
  switch (t) {
    case DType::kU8: return 1;
    case DType::kF32: return 4;
    case DType::kF64: return 8;
  }
  return 0;
}

struct Entry {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;
  std::vector<double> as_f64() const;   // converts f32 payloads
  std::vector<float> as_f32() const;
  std::string as_text() const;          // u8 payloads
};

class Container {
 public:
  static constexpr std::uint16_t kVersion = 1;

  void add_f64(const std::string& name, std::vector<std::uint32_t> shape,
               std::span<const double> values);
  void add_f32(const std::string& name, std::vector<std::uint32_t> shape,
               std::span<const float> values);
  void add_text(const std::string& name, const std::string& text);

  const Entry* find(const std::string& name) const;
  const Entry& require(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static Container load(const std::string& path);

  std::vector<std::uint8_t> serialize() const;
  static Container deserialize(std::span<const std::uint8_t> bytes);

 private:
  std::vector<Entry> entries_;
};

}  // namespace usad::io
