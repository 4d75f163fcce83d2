#include "usad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace usad::io {

namespace {

constexpr char kMagic[4] = {'U', 'S', 'A', 'D'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw std::runtime_error("corrupt container: truncated data");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes.subspan(pos, n);
    pos += n;
    return s;
  }
};

static_assert(std::endian::native == std::endian::little,
              "payload swapping for big-endian hosts is not implemented");

}  // namespace

std::size_t Entry::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? payload.size() / dtype_width(dtype) : n;
}

std::vector<double> Entry::as_f64() const {
  const std::size_t n = payload.size() / dtype_width(dtype);
  std::vector<double> out(n);
  if (dtype == DType::kF64) {
    std::memcpy(out.data(), payload.data(), payload.size());
  } else if (dtype == DType::kF32) {
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, payload.data() + 4 * i, 4);
      out[i] = static_cast<double>(f);
    }
  } else {
    throw std::runtime_error("entry '" + name + "' is not numeric");
  }
  return out;
}

std::vector<float> Entry::as_f32() const {
  const std::size_t n = payload.size() / dtype_width(dtype);
  std::vector<float> out(n);
  if (dtype == DType::kF32) {
    std::memcpy(out.data(), payload.data(), payload.size());
  } else if (dtype == DType::kF64) {
    for (std::size_t i = 0; i < n; ++i) {
      double d;
      std::memcpy(&d, payload.data() + 8 * i, 8);
      out[i] = static_cast<float>(d);
    }
  } else {
    throw std::runtime_error("entry '" + name + "' is not numeric");
  }
  return out;
}

std::string Entry::as_text() const {
  if (dtype != DType::kU8) throw std::runtime_error("entry '" + name + "' is not text");
  return std::string(payload.begin(), payload.end());
}

void Container::add_f64(const std::string& name, std::vector<std::uint32_t> shape,
                        std::span<const double> values) {
  Entry e;
  e.name = name;
  e.dtype = DType::kF64;
  e.shape = std::move(shape);
  e.payload.resize(values.size() * 8);
  std::memcpy(e.payload.data(), values.data(), e.payload.size());
  if (e.element_count() != values.size()) {
    throw std::invalid_argument("container entry '" + name + "': shape/data mismatch");
  }
  entries_.push_back(std::move(e));
}

void Container::add_f32(const std::string& name, std::vector<std::uint32_t> shape,
                        std::span<const float> values) {
  Entry e;
  e.name = name;
  e.dtype = DType::kF32;
  e.shape = std::move(shape);
  e.payload.resize(values.size() * 4);
  std::memcpy(e.payload.data(), values.data(), e.payload.size());
  if (e.element_count() != values.size()) {
    throw std::invalid_argument("container entry '" + name + "': shape/data mismatch");
  }
  entries_.push_back(std::move(e));
}

void Container::add_text(const std::string& name, const std::string& text) {
  Entry e;
  e.name = name;
  e.dtype = DType::kU8;
  e.shape = {static_cast<std::uint32_t>(text.size())};
  e.payload.assign(text.begin(), text.end());
  entries_.push_back(std::move(e));
}

const Entry* Container::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const Entry& Container::require(const std::string& name) const {
  const Entry* e = find(name);
  if (e == nullptr) throw std::runtime_error("container is missing entry '" + name + "'");
  return *e;
}

std::vector<std::uint8_t> Container::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    out.push_back(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) put_u32(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Container Container::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw std::runtime_error("corrupt container: bad magic");
  }
  const auto version = r.u16();
  if (version != kVersion) {
    throw std::runtime_error("corrupt container: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = r.u32();
    const auto name_bytes = r.take(name_len);
    e.name.assign(name_bytes.begin(), name_bytes.end());
    const auto dtype = r.u8();
    if (dtype > 2) throw std::runtime_error("corrupt container: bad dtype tag");
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.u8();
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      e.shape.push_back(r.u32());
      n *= e.shape.back();
    }
    if (rank == 0) n = 0;
    const auto payload = r.take(n * dtype_width(e.dtype));
    e.payload.assign(payload.begin(), payload.end());
    c.entries_.push_back(std::move(e));
  }
  if (r.pos != bytes.size()) throw std::runtime_error("corrupt container: trailing bytes");
  return c;
}

void Container::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write on checkpoint '" + path + "'");
}

Container Container::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace usad::io
