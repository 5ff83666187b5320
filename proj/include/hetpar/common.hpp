#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace hetpar {

// Error taxonomy. Every failure surfaced to callers derives from base_error;
// the concrete type encodes which contract was violated.
struct base_error : std::runtime_error {
  explicit base_error(const std::string& m) : std::runtime_error(m) {}
};
struct shape_error : base_error {
  explicit shape_error(const std::string& m) : base_error("shape: " + m) {}
};
struct config_error : base_error {
  explicit config_error(const std::string& m) : base_error("config: " + m) {}
};
struct index_error : base_error {
  explicit index_error(const std::string& m) : base_error("index: " + m) {}
};
struct io_error : base_error {
  explicit io_error(const std::string& m) : base_error("io: " + m) {}
};
struct comm_error : base_error {
  explicit comm_error(const std::string& m) : base_error("comm: " + m) {}
};
struct numeric_error : base_error {
  explicit numeric_error(const std::string& m) : base_error("numeric: " + m) {}
};

// FNV-1a 64-bit. Used for checkpoint footers and parameter digests.
inline uint64_t fnv1a64(const uint8_t* p, size_t n,
                        uint64_t h = 0xcbf29ce484222325ull) {
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline uint64_t fnv1a64(const std::vector<uint8_t>& v) {
  return fnv1a64(v.data(), v.size());
}

// Little-endian byte packing. The host is little-endian x86; memcpy keeps the
// representation explicit and alias-safe.
inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  uint8_t t[2];
  std::memcpy(t, &v, 2);
  b.insert(b.end(), t, t + 2);
}
inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  uint8_t t[4];
  std::memcpy(t, &v, 4);
  b.insert(b.end(), t, t + 4);
}
inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  uint8_t t[8];
  std::memcpy(t, &v, 8);
  b.insert(b.end(), t, t + 8);
}
inline void put_i64(std::vector<uint8_t>& b, int64_t v) {
  put_u64(b, static_cast<uint64_t>(v));
}
inline void put_f32(std::vector<uint8_t>& b, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(b, u);
}
inline void put_f64(std::vector<uint8_t>& b, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(b, u);
}
inline void put_bytes(std::vector<uint8_t>& b, const void* p, size_t n) {
  const uint8_t* q = static_cast<const uint8_t*>(p);
  b.insert(b.end(), q, q + n);
}

// Bounds-checked little-endian reader over a byte buffer.
class ByteReader {
 public:
  ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}
  explicit ByteReader(const std::vector<uint8_t>& v)
      : ByteReader(v.data(), v.size()) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return n_ - pos_; }
  void seek(size_t pos) {
    if (pos > n_) throw io_error("seek past end");
    pos_ = pos;
  }
  const uint8_t* raw(size_t n) {
    need(n);
    const uint8_t* q = p_ + pos_;
    pos_ += n;
    return q;
  }
  uint8_t u8() { return *raw(1); }
  uint16_t u16() {
    uint16_t v;
    std::memcpy(&v, raw(2), 2);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    std::memcpy(&v, raw(4), 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    std::memcpy(&v, raw(8), 8);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  float f32() {
    float v;
    std::memcpy(&v, raw(4), 4);
    return v;
  }
  double f64() {
    double v;
    std::memcpy(&v, raw(8), 8);
    return v;
  }
  std::string str(size_t n) {
    const uint8_t* q = raw(n);
    return std::string(reinterpret_cast<const char*>(q), n);
  }

 private:
  void need(size_t n) const {
    if (pos_ + n > n_) throw io_error("truncated data");
  }
  const uint8_t* p_;
  size_t n_;
  size_t pos_ = 0;
};

// Logging. Level comes from HETPAR_LOG={error,warn,info,debug}; default warn.
enum class log_level : int { error = 0, warn = 1, info = 2, debug = 3 };
log_level active_log_level();
void log_line(log_level lv, const std::string& msg);

inline void log_warn(const std::string& m) { log_line(log_level::warn, m); }
inline void log_info(const std::string& m) { log_line(log_level::info, m); }
inline void log_debug(const std::string& m) { log_line(log_level::debug, m); }
inline void log_error(const std::string& m) { log_line(log_level::error, m); }

// Reads a whole file; throws io_error on failure.
std::vector<uint8_t> read_file(const std::string& path);
// Writes bytes to path.tmp then renames onto path (atomic replace).
void write_file_atomic(const std::string& path,
                       const std::vector<uint8_t>& bytes);

}  // namespace hetpar
