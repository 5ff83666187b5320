#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetpar/common.hpp"

namespace hetpar {

// Binary shard format "HSD1", little-endian:
//   magic "HSD1"; u16 version=1; u16 field count F;
//   per field: u8 name length, name bytes, u8 dtype (1=f32,2=f64,3=i64),
//   u8 rank; u64 record count R; u64 token-length table offset;
//   per record: per field u32 dims[rank] then payload;
//   footer: u64 record offsets (R entries), then u32 token lengths (R
//   entries) at the offset named in the header.

enum class Dtype : uint8_t { f32 = 1, f64 = 2, i64 = 3 };

inline size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i64: return 8;
  }
  throw io_error("unknown dtype code");
}

struct FieldSchema {
  std::string name;
  Dtype dtype = Dtype::f64;
  uint8_t rank = 1;

  bool operator==(const FieldSchema&) const = default;
};

// One tensor value: dims.size() == schema rank, bytes holds the raw
// little-endian payload of product(dims) elements.
struct FieldValue {
  std::vector<uint32_t> dims;
  std::vector<uint8_t> bytes;

  size_t elem_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
  std::vector<int64_t> as_i64() const;
  std::vector<float> as_f32() const;
  std::vector<double> as_f64() const;

  static FieldValue from_i64(const std::vector<int64_t>& v);
  static FieldValue from_f32(const std::vector<float>& v);
  static FieldValue from_f64(const std::vector<double>& v);
};

struct Record {
  std::vector<FieldValue> fields;  // aligned with the shard schema
};

// Writes a complete shard. token_lengths must align with records; the
// batcher reads lengths from the footer without touching payloads.
void write_shard(const std::string& path,
                 const std::vector<FieldSchema>& schema,
                 const std::vector<Record>& records,
                 const std::vector<uint32_t>& token_lengths);

// Parses header and footer up front through a short-lived handle; every
// read() opens its own handle, so concurrent readers never share state.
class ShardReader {
 public:
  explicit ShardReader(std::string path);

  const std::string& path() const { return path_; }
  size_t count() const { return offsets_.size(); }
  const std::vector<FieldSchema>& schema() const { return schema_; }
  const std::vector<uint32_t>& token_lengths() const { return token_lengths_; }

  Record read(size_t i) const;
  // Serialized size of record i, used by the loader cache accounting.
  size_t record_bytes(size_t i) const;

 private:
  std::string path_;
  std::vector<FieldSchema> schema_;
  std::vector<uint64_t> offsets_;
  std::vector<uint32_t> token_lengths_;
  uint64_t file_size_ = 0;
  uint64_t records_end_ = 0;  // offset one past the last record payload
};

}  // namespace hetpar
