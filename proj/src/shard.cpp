#include "hetpar/shard.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace hetpar {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'D', '1'};
constexpr uint16_t kVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

FileHandle open_read(const std::string& path) {
  FileHandle f(std::fopen(path.c_str(), "rb"));
  if (!f) throw io_error("cannot open shard " + path);
  return f;
}

void read_exact(std::FILE* f, void* out, size_t n, const std::string& path) {
  if (n && std::fread(out, 1, n, f) != n)
    throw io_error("truncated shard " + path);
}

void seek_to(std::FILE* f, uint64_t off, const std::string& path) {
  if (std::fseek(f, static_cast<long>(off), SEEK_SET) != 0)
    throw io_error("seek failed in shard " + path);
}

template <class T>
std::vector<T> decode(const FieldValue& v) {
  if (v.bytes.size() != v.elem_count() * sizeof(T))
    throw io_error("field payload size does not match dims");
  std::vector<T> out(v.elem_count());
  if (!out.empty()) std::memcpy(out.data(), v.bytes.data(), v.bytes.size());
  return out;
}

template <class T>
FieldValue encode(const std::vector<T>& v) {
  FieldValue f;
  f.dims = {static_cast<uint32_t>(v.size())};
  f.bytes.resize(v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(f.bytes.data(), v.data(), f.bytes.size());
  return f;
}

}  // namespace

std::vector<int64_t> FieldValue::as_i64() const { return decode<int64_t>(*this); }
std::vector<float> FieldValue::as_f32() const { return decode<float>(*this); }
std::vector<double> FieldValue::as_f64() const { return decode<double>(*this); }

FieldValue FieldValue::from_i64(const std::vector<int64_t>& v) {
  return encode(v);
}
FieldValue FieldValue::from_f32(const std::vector<float>& v) {
  return encode(v);
}
FieldValue FieldValue::from_f64(const std::vector<double>& v) {
  return encode(v);
}

void write_shard(const std::string& path,
                 const std::vector<FieldSchema>& schema,
                 const std::vector<Record>& records,
                 const std::vector<uint32_t>& token_lengths) {
  if (records.size() != token_lengths.size())
    throw config_error("write_shard: token_lengths must align with records");
  for (const auto& fs : schema) {
    if (fs.name.empty() || fs.name.size() > 255)
      throw config_error("write_shard: field name length must be 1..255");
  }

  std::vector<uint8_t> out;
  put_bytes(out, kMagic, 4);
  put_u16(out, kVersion);
  put_u16(out, static_cast<uint16_t>(schema.size()));
  for (const auto& fs : schema) {
    put_u8(out, static_cast<uint8_t>(fs.name.size()));
    put_bytes(out, fs.name.data(), fs.name.size());
    put_u8(out, static_cast<uint8_t>(fs.dtype));
    put_u8(out, fs.rank);
  }
  put_u64(out, records.size());
  const size_t token_table_pos_field = out.size();
  put_u64(out, 0);  // token-length table offset, backpatched below

  std::vector<uint64_t> offsets;
  offsets.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.fields.size() != schema.size())
      throw config_error("write_shard: record field count does not match schema");
    offsets.push_back(out.size());
    for (size_t fi = 0; fi < schema.size(); ++fi) {
      const auto& fs = schema[fi];
      const auto& fv = rec.fields[fi];
      if (fv.dims.size() != static_cast<size_t>(fs.rank))
        throw config_error("write_shard: field " + fs.name +
                           " rank does not match schema");
      if (fv.bytes.size() != fv.elem_count() * dtype_size(fs.dtype))
        throw config_error("write_shard: field " + fs.name +
                           " payload does not match dims");
      for (uint32_t d : fv.dims) put_u32(out, d);
      put_bytes(out, fv.bytes.data(), fv.bytes.size());
    }
  }

  for (uint64_t off : offsets) put_u64(out, off);
  const uint64_t token_table_offset = out.size();
  for (uint32_t t : token_lengths) put_u32(out, t);

  uint64_t le = token_table_offset;
  std::memcpy(out.data() + token_table_pos_field, &le, 8);

  write_file_atomic(path, out);
}

ShardReader::ShardReader(std::string path) : path_(std::move(path)) {
  // Header and footer are parsed through a short-lived handle that does not
  // outlive the constructor; record payloads are never touched here.
  auto f = open_read(path_);
  if (std::fseek(f.get(), 0, SEEK_END) != 0)
    throw io_error("seek failed in shard " + path_);
  long sz = std::ftell(f.get());
  if (sz < 0) throw io_error("cannot stat shard " + path_);
  file_size_ = static_cast<uint64_t>(sz);
  seek_to(f.get(), 0, path_);

  auto u8 = [&] {
    uint8_t v;
    read_exact(f.get(), &v, 1, path_);
    return v;
  };
  auto u16 = [&] {
    uint16_t v;
    read_exact(f.get(), &v, 2, path_);
    return v;
  };
  auto u64v = [&] {
    uint64_t v;
    read_exact(f.get(), &v, 8, path_);
    return v;
  };

  char magic[4];
  read_exact(f.get(), magic, 4, path_);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw io_error("bad shard magic in " + path_);
  uint16_t version = u16();
  if (version != kVersion)
    throw io_error("unsupported shard version " + std::to_string(version) +
                   " in " + path_);

  uint16_t nfields = u16();
  for (uint16_t i = 0; i < nfields; ++i) {
    FieldSchema fs;
    uint8_t namelen = u8();
    std::string name(namelen, '\0');
    read_exact(f.get(), name.data(), namelen, path_);
    fs.name = std::move(name);
    uint8_t code = u8();
    if (code < 1 || code > 3) throw io_error("bad dtype code in " + path_);
    fs.dtype = static_cast<Dtype>(code);
    fs.rank = u8();
    schema_.push_back(std::move(fs));
  }

  uint64_t count = u64v();
  uint64_t token_table_offset = u64v();
  if (token_table_offset < 8 * count ||
      token_table_offset + 4 * count > file_size_)
    throw io_error("bad footer offsets in " + path_);
  uint64_t offset_table = token_table_offset - 8 * count;
  records_end_ = offset_table;

  seek_to(f.get(), offset_table, path_);
  offsets_.resize(count);
  if (count) read_exact(f.get(), offsets_.data(), 8 * count, path_);
  token_lengths_.resize(count);
  if (count) read_exact(f.get(), token_lengths_.data(), 4 * count, path_);

  for (uint64_t i = 0; i < count; ++i) {
    uint64_t end = i + 1 < count ? offsets_[i + 1] : records_end_;
    if (offsets_[i] > end || end > file_size_)
      throw io_error("bad record offsets in " + path_);
  }
}

Record ShardReader::read(size_t i) const {
  if (i >= offsets_.size())
    throw index_error("record " + std::to_string(i) + " out of range (count " +
                      std::to_string(offsets_.size()) + ") in " + path_);
  auto f = open_read(path_);
  seek_to(f.get(), offsets_[i], path_);

  Record rec;
  for (const auto& fs : schema_) {
    FieldValue fv;
    fv.dims.resize(fs.rank);
    for (uint8_t d = 0; d < fs.rank; ++d) {
      uint32_t v;
      read_exact(f.get(), &v, 4, path_);
      fv.dims[d] = v;
    }
    fv.bytes.resize(fv.elem_count() * dtype_size(fs.dtype));
    read_exact(f.get(), fv.bytes.data(), fv.bytes.size(), path_);
    rec.fields.push_back(std::move(fv));
  }
  return rec;
}

size_t ShardReader::record_bytes(size_t i) const {
  if (i >= offsets_.size())
    throw index_error("record " + std::to_string(i) + " out of range in " +
                      path_);
  uint64_t end = i + 1 < offsets_.size() ? offsets_[i + 1] : records_end_;
  return static_cast<size_t>(end - offsets_[i]);
}

}  // namespace hetpar
