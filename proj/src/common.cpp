#include "hetpar/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace hetpar {

log_level active_log_level() {
  static log_level lv = [] {
    const char* e = std::getenv("HETPAR_LOG");
    if (!e) return log_level::warn;
    std::string s(e);
    if (s == "debug") return log_level::debug;
    if (s == "info") return log_level::info;
    if (s == "error") return log_level::error;
    return log_level::warn;
  }();
  return lv;
}

void log_line(log_level lv, const std::string& msg) {
  if (static_cast<int>(lv) > static_cast<int>(active_log_level())) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> g(mu);
  const char* tag = lv == log_level::error ? "error"
                    : lv == log_level::warn ? "warn"
                    : lv == log_level::info ? "info"
                                            : "debug";
  std::fprintf(stderr, "[hetpar %s] %s\n", tag, msg.c_str());
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw io_error("cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long n = std::ftell(f);
  if (n < 0) {
    std::fclose(f);
    throw io_error("cannot stat " + path);
  }
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> out(static_cast<size_t>(n));
  size_t got = out.empty() ? 0 : std::fread(out.data(), 1, out.size(), f);
  std::fclose(f);
  if (got != out.size()) throw io_error("short read on " + path);
  return out;
}

void write_file_atomic(const std::string& path,
                       const std::vector<uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw io_error("cannot create " + tmp);
  size_t put = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  if (put != bytes.size() || std::fflush(f) != 0) {
    std::fclose(f);
    std::remove(tmp.c_str());
    throw io_error("short write on " + tmp);
  }
  std::fclose(f);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw io_error("cannot rename " + tmp + " -> " + path);
  }
}

}  // namespace hetpar
