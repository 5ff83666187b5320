#include "hetpar/checkpoint.hpp"

#include <cstring>

#include "json.hpp"

namespace hetpar {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'C', 'K', '1'};
constexpr uint16_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 1;
constexpr uint8_t kDtypeF64 = 2;

template <class T>
constexpr uint8_t dtype_code();
template <>
constexpr uint8_t dtype_code<float>() { return kDtypeF32; }
template <>
constexpr uint8_t dtype_code<double>() { return kDtypeF64; }

const char* dtype_str(uint8_t code) {
  return code == kDtypeF32 ? "f32" : "f64";
}

size_t dtype_bytes(uint8_t code) { return code == kDtypeF32 ? 4 : 8; }

const char* scheduler_name(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::fixed: return "fixed";
    case SchedulerKind::inverse_sqrt: return "inverse_sqrt";
    case SchedulerKind::linear: return "linear";
  }
  return "?";
}

SchedulerKind scheduler_from_name(const std::string& s) {
  if (s == "fixed") return SchedulerKind::fixed;
  if (s == "inverse_sqrt") return SchedulerKind::inverse_sqrt;
  if (s == "linear") return SchedulerKind::linear;
  throw io_error("checkpoint names unknown scheduler '" + s + "'");
}

Arch arch_from_name(const std::string& s) {
  if (s == "mlp") return Arch::mlp;
  if (s == "attention_classifier") return Arch::attention_classifier;
  if (s == "masked_token_model") return Arch::masked_token_model;
  throw io_error("checkpoint names unknown architecture '" + s + "'");
}

template <class T>
json build_spec_json(const TrainState<T>& st) {
  json j;
  j["arch"] = arch_name(st.spec.arch);
  j["layers"] = st.spec.layers;
  j["d_model"] = st.spec.d_model;
  j["heads"] = st.spec.heads;
  j["vocab"] = st.spec.vocab;
  j["max_seq"] = st.spec.max_seq;
  j["classes"] = st.spec.classes;
  j["with_nsp"] = st.spec.with_nsp;
  j["label_smooth_eps"] = st.spec.label_smooth_eps;
  j["dtype"] = dtype_str(dtype_code<T>());
  j["world_size"] = st.world;
  j["update_freq"] = st.update_freq;
  j["optimizer"] = {{"kind", st.opt.kind == OptKind::adam ? "adam" : "sgd"},
                    {"beta1", st.opt.beta1},
                    {"beta2", st.opt.beta2},
                    {"eps", st.opt.eps}};
  j["scheduler"] = {{"kind", scheduler_name(st.sched.kind)},
                    {"peak_lr", st.sched.peak_lr},
                    {"d_model", st.sched.d_model},
                    {"warmup_steps", st.sched.warmup_steps},
                    {"total_steps", st.sched.total_steps}};
  return j;
}

// Fully parsed file with payloads still as raw bytes; shared by load and
// inspect so both run the same digest and bounds validation.
struct RawCheckpoint {
  CheckpointMeta meta;
  std::vector<std::vector<uint8_t>> param_payloads;
  std::vector<std::vector<uint8_t>> m_payloads;
  std::vector<std::vector<uint8_t>> v_payloads;
};

RawCheckpoint parse_checkpoint(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < sizeof(kMagic) + 2 + 8)
    throw io_error("checkpoint too small to be valid: " + path);
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw io_error("not a checkpoint file: " + path);

  uint64_t stored_digest;
  std::memcpy(&stored_digest, bytes.data() + bytes.size() - 8, 8);
  uint64_t computed = fnv1a64(bytes.data(), bytes.size() - 8);
  if (computed != stored_digest)
    throw io_error("checkpoint digest mismatch (truncated or corrupt file): " +
                   path);

  ByteReader r(bytes.data(), bytes.size() - 8);
  r.raw(sizeof(kMagic));
  RawCheckpoint out;
  out.meta.version = r.u16();
  if (out.meta.version != kVersion)
    throw io_error("unsupported checkpoint version " +
                   std::to_string(out.meta.version));
  out.meta.epoch = r.u64();
  out.meta.step = r.u64();
  out.meta.seed = r.u64();
  uint8_t policy = r.u8();
  if (policy != 1 && policy != 2)
    throw io_error("checkpoint carries invalid weight policy");
  out.meta.policy = static_cast<WeightPolicy>(policy);
  out.meta.spec_json = r.str(r.u32());

  uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointParamInfo info;
    info.name = r.str(r.u16());
    info.dtype = r.u8();
    if (info.dtype != kDtypeF32 && info.dtype != kDtypeF64)
      throw io_error("checkpoint parameter '" + info.name +
                     "' has invalid dtype");
    uint8_t rank = r.u8();
    if (rank != 2)
      throw io_error("checkpoint parameter '" + info.name +
                     "' has rank " + std::to_string(rank) + ", expected 2");
    info.rows = r.u32();
    info.cols = r.u32();
    size_t payload =
        size_t(info.rows) * info.cols * dtype_bytes(info.dtype);
    const uint8_t* p = r.raw(payload);
    out.param_payloads.emplace_back(p, p + payload);
    out.meta.params.push_back(std::move(info));
  }

  uint8_t opt_kind = r.u8();
  if (opt_kind != 0 && opt_kind != 1)
    throw io_error("checkpoint carries invalid optimizer kind");
  out.meta.opt_kind = static_cast<OptKind>(opt_kind);
  if (out.meta.opt_kind == OptKind::adam) {
    out.meta.opt_t = r.u64();
    for (const auto& info : out.meta.params) {
      size_t payload = size_t(info.rows) * info.cols * dtype_bytes(info.dtype);
      const uint8_t* p = r.raw(payload);
      out.m_payloads.emplace_back(p, p + payload);
    }
    for (const auto& info : out.meta.params) {
      size_t payload = size_t(info.rows) * info.cols * dtype_bytes(info.dtype);
      const uint8_t* p = r.raw(payload);
      out.v_payloads.emplace_back(p, p + payload);
    }
  }
  if (r.remaining() != 0)
    throw io_error("checkpoint has trailing bytes: " + path);
  return out;
}

}  // namespace

template <class T>
void save_checkpoint(const TrainState<T>& st, const std::string& path) {
  if (st.rank != 0)
    throw config_error("checkpoint save from non-master rank " +
                       std::to_string(st.rank));
  st.spec.validate();
  const auto shapes = param_shapes(st.spec);
  if (shapes.size() != st.params.v.size())
    throw config_error("parameter list does not match the model spec");
  if (st.opt.kind == OptKind::adam &&
      (st.opt.m.size() != st.params.v.size() ||
       st.opt.v.size() != st.params.v.size()))
    throw config_error("optimizer moments do not match the parameter list");

  std::vector<uint8_t> buf;
  put_bytes(buf, kMagic, sizeof(kMagic));
  put_u16(buf, kVersion);
  put_u64(buf, st.epoch);
  put_u64(buf, st.step);
  put_u64(buf, st.seed);
  put_u8(buf, static_cast<uint8_t>(st.policy));

  const std::string js = build_spec_json(st).dump();
  put_u32(buf, static_cast<uint32_t>(js.size()));
  put_bytes(buf, js.data(), js.size());

  put_u32(buf, static_cast<uint32_t>(st.params.v.size()));
  for (const auto& e : st.params.v) {
    put_u16(buf, static_cast<uint16_t>(e.name.size()));
    put_bytes(buf, e.name.data(), e.name.size());
    put_u8(buf, dtype_code<T>());
    put_u8(buf, 2);
    put_u32(buf, static_cast<uint32_t>(e.m.rows));
    put_u32(buf, static_cast<uint32_t>(e.m.cols));
    put_bytes(buf, e.m.d.data(), e.m.size() * sizeof(T));
  }

  put_u8(buf, static_cast<uint8_t>(st.opt.kind));
  if (st.opt.kind == OptKind::adam) {
    put_u64(buf, st.opt.t);
    for (const auto& m : st.opt.m)
      put_bytes(buf, m.data(), m.size() * sizeof(T));
    for (const auto& v : st.opt.v)
      put_bytes(buf, v.data(), v.size() * sizeof(T));
  }

  put_u64(buf, fnv1a64(buf));
  write_file_atomic(path, buf);
}

template <class T>
TrainState<T> load_checkpoint(const std::string& path) {
  RawCheckpoint raw = parse_checkpoint(path);

  json j;
  try {
    j = json::parse(raw.meta.spec_json);
  } catch (const std::exception&) {
    throw io_error("checkpoint spec block is not valid json: " + path);
  }

  std::string dtype = j.value("dtype", "");
  if (dtype != dtype_str(dtype_code<T>()))
    throw config_error("checkpoint dtype is " + dtype + ", run requested " +
                       dtype_str(dtype_code<T>()));

  TrainState<T> st;
  try {
    st.spec.arch = arch_from_name(j.at("arch").get<std::string>());
    st.spec.layers = j.at("layers").get<std::vector<size_t>>();
    st.spec.d_model = j.at("d_model").get<size_t>();
    st.spec.heads = j.at("heads").get<size_t>();
    st.spec.vocab = j.at("vocab").get<size_t>();
    st.spec.max_seq = j.at("max_seq").get<size_t>();
    st.spec.classes = j.at("classes").get<size_t>();
    st.spec.with_nsp = j.at("with_nsp").get<bool>();
    st.spec.label_smooth_eps = j.at("label_smooth_eps").get<double>();
    st.world = j.at("world_size").get<size_t>();
    st.update_freq = j.at("update_freq").get<size_t>();
    const json& sj = j.at("scheduler");
    st.sched.kind = scheduler_from_name(sj.at("kind").get<std::string>());
    st.sched.peak_lr = sj.at("peak_lr").get<double>();
    st.sched.d_model = sj.at("d_model").get<size_t>();
    st.sched.warmup_steps = sj.at("warmup_steps").get<uint64_t>();
    st.sched.total_steps = sj.at("total_steps").get<uint64_t>();
  } catch (const io_error&) {
    throw;
  } catch (const std::exception& e) {
    throw io_error("checkpoint spec block is missing fields: " +
                   std::string(e.what()));
  }
  st.policy = raw.meta.policy;
  st.epoch = raw.meta.epoch;
  st.step = raw.meta.step;
  st.seed = raw.meta.seed;

  const auto shapes = param_shapes(st.spec);
  if (shapes.size() != raw.meta.params.size())
    throw io_error("checkpoint has " + std::to_string(raw.meta.params.size()) +
                   " parameters, spec defines " +
                   std::to_string(shapes.size()));
  for (size_t i = 0; i < shapes.size(); ++i) {
    const auto& info = raw.meta.params[i];
    if (info.name != shapes[i].name || info.rows != shapes[i].rows ||
        info.cols != shapes[i].cols)
      throw io_error("checkpoint parameter " + std::to_string(i) + " is '" +
                     info.name + "' " + std::to_string(info.rows) + "x" +
                     std::to_string(info.cols) + ", spec defines '" +
                     shapes[i].name + "' " + std::to_string(shapes[i].rows) +
                     "x" + std::to_string(shapes[i].cols));
    Mat<T> m(info.rows, info.cols);
    std::memcpy(m.d.data(), raw.param_payloads[i].data(),
                m.size() * sizeof(T));
    st.params.v.push_back({info.name, std::move(m)});
  }

  std::string opt_name = j.at("optimizer").at("kind").get<std::string>();
  if (raw.meta.opt_kind == OptKind::adam) {
    if (opt_name != "adam")
      throw io_error("optimizer kind disagrees between spec block and blocks");
    st.opt = Optimizer<T>::make_adam(
        st.params, j.at("optimizer").at("beta1").get<double>(),
        j.at("optimizer").at("beta2").get<double>(),
        j.at("optimizer").at("eps").get<double>());
    st.opt.t = raw.meta.opt_t;
    for (size_t i = 0; i < st.opt.m.size(); ++i) {
      std::memcpy(st.opt.m[i].data(), raw.m_payloads[i].data(),
                  st.opt.m[i].size() * sizeof(T));
      std::memcpy(st.opt.v[i].data(), raw.v_payloads[i].data(),
                  st.opt.v[i].size() * sizeof(T));
    }
  } else {
    if (opt_name != "sgd")
      throw io_error("optimizer kind disagrees between spec block and blocks");
    st.opt = Optimizer<T>::make_sgd();
  }
  return st;
}

CheckpointMeta inspect_checkpoint(const std::string& path) {
  return parse_checkpoint(path).meta;
}

template void save_checkpoint<float>(const TrainState<float>&,
                                     const std::string&);
template void save_checkpoint<double>(const TrainState<double>&,
                                      const std::string&);
template TrainState<float> load_checkpoint<float>(const std::string&);
template TrainState<double> load_checkpoint<double>(const std::string&);

}  // namespace hetpar
