#include "hetpar/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>

#include "hetpar/common.hpp"

namespace hetpar {

namespace {

uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-' || v[0] == '+')
    throw config_error("bad value for '" + key + "': '" + v + "'");
  errno = 0;
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size())
    throw config_error("bad value for '" + key + "': '" + v + "'");
  return static_cast<uint64_t>(x);
}

double parse_f64(const std::string& key, const std::string& v) {
  if (v.empty())
    throw config_error("bad value for '" + key + "': '" + v + "'");
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size())
    throw config_error("bad value for '" + key + "': '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("bad value for '" + key + "': '" + v +
                     "' (want true or false)");
}

std::string fmt_f64(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct FieldDef {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

FieldDef str_field(const char* key, std::string RunConfig::* p) {
  return {key, [p](RunConfig& c, const std::string& v) { c.*p = v; },
          [p](const RunConfig& c) { return c.*p; }};
}

FieldDef u64_field(const char* key, uint64_t RunConfig::* p) {
  return {key,
          [p, key](RunConfig& c, const std::string& v) {
            c.*p = parse_u64(key, v);
          },
          [p](const RunConfig& c) { return std::to_string(c.*p); }};
}

FieldDef size_field(const char* key, size_t RunConfig::* p) {
  return {key,
          [p, key](RunConfig& c, const std::string& v) {
            c.*p = static_cast<size_t>(parse_u64(key, v));
          },
          [p](const RunConfig& c) { return std::to_string(c.*p); }};
}

FieldDef f64_field(const char* key, double RunConfig::* p) {
  return {key,
          [p, key](RunConfig& c, const std::string& v) {
            c.*p = parse_f64(key, v);
          },
          [p](const RunConfig& c) { return fmt_f64(c.*p); }};
}

FieldDef bool_field(const char* key, bool RunConfig::* p) {
  return {key,
          [p, key](RunConfig& c, const std::string& v) {
            c.*p = parse_bool(key, v);
          },
          [p](const RunConfig& c) { return c.*p ? "true" : "false"; }};
}

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      str_field("task", &RunConfig::task),
      u64_field("seed", &RunConfig::seed),
      size_field("world_size", &RunConfig::world_size),
      size_field("rank", &RunConfig::rank),
      str_field("backend", &RunConfig::backend),
      str_field("master_host", &RunConfig::master_host),
      u64_field("master_port", &RunConfig::master_port),
      u64_field("comm_timeout_ms", &RunConfig::comm_timeout_ms),
      str_field("data_dir", &RunConfig::data_dir),
      size_field("max_sentences", &RunConfig::max_sentences),
      u64_field("max_tokens", &RunConfig::max_tokens),
      str_field("weight_policy", &RunConfig::weight_policy),
      size_field("prefetch_depth", &RunConfig::prefetch_depth),
      u64_field("cache_bytes", &RunConfig::cache_bytes),
      str_field("cache_policy", &RunConfig::cache_policy),
      str_field("arch", &RunConfig::arch),
      str_field("layers", &RunConfig::layers),
      size_field("d_model", &RunConfig::d_model),
      size_field("heads", &RunConfig::heads),
      size_field("vocab_size", &RunConfig::vocab_size),
      size_field("max_seq", &RunConfig::max_seq),
      size_field("classes", &RunConfig::classes),
      bool_field("with_nsp", &RunConfig::with_nsp),
      f64_field("label_smooth_eps", &RunConfig::label_smooth_eps),
      str_field("dtype", &RunConfig::dtype),
      str_field("optimizer", &RunConfig::optimizer),
      f64_field("lr", &RunConfig::lr),
      f64_field("beta1", &RunConfig::beta1),
      f64_field("beta2", &RunConfig::beta2),
      f64_field("eps", &RunConfig::eps),
      str_field("scheduler", &RunConfig::scheduler),
      u64_field("warmup_steps", &RunConfig::warmup_steps),
      u64_field("total_steps", &RunConfig::total_steps),
      size_field("update_freq", &RunConfig::update_freq),
      u64_field("max_steps", &RunConfig::max_steps),
      u64_field("max_epochs", &RunConfig::max_epochs),
      str_field("checkpoint_dir", &RunConfig::checkpoint_dir),
      u64_field("checkpoint_interval", &RunConfig::checkpoint_interval),
      str_field("resume_path", &RunConfig::resume_path),
      str_field("report_path", &RunConfig::report_path),
      u64_field("check_interval", &RunConfig::check_interval),
      bool_field("debug_checks", &RunConfig::debug_checks),
  };
  return defs;
}

const FieldDef& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return f;
  throw config_error("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void require_one_of(const std::string& key, const std::string& v,
                    std::initializer_list<const char*> allowed) {
  std::string all;
  for (const char* a : allowed) {
    if (v == a) return;
    if (!all.empty()) all += ", ";
    all += a;
  }
  throw config_error("config key '" + key + "' must be one of {" + all +
                     "}, got '" + v + "'");
}

std::vector<size_t> parse_layers(const std::string& csv) {
  std::vector<size_t> out;
  size_t start = 0;
  while (true) {
    size_t comma = csv.find(',', start);
    std::string tok =
        csv.substr(start, comma == std::string::npos ? std::string::npos
                                                     : comma - start);
    out.push_back(static_cast<size_t>(parse_u64("layers", trim(tok))));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return keys;
}

void config_set(RunConfig& c, const std::string& key,
                const std::string& value) {
  find_field(key).set(c, value);
}

std::string config_get(const RunConfig& c, const std::string& key) {
  return find_field(key).get(c);
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  RunConfig c = std::move(base);
  size_t lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string line =
        text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    ++lineno;
    std::string t = trim(line);
    if (!t.empty() && t[0] != '#') {
      size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error("config line " + std::to_string(lineno) +
                           ": expected key=value, got '" + t + "'");
      config_set(c, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return c;
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
  auto bytes = read_file(path);
  return parse_config_text(std::string(bytes.begin(), bytes.end()),
                           std::move(base));
}

void validate_config(const RunConfig& c) {
  require_one_of("task", c.task, {"synthetic-classify", "mlm-nsp"});
  require_one_of("backend", c.backend, {"inproc", "tcp"});
  require_one_of("weight_policy", c.weight_policy, {"sentences", "tokens"});
  require_one_of("cache_policy", c.cache_policy, {"lru", "lfu"});
  require_one_of("arch", c.arch,
                 {"mlp", "attention_classifier", "masked_token_model"});
  require_one_of("dtype", c.dtype, {"f32", "f64"});
  require_one_of("optimizer", c.optimizer, {"sgd", "adam"});
  require_one_of("scheduler", c.scheduler, {"fixed", "inverse_sqrt", "linear"});
  if (c.world_size == 0) throw config_error("world_size must be >= 1");
  if (c.rank >= c.world_size)
    throw config_error("rank " + std::to_string(c.rank) +
                       " out of range for world_size " +
                       std::to_string(c.world_size));
  if (c.update_freq == 0) throw config_error("update_freq must be >= 1");
  if (c.master_port > 65535)
    throw config_error("master_port out of range: " +
                       std::to_string(c.master_port));
  if (c.backend == "tcp" && c.master_port == 0)
    throw config_error("tcp backend needs master_port in [1, 65535]");
  if (!(c.lr > 0.0)) throw config_error("lr must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0))
    throw config_error("beta1 outside [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw config_error("beta2 outside [0, 1)");
  if (!(c.eps > 0.0)) throw config_error("eps must be positive");
  if (!(c.label_smooth_eps >= 0.0 && c.label_smooth_eps < 1.0))
    throw config_error("label_smooth_eps outside [0, 1)");
  if (c.max_sentences == 0 && c.max_tokens == 0)
    throw config_error("set max_sentences or max_tokens (batch size caps)");
}

std::vector<std::pair<std::string, std::string>> config_echo(
    const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(fields().size());
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(c));
  return out;
}

ModelSpec model_spec_from(const RunConfig& c) {
  ModelSpec s;
  s.label_smooth_eps = c.label_smooth_eps;
  if (c.arch == "mlp") {
    s.arch = Arch::mlp;
    s.layers = parse_layers(c.layers);
    if (s.layers.size() < 2)
      throw config_error("layers needs at least input and output sizes");
    s.classes = s.layers.back();
  } else if (c.arch == "attention_classifier") {
    s.arch = Arch::attention_classifier;
    s.d_model = c.d_model;
    s.heads = c.heads;
    s.vocab = c.vocab_size;
    s.max_seq = c.max_seq;
    s.classes = c.classes;
  } else if (c.arch == "masked_token_model") {
    s.arch = Arch::masked_token_model;
    s.d_model = c.d_model;
    s.heads = c.heads;
    s.vocab = c.vocab_size;
    s.max_seq = c.max_seq;
    s.with_nsp = c.with_nsp;
  } else {
    throw config_error("unknown arch '" + c.arch + "'");
  }
  return s;
}

EngineConfig engine_config_from(const RunConfig& c) {
  validate_config(c);
  EngineConfig e;
  e.spec = model_spec_from(c);
  e.spec.validate();
  e.policy = c.weight_policy == "tokens" ? WeightPolicy::tokens
                                         : WeightPolicy::sentences;
  e.opt_kind = c.optimizer == "adam" ? OptKind::adam : OptKind::sgd;
  e.beta1 = c.beta1;
  e.beta2 = c.beta2;
  e.eps = c.eps;
  e.sched.kind = c.scheduler == "fixed" ? SchedulerKind::fixed
                 : c.scheduler == "inverse_sqrt" ? SchedulerKind::inverse_sqrt
                                                 : SchedulerKind::linear;
  e.sched.peak_lr = c.lr;
  e.sched.d_model = c.d_model;
  e.sched.warmup_steps = c.warmup_steps;
  e.sched.total_steps = c.total_steps;
  e.seed = c.seed;
  e.data_dir = c.data_dir;
  e.max_sentences = c.max_sentences;
  e.max_tokens = c.max_tokens;
  e.loader.prefetch_depth = c.prefetch_depth;
  e.loader.cache_bytes = c.cache_bytes;
  e.loader.cache_policy =
      c.cache_policy == "lfu" ? CachePolicy::lfu : CachePolicy::lru;
  e.update_freq = c.update_freq;
  if (c.max_steps == 0 && c.max_epochs == 0)
    throw config_error("set max_steps or max_epochs; a run needs a length");
  e.max_steps = c.max_steps == 0 ? std::numeric_limits<uint64_t>::max()
                                 : c.max_steps;
  e.max_epochs = c.max_epochs;
  e.checkpoint_dir = c.checkpoint_dir;
  e.checkpoint_interval = c.checkpoint_interval;
  e.resume_path = c.resume_path;
  e.check_interval = c.check_interval;
  e.debug_checks = c.debug_checks;
  return e;
}

}  // namespace hetpar
