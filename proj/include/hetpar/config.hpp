#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hetpar/engine.hpp"

namespace hetpar {

// Fully resolved run configuration. One flat key space: every field here is
// settable from a config file line (key=value) or a CLI flag, flags winning.
// Unknown keys are rejected, and the echoed config re-parses to an equal
// RunConfig so reports double as replayable configs.
struct RunConfig {
  std::string task = "synthetic-classify";  // synthetic-classify | mlm-nsp
  uint64_t seed = 1;
  size_t world_size = 1;
  size_t rank = 0;                 // tcp runs drive one rank per process
  std::string backend = "inproc";  // inproc | tcp
  std::string master_host = "127.0.0.1";
  uint64_t master_port = 0;
  uint64_t comm_timeout_ms = 30000;

  std::string data_dir = "data";
  size_t max_sentences = 0;  // batch caps; at least one must be set
  uint64_t max_tokens = 0;
  std::string weight_policy = "sentences";  // sentences | tokens
  size_t prefetch_depth = 2;
  uint64_t cache_bytes = 0;
  std::string cache_policy = "lru";  // lru | lfu

  std::string arch = "mlp";        // mlp | attention_classifier | masked_token_model
  std::string layers = "20,64,5";  // mlp sizes, input..output
  size_t d_model = 64;
  size_t heads = 4;
  size_t vocab_size = 64;
  size_t max_seq = 64;
  size_t classes = 2;
  bool with_nsp = true;
  double label_smooth_eps = 0.0;
  std::string dtype = "f64";  // f32 | f64

  std::string optimizer = "sgd";  // sgd | adam
  double lr = 0.1;                // fixed or peak learning rate
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::string scheduler = "fixed";  // fixed | inverse_sqrt | linear
  uint64_t warmup_steps = 4000;
  uint64_t total_steps = 1000000;

  size_t update_freq = 1;
  uint64_t max_steps = 0;   // 0: run by epochs instead
  uint64_t max_epochs = 0;  // 0: run by steps instead

  std::string checkpoint_dir;
  uint64_t checkpoint_interval = 0;
  std::string resume_path;
  std::string report_path;
  uint64_t check_interval = 100;
  bool debug_checks = false;

  bool operator==(const RunConfig&) const = default;
};

// Known keys in declaration order.
const std::vector<std::string>& config_keys();
// Sets one field from its text form; unknown key or bad value -> config_error.
void config_set(RunConfig& c, const std::string& key, const std::string& value);
// Reads one field back in its text form.
std::string config_get(const RunConfig& c, const std::string& key);

// Applies key=value lines ('#' starts a comment) on top of base.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig parse_config_file(const std::string& path, RunConfig base = {});

// Cross-field validation; throws config_error naming the offending key.
void validate_config(const RunConfig& c);

// The resolved config as ordered key=value pairs, one per known key.
std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& c);

ModelSpec model_spec_from(const RunConfig& c);

// The engine's view of a validated config. An epochs-only run binds
// max_steps to UINT64_MAX; asking for neither steps nor epochs is an error.
EngineConfig engine_config_from(const RunConfig& c);

}  // namespace hetpar
