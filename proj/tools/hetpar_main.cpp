#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hetpar/checkpoint.hpp"
#include "hetpar/comm.hpp"
#include "hetpar/config.hpp"
#include "hetpar/datagen.hpp"
#include "hetpar/engine.hpp"
#include "hetpar/shard.hpp"

using namespace hetpar;

namespace {

struct CliOverrides {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> kv;  // in flag order
  std::vector<std::string> set_args;                    // applied last
};

RunConfig resolve_config(const CliOverrides& ov) {
  RunConfig rc;
  if (!ov.config_path.empty()) rc = parse_config_file(ov.config_path, rc);
  for (const auto& [k, v] : ov.kv) config_set(rc, k, v);
  for (const auto& s : ov.set_args) {
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw config_error("--set wants KEY=VALUE, got '" + s + "'");
    config_set(rc, s.substr(0, eq), s.substr(eq + 1));
  }
  return rc;
}

void add_shared_flags(CLI::App* cmd, CliOverrides& ov) {
  cmd->add_option("--config", ov.config_path,
                  "key=value config file; flags win over file values");
  auto opt = [cmd, &ov](const char* flag, const char* key, const char* desc) {
    cmd->add_option_function<std::string>(
           flag,
           [&ov, key](const std::string& v) { ov.kv.emplace_back(key, v); },
           desc)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  };
  opt("--seed", "seed", "base RNG seed");
  opt("--world", "world_size", "number of ranks");
  opt("--rank", "rank", "this process's rank (tcp backend)");
  opt("--backend", "backend", "inproc | tcp");
  cmd->add_option_function<std::string>(
         "--master",
         [&ov](const std::string& v) {
           size_t colon = v.rfind(':');
           if (colon == std::string::npos)
             throw CLI::ValidationError("--master", "want HOST:PORT");
           ov.kv.emplace_back("master_host", v.substr(0, colon));
           ov.kv.emplace_back("master_port", v.substr(colon + 1));
         },
         "master address as HOST:PORT (tcp backend)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  opt("--steps", "max_steps", "optimizer updates to run");
  opt("--epochs", "max_epochs", "data epochs to run");
  opt("--update-freq", "update_freq", "micro rounds per update (K)");
  opt("--max-sentences", "max_sentences", "batch cap in sentences");
  opt("--max-tokens", "max_tokens", "batch cap in tokens");
  opt("--weight-policy", "weight_policy", "sentences | tokens");
  opt("--dtype", "dtype", "f32 | f64");
  opt("--checkpoint-interval", "checkpoint_interval",
      "updates between checkpoints");
  opt("--checkpoint-dir", "checkpoint_dir", "checkpoint output directory");
  opt("--resume", "resume_path", "checkpoint to resume from");
  opt("--prefetch-depth", "prefetch_depth", "loader prefetch depth");
  opt("--cache-bytes", "cache_bytes", "loader record cache budget");
  opt("--report", "report_path", "run report output path");
  opt("--data", "data_dir", "shard directory");
  opt("--task", "task", "synthetic-classify | mlm-nsp");
  opt("--arch", "arch", "mlp | attention_classifier | masked_token_model");
  opt("--layers", "layers", "mlp layer sizes CSV");
  opt("--lr", "lr", "fixed or peak learning rate");
  opt("--optimizer", "optimizer", "sgd | adam");
  opt("--scheduler", "scheduler", "fixed | inverse_sqrt | linear");
  cmd->add_option("--set", ov.set_args,
                  "set any config key as KEY=VALUE (applied after flags)");
}

template <class T>
RunReport run_rank(const EngineConfig& ecfg, ProcessGroup& group) {
  return train_run<T>(ecfg, group);
}

RunReport run_inproc(const RunConfig& rc, const EngineConfig& ecfg) {
  size_t world = rc.world_size;
  auto hub = make_inproc_hub(world, rc.comm_timeout_ms);
  std::vector<RunReport> reports(world);
  std::vector<std::exception_ptr> errs(world);
  std::vector<std::thread> threads;
  threads.reserve(world);
  for (size_t r = 0; r < world; ++r) {
    threads.emplace_back([&, r] {
      try {
        auto group = make_inproc_group(hub, r);
        reports[r] = rc.dtype == "f32" ? run_rank<float>(ecfg, *group)
                                       : run_rank<double>(ecfg, *group);
      } catch (...) {
        errs[r] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  // Prefer a root cause over the comm poison other ranks see once one fails.
  std::exception_ptr chosen;
  for (const auto& e : errs) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const comm_error&) {
      if (!chosen) chosen = e;
    } catch (...) {
      chosen = e;
      break;
    }
  }
  if (chosen) std::rethrow_exception(chosen);
  return reports[0];
}

void print_train_summary(const RunReport& r) {
  std::printf("world=%zu\n", r.world);
  std::printf("steps_run=%" PRIu64 "\n", r.steps_run);
  std::printf("final_step=%" PRIu64 "\n", r.final_step);
  std::printf("epochs_completed=%" PRIu64 "\n", r.epochs_completed);
  std::printf("total_seconds=%.6f\n", r.total_seconds);
  std::printf("final_loss=%.17g\n", r.final_loss);
}

int cmd_train(RunConfig rc, bool init_only) {
  // An init-only run writes the seeded starting checkpoint and stops before
  // the first update; the placeholder step count only satisfies validation.
  if (init_only) {
    if (rc.checkpoint_dir.empty())
      throw config_error("--init-only needs --checkpoint-dir");
    rc.max_steps = 1;
  }
  auto ecfg = engine_config_from(rc);
  if (init_only) ecfg.max_steps = 0;
  RunReport report;
  bool is_master;
  if (rc.backend == "inproc") {
    report = run_inproc(rc, ecfg);
    is_master = true;
  } else {
    TcpConfig tc;
    tc.host = rc.master_host;
    tc.port = static_cast<uint16_t>(rc.master_port);
    tc.world = rc.world_size;
    tc.rank = rc.rank;
    tc.timeout_ms = static_cast<int>(rc.comm_timeout_ms);
    auto group = make_tcp_group(tc);
    report = rc.dtype == "f32" ? run_rank<float>(ecfg, *group)
                               : run_rank<double>(ecfg, *group);
    is_master = rc.rank == 0;
  }
  if (is_master) {
    if (!rc.report_path.empty())
      write_run_report(report, config_echo(rc), rc.report_path);
    print_train_summary(report);
  }
  return 0;
}

std::vector<size_t> parse_worlds(const std::string& csv) {
  std::vector<size_t> out;
  size_t start = 0;
  while (true) {
    size_t comma = csv.find(',', start);
    std::string tok =
        csv.substr(start, comma == std::string::npos ? std::string::npos
                                                     : comma - start);
    char* end = nullptr;
    unsigned long long w = std::strtoull(tok.c_str(), &end, 10);
    if (tok.empty() || end != tok.c_str() + tok.size() || w == 0)
      throw config_error("bad world size '" + tok + "' in --worlds");
    out.push_back(static_cast<size_t>(w));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int cmd_bench(const RunConfig& rc0, const std::string& worlds_csv) {
  if (rc0.backend != "inproc")
    throw config_error("bench runs on the inproc backend only");
  auto worlds = parse_worlds(worlds_csv);
  RunConfig rc = rc0;
  rc.checkpoint_dir.clear();  // rows must not clobber each other's state
  rc.resume_path.clear();
  rc.max_epochs = 0;
  if (rc.max_steps == 0)
    throw config_error("bench needs --steps (update count for the first world)");

  uint64_t work = rc.max_steps * static_cast<uint64_t>(worlds[0]);
  std::vector<ScalingEntry> entries;
  for (size_t w : worlds) {
    if (work % w != 0)
      throw config_error("total work " + std::to_string(work) +
                         " updates is not divisible by world " +
                         std::to_string(w));
    RunConfig row = rc;
    row.world_size = w;
    row.rank = 0;
    row.max_steps = work / w;
    auto ecfg = engine_config_from(row);
    log_info("bench: world " + std::to_string(w) + ", " +
             std::to_string(row.max_steps) + " updates");
    entries.push_back({"world" + std::to_string(w), static_cast<double>(w),
                       run_inproc(row, ecfg)});
  }
  auto table = format_scaling_table(entries);
  std::fputs(table.c_str(), stdout);
  if (!rc0.report_path.empty())
    write_file_atomic(rc0.report_path,
                      std::vector<uint8_t>(table.begin(), table.end()));
  return 0;
}

struct DatagenArgs {
  std::string task = "synthetic-classify";
  std::string out = "data";
  uint64_t n = 1000;
  uint64_t seed = 7;
  size_t shards = 4;
  size_t dim = 20;
  size_t classes = 5;
  int64_t vocab = 64;
  size_t docs = 8;
  size_t sentences_per_doc = 12;
  size_t min_words = 3;
  size_t max_words = 8;
  double p_select = 0.15;
  double p_mask = 0.8;
  double p_random = 0.1;
};

int cmd_datagen(const DatagenArgs& a) {
  std::vector<std::string> paths;
  if (a.task == "synthetic-classify") {
    ClassifyGenConfig g;
    g.n = a.n;
    g.d = a.dim;
    g.classes = a.classes;
    g.seed = a.seed;
    g.shards = a.shards;
    paths = generate_classify_shards(a.out, g);
  } else if (a.task == "mlm-nsp") {
    MlmGenConfig g;
    g.n = a.n;
    g.vocab = a.vocab;
    g.docs = a.docs;
    g.sentences_per_doc = a.sentences_per_doc;
    g.min_sentence_words = a.min_words;
    g.max_sentence_words = a.max_words;
    g.p_select = a.p_select;
    g.p_mask = a.p_mask;
    g.p_random = a.p_random;
    g.seed = a.seed;
    g.shards = a.shards;
    paths = generate_mlm_shards(a.out, g);
  } else {
    throw config_error("task must be synthetic-classify or mlm-nsp");
  }
  std::printf("task=%s\n", a.task.c_str());
  std::printf("records=%" PRIu64 "\n", a.n);
  std::printf("shards=%zu\n", paths.size());
  for (const auto& p : paths) std::printf("shard=%s\n", p.c_str());
  return 0;
}

const char* dtype_label(uint8_t code) {
  return code == 1 ? "f32" : code == 2 ? "f64" : "i64";
}

template <class T>
void print_param_digests(const TrainState<T>& st) {
  for (size_t i = 0; i < st.params.v.size(); ++i) {
    const auto& e = st.params.v[i];
    auto bytes = reinterpret_cast<const uint8_t*>(e.m.d.data());
    std::printf("param.%zu.digest=%016" PRIx64 "\n",
                i, fnv1a64(bytes, e.m.d.size() * sizeof(T)));
  }
}

int cmd_inspect(const std::string& path, bool full) {
  auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "HCK1", 4) == 0) {
    auto meta = inspect_checkpoint(path);
    std::printf("checkpoint=%s\n", path.c_str());
    std::printf("version=%u\n", meta.version);
    std::printf("epoch=%" PRIu64 "\n", meta.epoch);
    std::printf("step=%" PRIu64 "\n", meta.step);
    std::printf("seed=%" PRIu64 "\n", meta.seed);
    std::printf("weight_policy=%s\n",
                meta.policy == WeightPolicy::tokens ? "tokens" : "sentences");
    std::printf("optimizer=%s\n",
                meta.opt_kind == OptKind::adam ? "adam" : "sgd");
    if (meta.opt_kind == OptKind::adam)
      std::printf("optimizer_t=%" PRIu64 "\n", meta.opt_t);
    uint64_t digest = 0;
    std::memcpy(&digest, bytes.data() + bytes.size() - 8, 8);
    std::printf("digest=%016" PRIx64 "\n", digest);
    std::printf("spec=%s\n", meta.spec_json.c_str());
    std::printf("params=%zu\n", meta.params.size());
    for (size_t i = 0; i < meta.params.size(); ++i) {
      const auto& p = meta.params[i];
      std::printf("param.%zu=%s %s %ux%u\n", i, p.name.c_str(),
                  dtype_label(p.dtype), p.rows, p.cols);
    }
    if (full && !meta.params.empty()) {
      if (meta.params[0].dtype == 1)
        print_param_digests(load_checkpoint<float>(path));
      else
        print_param_digests(load_checkpoint<double>(path));
    }
    return 0;
  }
  if (bytes.size() >= 6 && std::memcmp(bytes.data(), "HSD1", 4) == 0) {
    ShardReader rd(path);
    uint16_t version;
    std::memcpy(&version, bytes.data() + 4, 2);
    std::printf("shard=%s\n", path.c_str());
    std::printf("version=%u\n", version);
    std::printf("records=%zu\n", rd.count());
    std::printf("digest=%016" PRIx64 "\n", fnv1a64(bytes));
    std::printf("fields=%zu\n", rd.schema().size());
    for (size_t i = 0; i < rd.schema().size(); ++i) {
      const auto& f = rd.schema()[i];
      std::printf("field.%zu=%s %s rank%u\n", i, f.name.c_str(),
                  dtype_label(static_cast<uint8_t>(f.dtype)), f.rank);
    }
    uint64_t total_tokens = 0;
    for (uint32_t t : rd.token_lengths()) total_tokens += t;
    std::printf("tokens_total=%" PRIu64 "\n", total_tokens);
    if (full) {
      for (size_t r = 0; r < rd.count(); ++r) {
        auto rec = rd.read(r);
        std::printf("record.%zu=", r);
        for (size_t j = 0; j < rec.fields.size(); ++j) {
          std::string dims;
          for (uint32_t d : rec.fields[j].dims) {
            if (!dims.empty()) dims += "x";
            dims += std::to_string(d);
          }
          std::printf("%s%s[%s]", j == 0 ? "" : " ",
                      rd.schema()[j].name.c_str(), dims.c_str());
        }
        std::printf("\n");
      }
    }
    return 0;
  }
  throw config_error("unrecognized format: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterogeneous-world data-parallel training engine"};
  app.require_subcommand(1);

  CliOverrides ov;
  DatagenArgs da;
  std::string worlds_csv;
  std::string inspect_path;
  bool inspect_full = false;

  auto* datagen = app.add_subcommand("datagen", "generate training shards");
  datagen->add_option("--task", da.task, "synthetic-classify | mlm-nsp");
  datagen->add_option("--out", da.out, "output directory");
  datagen->add_option("--n", da.n, "instance count");
  datagen->add_option("--seed", da.seed, "generator seed");
  datagen->add_option("--shards", da.shards, "shard file count");
  datagen->add_option("--dim", da.dim, "feature dimension (classify)");
  datagen->add_option("--classes", da.classes, "class count (classify)");
  datagen->add_option("--vocab", da.vocab, "vocabulary size (mlm-nsp)");
  datagen->add_option("--docs", da.docs, "corpus documents (mlm-nsp)");
  datagen->add_option("--sentences-per-doc", da.sentences_per_doc,
                      "sentences per document (mlm-nsp)");
  datagen->add_option("--min-words", da.min_words,
                      "shortest sentence (mlm-nsp)");
  datagen->add_option("--max-words", da.max_words,
                      "longest sentence (mlm-nsp)");
  datagen->add_option("--p-select", da.p_select,
                      "mask selection probability (mlm-nsp)");
  datagen->add_option("--p-mask", da.p_mask,
                      "[MASK] branch probability (mlm-nsp)");
  datagen->add_option("--p-random", da.p_random,
                      "random-token branch probability (mlm-nsp)");

  auto* train = app.add_subcommand("train", "run distributed training");
  add_shared_flags(train, ov);
  bool init_only = false;
  train->add_flag("--init-only", init_only,
                  "write the seeded starting checkpoint and exit");

  auto* bench =
      app.add_subcommand("bench", "scaling benchmark at fixed total work");
  add_shared_flags(bench, ov);
  bench->add_option("--worlds", worlds_csv, "world sizes CSV, first is baseline")
      ->required();

  auto* inspect =
      app.add_subcommand("inspect", "describe a shard or checkpoint file");
  inspect->add_option("path", inspect_path, "file to inspect")->required();
  inspect->add_flag("--full", inspect_full, "also walk payloads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (datagen->parsed()) return cmd_datagen(da);
    if (train->parsed()) return cmd_train(resolve_config(ov), init_only);
    if (bench->parsed()) return cmd_bench(resolve_config(ov), worlds_csv);
    return cmd_inspect(inspect_path, inspect_full);
  } catch (const config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
