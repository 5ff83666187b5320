#pragma once

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hetpar/checkpoint.hpp"
#include "hetpar/comm.hpp"
#include "hetpar/datagen.hpp"
#include "hetpar/dataset.hpp"
#include "hetpar/loader.hpp"
#include "hetpar/model.hpp"
#include "hetpar/optim.hpp"

namespace hetpar {

// One optimizer update, i.e. update_freq lockstep micro rounds. loss is the
// weighted global average over those rounds; weight is the total.
struct StepReport {
  uint64_t step = 0;  // P after this update, 1-based and global
  double loss = 0.0;
  double weight = 0.0;
  double seconds = 0.0;              // this rank, first round to update
  std::vector<double> rank_seconds;  // gathered; filled on master only
};

struct RunReport {
  size_t world = 1;
  uint64_t steps_run = 0;    // updates performed by this invocation
  uint64_t final_step = 0;   // P at exit (includes resumed progress)
  uint64_t epochs_completed = 0;
  double total_seconds = 0.0;
  double avg_step_seconds = 0.0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<StepReport> steps;
};

// Everything one rank needs to run. Ranks must agree on every field except
// their group membership; the protocol assumes it and the digest check
// enforces the part that matters (parameters).
struct EngineConfig {
  ModelSpec spec;
  WeightPolicy policy = WeightPolicy::sentences;
  OptKind opt_kind = OptKind::sgd;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  SchedulerConfig sched;
  uint64_t seed = 1;

  std::string data_dir;
  size_t max_sentences = 0;  // batch caps; 0 disables one cap
  uint64_t max_tokens = 0;
  LoaderOptions loader;

  size_t update_freq = 1;  // K micro rounds per optimizer update
  // max_steps always binds: 0 stops before the first update (an
  // epochs-only run passes UINT64_MAX). max_epochs 0 disables that limit.
  uint64_t max_steps = 0;
  uint64_t max_epochs = 0;

  std::string checkpoint_dir;        // empty: never save
  uint64_t checkpoint_interval = 0;  // in updates; 0: final save only
  std::string resume_path;

  uint64_t check_interval = 100;  // parameter digest cadence, in updates
  bool debug_checks = false;      // digest every update
};

std::string checkpoint_step_path(const std::string& dir, uint64_t step);
std::string checkpoint_final_path(const std::string& dir);

// speedup = baseline time / candidate time; expansion = speedup / node
// ratio. Both reports must cover the same total work (world x steps).
std::pair<double, double> compute_scaling_metrics(const RunReport& baseline,
                                                  const RunReport& candidate,
                                                  double node_ratio);

// key=value report; %.17g on losses so readers can compare bit-for-bit.
void write_run_report(
    const RunReport& report,
    const std::vector<std::pair<std::string, std::string>>& config_echo,
    const std::string& path);

// Fixed-width summary table; the first entry is the scaling baseline.
struct ScalingEntry {
  std::string name;
  double nodes = 1.0;
  RunReport report;
};
std::string format_scaling_table(const std::vector<ScalingEntry>& entries);

namespace detail {
inline double seconds_between(std::chrono::steady_clock::time_point a,
                              std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}
}  // namespace detail

// The per-rank protocol driver. Feed it this rank's batch for every
// lockstep round (replayed content on dummy rounds); it aggregates, applies
// the shared update every K-th round, and reports that update.
//
// Collective order per round: all_reduce [loss, weight], all_reduce grads;
// on an update additionally gather seconds, then the digest pair
// (broadcast + all_reduce) on its cadence. Every rank must follow the same
// schedule or the group fails.
template <class T>
class StepEngine {
 public:
  StepEngine(TrainState<T>& st, ProcessGroup& group, uint64_t check_interval,
             bool debug_checks)
      : st_(st),
        group_(group),
        acc_(st.update_freq, st.params.flat_size()),
        check_interval_(check_interval),
        debug_(debug_checks) {}

  std::optional<StepReport> round(const Batch& batch, bool dummy) {
    if (acc_.count() == 0) group_start_ = std::chrono::steady_clock::now();

    // Dummies run the forward too (symmetric compute, per the protocol)
    // but contribute zero loss, weight, and gradient.
    auto fr = model_forward(st_.spec, st_.params, batch, st_.policy);
    double loss = dummy ? 0.0 : fr.loss_sum;
    double weight = dummy ? 0.0 : fr.weight;
    auto lw = group_.all_reduce_sum({loss, weight});
    if (!std::isfinite(lw[0]))
      throw numeric_error("non-finite aggregated loss after step " +
                          std::to_string(st_.step));
    if (lw[1] <= 0.0)
      throw numeric_error("total batch weight is zero: every rank was dummy");

    std::vector<double> grads;
    if (dummy)
      grads.assign(st_.params.flat_size(), 0.0);
    else
      grads = backward_gradients(fr, st_.params);
    auto gsum = group_.all_reduce_sum(grads);

    acc_.accumulate(lw[0], lw[1], gsum);
    if (!acc_.ready()) return std::nullopt;

    auto flushed = acc_.flush();
    for (auto& g : flushed.grads) g /= flushed.weight;
    double lr = scheduled_lr(st_.sched, st_.step + 1);
    st_.opt.step(st_.params, flushed.grads, lr);
    ++st_.step;

    StepReport rep;
    rep.step = st_.step;
    rep.loss = flushed.loss_sum / flushed.weight;
    rep.weight = flushed.weight;
    rep.seconds = detail::seconds_between(group_start_,
                                          std::chrono::steady_clock::now());
    rep.rank_seconds = group_.gather_scalars(rep.seconds);
    check_digest_on_cadence();
    return rep;
  }

  uint64_t pending_rounds() const { return acc_.count(); }

 private:
  void check_digest_on_cadence() {
    uint64_t every = debug_ ? 1 : check_interval_;
    if (every == 0 || st_.step % every != 0) return;
    uint64_t mine = params_digest(st_.params);
    std::vector<uint8_t> bytes(8);
    std::memcpy(bytes.data(), &mine, 8);
    auto master_bytes = group_.broadcast(bytes, 0);
    uint64_t master;
    std::memcpy(&master, master_bytes.data(), 8);
    auto bad = group_.all_reduce_sum({master == mine ? 0.0 : 1.0});
    if (bad[0] != 0.0)
      throw numeric_error(std::to_string(static_cast<int>(bad[0])) +
                          " ranks diverged from master parameters at step " +
                          std::to_string(st_.step));
  }

  TrainState<T>& st_;
  ProcessGroup& group_;
  Accumulator acc_;
  uint64_t check_interval_;
  bool debug_;
  std::chrono::steady_clock::time_point group_start_{};
};

// Full data-driven training loop for one rank: dataset indexing, epoch
// plans, loaders, resume fast-forward, checkpointing, reporting.
template <class T>
RunReport train_run(const EngineConfig& cfg, ProcessGroup& group) {
  const size_t world = group.world_size();
  const size_t rank = group.rank();
  if (cfg.update_freq == 0) throw config_error("update_freq must be >= 1");
  cfg.spec.validate();

  auto index = build_index(list_shards(cfg.data_dir));
  if (index.shards.empty())
    throw config_error("no shards found under " + cfg.data_dir);
  auto token_lengths = global_token_lengths(index);
  const auto& schema = index.shards.at(0)->schema();

  TrainState<T> st;
  uint64_t skip_rounds = 0;
  if (!cfg.resume_path.empty()) {
    st = load_checkpoint<T>(cfg.resume_path);
    if (st.world * st.update_freq != world * cfg.update_freq)
      throw config_error(
          "resume must preserve world_size x update_freq: checkpoint has " +
          std::to_string(st.world) + " x " + std::to_string(st.update_freq) +
          ", run has " + std::to_string(world) + " x " +
          std::to_string(cfg.update_freq));
    if (param_shapes(st.spec) != param_shapes(cfg.spec) ||
        st.spec.arch != cfg.spec.arch)
      throw config_error("resume model spec does not match the checkpoint");
    st.world = world;
    st.update_freq = cfg.update_freq;

    // P updates consumed exactly P*K lockstep rounds; walk whole epochs
    // off that count to find the live epoch and the rounds to skip in it.
    uint64_t rounds_left = st.step * cfg.update_freq;
    uint64_t e = 0;
    for (;;) {
      auto plan = build_epoch_batches(token_lengths, cfg.max_sentences,
                                      cfg.max_tokens, st.seed, e);
      if (plan.batches.empty())
        throw config_error("dataset produces no batches");
      uint64_t rounds_e = (plan.batches.size() + world - 1) / world;
      if (rounds_left < rounds_e) {
        skip_rounds = rounds_left;
        break;
      }
      rounds_left -= rounds_e;
      ++e;
    }
    if (e != st.epoch)
      log_debug("resume epoch recomputed as " + std::to_string(e) +
                " (checkpoint said " + std::to_string(st.epoch) + ")");
    st.epoch = e;
  } else {
    st.spec = cfg.spec;
    st.policy = cfg.policy;
    st.sched = cfg.sched;
    st.seed = cfg.seed;
    st.world = world;
    st.update_freq = cfg.update_freq;
    auto rng = derived_rng(cfg.seed, 0);
    st.params = init_parameters<T>(st.spec, rng);
    st.opt = cfg.opt_kind == OptKind::adam
                 ? Optimizer<T>::make_adam(st.params, cfg.beta1, cfg.beta2,
                                           cfg.eps)
                 : Optimizer<T>::make_sgd();
  }
  st.rank = rank;

  // Master's parameters are authoritative from the very first round.
  auto master_params = group.broadcast(params_to_bytes(st.params), 0);
  if (rank != 0) params_from_bytes(st.params, master_params);

  const bool saving = !cfg.checkpoint_dir.empty();
  if (saving && rank == 0)
    std::filesystem::create_directories(cfg.checkpoint_dir);
  auto save_now = [&](const std::string& path) {
    group.barrier();
    if (rank == 0) save_checkpoint(st, path);
  };

  StepEngine<T> engine(st, group, cfg.check_interval, cfg.debug_checks);
  RunReport report;
  report.world = world;
  const uint64_t start_epoch = st.epoch;
  auto run_start = std::chrono::steady_clock::now();

  bool stopped = st.step >= cfg.max_steps;
  while (!stopped &&
         !(cfg.max_epochs != 0 && st.epoch >= cfg.max_epochs)) {
    auto plan = build_epoch_batches(token_lengths, cfg.max_sentences,
                                    cfg.max_tokens, st.seed, st.epoch);
    auto schedule = partition_for_rank(plan, world, rank);
    BatchLoader loader(index, plan, schedule, cfg.loader);

    LoadedBatch lb;
    for (uint64_t s = st.epoch == start_epoch ? skip_rounds : 0; s > 0; --s)
      loader.next(lb);

    while (loader.next(lb)) {
      const auto& global_ids = plan.batches.at(lb.batch_index);
      Batch batch;
      batch.reserve(lb.records.size());
      for (size_t i = 0; i < lb.records.size(); ++i)
        batch.push_back(instance_from_record(
            schema, lb.records[i], token_lengths[global_ids[i]]));

      auto rep = engine.round(batch, lb.dummy);
      if (!rep) continue;
      report.steps.push_back(std::move(*rep));
      if (saving && cfg.checkpoint_interval != 0 &&
          st.step % cfg.checkpoint_interval == 0)
        save_now(checkpoint_step_path(cfg.checkpoint_dir, st.step));
      if (st.step >= cfg.max_steps) {
        stopped = true;
        break;
      }
    }
    if (!stopped) ++st.epoch;
  }

  if (engine.pending_rounds() != 0)
    log_warn("discarding a partial accumulation of " +
             std::to_string(engine.pending_rounds()) + " rounds at run end");

  if (saving) save_now(checkpoint_final_path(cfg.checkpoint_dir));
  group.barrier();

  report.steps_run = report.steps.size();
  report.final_step = st.step;
  report.epochs_completed = st.epoch;
  report.total_seconds = detail::seconds_between(
      run_start, std::chrono::steady_clock::now());
  report.avg_step_seconds =
      report.steps_run ? report.total_seconds / report.steps_run : 0.0;
  if (!report.steps.empty()) report.final_loss = report.steps.back().loss;
  return report;
}

}  // namespace hetpar
