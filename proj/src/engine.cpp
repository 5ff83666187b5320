#include "hetpar/engine.hpp"

#include <cinttypes>
#include <cstdio>

namespace hetpar {

std::string checkpoint_step_path(const std::string& dir, uint64_t step) {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%06" PRIu64 ".hck", step);
  return dir + "/" + name;
}

std::string checkpoint_final_path(const std::string& dir) {
  return dir + "/checkpoint_final.hck";
}

std::pair<double, double> compute_scaling_metrics(const RunReport& baseline,
                                                  const RunReport& candidate,
                                                  double node_ratio) {
  if (!(node_ratio > 0.0))
    throw config_error("node ratio must be positive");
  if (!(candidate.total_seconds > 0.0))
    throw config_error("candidate run has zero time");
  if (!(baseline.total_seconds > 0.0))
    throw config_error("baseline run has zero time");
  if (baseline.world * baseline.steps_run !=
      candidate.world * candidate.steps_run)
    throw config_error(
        "scaling comparison needs equal total work: baseline " +
        std::to_string(baseline.world) + " x " +
        std::to_string(baseline.steps_run) + ", candidate " +
        std::to_string(candidate.world) + " x " +
        std::to_string(candidate.steps_run));
  double speedup = baseline.total_seconds / candidate.total_seconds;
  return {speedup, speedup / node_ratio};
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string f6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_run_report(
    const RunReport& report,
    const std::vector<std::pair<std::string, std::string>>& config_echo,
    const std::string& path) {
  std::string out;
  out += "world=" + std::to_string(report.world) + "\n";
  out += "steps_run=" + std::to_string(report.steps_run) + "\n";
  out += "final_step=" + std::to_string(report.final_step) + "\n";
  out += "epochs_completed=" + std::to_string(report.epochs_completed) + "\n";
  out += "total_seconds=" + f6(report.total_seconds) + "\n";
  out += "avg_step_seconds=" + f6(report.avg_step_seconds) + "\n";
  out += "final_loss=" + g17(report.final_loss) + "\n";
  for (const auto& [k, v] : config_echo) out += "config." + k + "=" + v + "\n";
  for (const auto& s : report.steps) {
    const std::string tag = "step." + std::to_string(s.step);
    out += tag + ".loss=" + g17(s.loss) + "\n";
    out += tag + ".weight=" + g17(s.weight) + "\n";
    out += tag + ".seconds=" + f6(s.seconds) + "\n";
  }
  write_file_atomic(path, std::vector<uint8_t>(out.begin(), out.end()));
}

std::string format_scaling_table(const std::vector<ScalingEntry>& entries) {
  if (entries.empty()) throw config_error("scaling table needs entries");
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-12s %6s %6s %7s %7s %10s %10s %12s %10s %8s\n",
                "name", "nodes", "ranks", "epochs", "steps", "avg_step",
                "time_s", "loss", "expansion", "speedup");
  out += line;
  const auto& base = entries.front();
  for (const auto& e : entries) {
    double speedup = 1.0, expansion = 1.0;
    if (&e != &base) {
      auto [s, x] =
          compute_scaling_metrics(base.report, e.report, e.nodes / base.nodes);
      speedup = s;
      expansion = x;
    }
    std::snprintf(line, sizeof(line),
                  "%-12s %6.1f %6zu %7" PRIu64 " %7" PRIu64
                  " %10.4f %10.2f %12.5g %10.2f %8.2f\n",
                  e.name.c_str(), e.nodes, e.report.world,
                  e.report.epochs_completed, e.report.steps_run,
                  e.report.avg_step_seconds, e.report.total_seconds,
                  e.report.final_loss, expansion, speedup);
    out += line;
  }
  return out;
}

}  // namespace hetpar
