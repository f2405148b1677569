#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "l2r/harness.hpp"

namespace l2r {

// Artifact file names inside a run directory (named by the config hash).
namespace runfiles {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kStream = "stream.jsonl";
inline constexpr const char* kBackbone = "backbone.bin";
inline constexpr const char* kHeads = "heads.bin";
inline constexpr const char* kMemory = "memory.jsonl";
inline constexpr const char* kCilRouters = "routers_cil.bin";
inline constexpr const char* kReport = "report.json";
std::string adapter(int task_id);       // adapter_task{t}.bin
std::string til_routers(int task_id);   // routers_til_task{t}.bin
}  // namespace runfiles

RunConfig load_run_config(const std::string& path);

// full pipeline: stream -> adapters -> memory -> routers -> report; returns
// the run directory
std::string cmd_train(const RunConfig& cfg);

struct LoadedRun {
    TrainedState state;
    RouterStack cil_routers;
    std::vector<RouterStack> til_routers;
};
LoadedRun load_run(const std::string& run_dir);

RunReport cmd_eval(const std::string& run_dir, CompositionKind mode, Regime regime,
                   std::ostream& out);

std::string cmd_sweep(const RunConfig& cfg, const std::vector<double>& fractions,
                      const std::vector<uint64_t>& seeds, int workers, std::ostream& out);

std::string cmd_ablate(const RunConfig& cfg, const std::vector<uint64_t>& seeds,
                       std::ostream& out);

void cmd_flops(const RunConfig& cfg, int tasks, std::ostream& out);

void cmd_export_routing_scores(const std::string& run_dir, std::ostream& out);

}  // namespace l2r
