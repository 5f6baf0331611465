#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pw/io.hpp"
#include "pw/stats.hpp"

// Experiment orchestration behind the CLI: config parsing, the assumption
// gate, dispatch to the engine/oracle/stats layers, and deterministic report
// and CSV emission.  Everything here is also callable directly from tests,
// so determinism claims (same seed, any thread count, byte-identical output)
// can be verified without spawning processes.

namespace pw {

enum class ExperimentKind {
    Simulate,    // raw trajectories; endpoint histogram, optional path files
    Couple,      // coupled pair over a horizon grid; scaled sup distance
    Occupation,  // occupation-time growth fits over a horizon grid
    Entrances,   // entrance counts nu / nu_bar over a horizon grid
    Returns,     // u(n), C_n, n^{d/2} u(n) tables for the base law
    Survival,    // R(n) via renewal, with a taboo cross-check when affordable
    Scaling,     // B_n table: closed form vs numeric fixed point
    Fclt,        // marginal normality + increment independence at checkpoints
    Check,       // standing assumptions only
    DoaCheck,    // domain-of-attraction diagnostic over a radius grid
};

const char* experiment_name(ExperimentKind kind);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Check;
    std::uint64_t seed = 0;
    std::uint64_t trajectories = 0;  // per grid point where applicable
    std::optional<int> threads;      // config-level override
    std::vector<std::uint64_t> grid; // horizons (simulating) -- must be integral
    std::vector<double> radii;       // doa-check grid
    std::vector<double> probes;      // fclt probe times
    WalkSpec walk;
    Thresholds thresholds;
    std::string output;              // artifact prefix; empty = derive from config path
};

// Strict parse; throws ConfigError on unknown or ill-typed keys.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& c);  // resolved echo for reports

struct RunOptions {
    std::optional<int> threads;           // --threads beats config beats env
    std::optional<std::string> out_prefix;
    bool waive_assumptions = false;
};

// Exit codes shared by the library entry points and the CLI.
inline constexpr int kExitPass = 0;
inline constexpr int kExitVerdictFail = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitAssumptionFail = 3;

struct RunResult {
    int exit_code = kExitPass;
    std::string report_path;  // empty if not written
    std::string csv_path;
    std::vector<std::string> lines;  // human-readable summary, one verdict per line
};

// Runs one experiment: applies the assumption gate (simulating experiments
// only, unless waived), writes <prefix>.report.json and <prefix>.data.csv,
// and returns the exit code.  Reports embed the resolved config, the
// thresholds in force and the RNG identifier, and no timestamps, so reruns
// are byte-identical.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

// Convenience wrappers used by the CLI; config errors (parse failures,
// unknown keys, unreadable files) come back as exit_code kExitConfigError
// with the message in lines.
RunResult run_config_file(const std::string& path, const RunOptions& options);
RunResult check_config_file(const std::string& path);  // assumptions only

// Golden product-lazy tables (n, u, R, C, n u) for n <= 20000.
RunResult emit_reference_tables(const std::string& out_prefix);

// Thread-count resolution: explicit option, then config, then the
// PERTURBWALK_THREADS environment variable, then the hardware count.
int resolve_threads(const ExperimentConfig& config, const RunOptions& options);

}  // namespace pw
