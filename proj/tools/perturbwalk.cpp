#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "pw/runner.hpp"

// Command-line front end.  All real work lives in pw::run_config_file and
// friends so tests can exercise the identical code paths in-process; this
// file only maps arguments and prints the summary lines.

int main(int argc, char** argv) {
    CLI::App app{"perturbed lattice walks: simulation, exact tables, diagnostics"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_prefix;
    int threads = 0;
    bool waive = false;

    CLI::App* run = app.add_subcommand("run", "run an experiment described by a JSON config");
    run->add_option("config", config_path, "experiment config (JSON)")->required();
    run->add_flag("--waive-assumptions", waive,
                  "simulate even when the standing assumptions fail");
    CLI::Option* threads_opt =
        run->add_option("--threads,-j", threads, "worker threads (default: config, then PERTURBWALK_THREADS, then hardware)");
    CLI::Option* out_opt = run->add_option("--out,-o", out_prefix, "artifact path prefix");

    CLI::App* check = app.add_subcommand("check", "evaluate the standing assumptions of a config's walk");
    check->add_option("config", config_path, "experiment config (JSON)")->required();

    std::string ref_prefix = "reference";
    CLI::App* ref = app.add_subcommand("reference", "emit the golden return/survival tables");
    ref->add_option("--out,-o", ref_prefix, "artifact path prefix (default: reference)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? pw::kExitPass : pw::kExitConfigError;
    }

    pw::RunResult result;
    if (run->parsed()) {
        pw::RunOptions options;
        options.waive_assumptions = waive;
        if (threads_opt->count() > 0) options.threads = threads;
        if (out_opt->count() > 0) options.out_prefix = out_prefix;
        result = pw::run_config_file(config_path, options);
    } else if (check->parsed()) {
        result = pw::check_config_file(config_path);
    } else if (ref->parsed()) {
        result = pw::emit_reference_tables(ref_prefix);
    }

    for (const std::string& line : result.lines) std::puts(line.c_str());
    return result.exit_code;
}
