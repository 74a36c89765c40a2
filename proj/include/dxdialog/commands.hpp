#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dxdialog {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitIo = 2 };

/// Flags shared by every subcommand. The config file uses the service config schema.
struct CommonOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::string> backend;
    std::optional<std::int64_t> seed;
};

struct SimulateOptions {
    std::filesystem::path graph;
    std::filesystem::path personas;
    std::filesystem::path out_dir;
    int jobs = 1;
    std::optional<int> max_rounds;
};

struct EvaluateOptions {
    std::filesystem::path candidates;
    std::filesystem::path references;
    std::filesystem::path out;
    std::optional<std::filesystem::path> rules;
    std::string approach = "dxdialog";
};

struct BuildKgOptions {
    std::filesystem::path records;
    std::filesystem::path out;
};

struct GenProdialOptions {
    std::filesystem::path graph;
    std::filesystem::path records;
    std::filesystem::path out;
    int rounds = 3;
    double threshold = 0.6;
    std::optional<std::filesystem::path> real;
};

struct ServeOptions {
    std::optional<std::string> listen;
    std::optional<std::filesystem::path> graph;
    std::optional<std::filesystem::path> data_dir;
    bool logical_clock = false;
};

/// Each returns an exit code; library exceptions propagate to run_guarded.
int run_simulate(const CommonOptions& common, const SimulateOptions& opts);
int run_evaluate(const CommonOptions& common, const EvaluateOptions& opts);
int run_build_kg(const CommonOptions& common, const BuildKgOptions& opts);
int run_gen_prodial(const CommonOptions& common, const GenProdialOptions& opts);
int run_serve(const CommonOptions& common, const ServeOptions& opts);

/// Call from a catch block. Prints the message and maps IoError to 2, anything else to 1.
int exit_code_for_current_exception();

template <typename F>
int run_guarded(F&& f) {
    try {
        return f();
    } catch (...) {
        return exit_code_for_current_exception();
    }
}

}  // namespace dxdialog
