#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "glassesim/rig.hpp"

namespace glassesim::cli {

struct GlobalOptions {
  int threads = 0;  // 0: GLASSESIM_THREADS or all cores
  std::uint64_t seed = 0;
  bool json_errors = false;
};

void add_analysis_commands(CLI::App& app, const GlobalOptions& global);
void add_pipeline_commands(CLI::App& app, const GlobalOptions& global);

/// Registers the action run after parsing, once global options are applied.
void on_run(CLI::App* sub, std::function<void()> action);

/// A JSON file path or a preset name.
RigSpec load_rig(const std::string& path_or_preset);

/// Builds the application; `main` and the tests share it.
void configure_app(CLI::App& app, GlobalOptions& global);

/// Parses and runs; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace glassesim::cli
