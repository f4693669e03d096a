#include <iostream>
#include <map>

#include <json.hpp>

#include "commands.hpp"
#include "glassesim/error.hpp"
#include "glassesim/parallel.hpp"

namespace glassesim::cli {

namespace {

std::map<const CLI::App*, std::function<void()>>& actions() {
  static std::map<const CLI::App*, std::function<void()>> registry;
  return registry;
}

void report(bool json, const std::string& kind, const std::string& message, int code) {
  if (json) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << "\n";
  } else {
    std::cerr << "error: " << message << "\n";
  }
}

}  // namespace

void on_run(CLI::App* sub, std::function<void()> action) { actions()[sub] = std::move(action); }

void configure_app(CLI::App& app, GlobalOptions& global) {
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", global.threads, "Worker threads (default: GLASSESIM_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", global.seed, "Global 64-bit random seed")->capture_default_str();
  app.add_flag("--json-errors", global.json_errors, "Report errors as JSON on stderr");
  add_analysis_commands(app, global);
  add_pipeline_commands(app, global);
}

int run(int argc, const char* const* argv) {
  CLI::App app{"glassesim: design and simulation toolkit for distributed smart-glasses cameras",
               "glassesim"};
  GlobalOptions global;
  configure_app(app, global);
  bool json = false;
  for (int i = 1; i < argc; ++i) json = json || std::string(argv[i]) == "--json-errors";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report(json, "usage", e.what(), 2);
    if (!json) std::cerr << "run with --help for usage\n";
    return 2;
  }
  if (global.threads > 0) set_thread_count(global.threads);
  try {
    for (const CLI::App* sub : app.get_subcommands()) {
      const auto it = actions().find(sub);
      if (it != actions().end()) it->second();
    }
  } catch (const Error& e) {
    report(global.json_errors, e.kind(), e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    report(global.json_errors, "runtime", e.what(), 1);
    return 1;
  }
  return 0;
}

}  // namespace glassesim::cli
