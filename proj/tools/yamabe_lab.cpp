// Command-line driver: runs one experiment config, a sweep, or merges run
// directories into a summary table. Exit codes follow yamabe::ExitCode.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "yamabe/io.hpp"

namespace fs = std::filesystem;

namespace {

int merge_main(const std::vector<std::string>& inputs, bool scan, const std::string& output) {
  std::vector<fs::path> dirs;
  for (const auto& in : inputs) {
    if (!scan) {
      dirs.emplace_back(in);
      continue;
    }
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(in, ec))
      if (e.is_directory()) dirs.push_back(e.path());
    if (ec) {
      std::cerr << "error: cannot list " << in << ": " << ec.message() << '\n';
      return yamabe::kExitConfig;
    }
  }
  std::ostringstream table;
  const auto res = yamabe::merge_sweep(dirs, table);
  if (output.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream f(output, std::ios::binary | std::ios::trunc);
    f << table.str();
    if (!f) {
      std::cerr << "error: cannot write " << output << '\n';
      return yamabe::kExitConfig;
    }
  }
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& d : res.incomplete) std::cerr << "incomplete (no manifest, ignored): " << d << '\n';
  for (const auto& c : res.corrupt) std::cerr << "corrupt: " << c << '\n';
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radial Yamabe flow experiments"};
  app.set_version_flag("--version", std::string(yamabe::kToolVersion));

  std::string config_path, out_dir;
  int parallel = 1;
  bool strict = false, check_only = false;
  double resolution_scale = 1.0;
  app.add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "run directory, overrides output_dir");
  app.add_option("--parallel", parallel, "concurrent sweep jobs")->check(CLI::PositiveNumber);
  app.add_flag("--strict", strict, "exit 4 on inconclusive verdicts or failed checks");
  app.add_option("--resolution-scale", resolution_scale, "multiply node counts and ladders")
      ->check(CLI::PositiveNumber);
  app.add_flag("--check", check_only, "validate the config, print its normalized form and exit");

  auto* merge = app.add_subcommand("merge", "merge completed run directories into one CSV");
  std::vector<std::string> merge_dirs;
  std::string merge_out;
  bool scan = false;
  merge->add_option("dirs", merge_dirs, "run directories");
  merge->add_option("-o,--output", merge_out, "CSV path (default stdout)");
  merge->add_flag("--scan", scan, "treat each argument as a parent and merge its subdirectories");
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : yamabe::kExitConfig;
  }

  if (merge->parsed()) return merge_main(merge_dirs, scan, merge_out);

  if (config_path.empty()) {
    std::cerr << "error: --config is required\n" << app.help();
    return yamabe::kExitConfig;
  }
  std::ifstream f(config_path, std::ios::binary);
  std::stringstream text;
  text << f.rdbuf();
  if (!f) {
    std::cerr << "error: cannot read " << config_path << '\n';
    return yamabe::kExitConfig;
  }

  yamabe::ExperimentConfig cfg;
  try {
    cfg = yamabe::parse_config(text.str());
  } catch (const yamabe::ConfigError& e) {
    std::cerr << "config rejected (" << e.errors.size() << " error" << (e.errors.size() == 1 ? "" : "s") << "):\n";
    for (const auto& m : e.errors) std::cerr << "  " << m << '\n';
    return yamabe::kExitConfig;
  }
  if (check_only) {
    std::cout << cfg.body.dump(2) << '\n';
    return yamabe::kExitOk;
  }

  yamabe::RunSettings st;
  st.out = out_dir;
  st.parallel = parallel;
  st.strict = strict;
  st.resolution_scale = resolution_scale;
  const auto res = yamabe::run(cfg, st);
  if (res.status == "failed") std::cerr << "error: " << res.message << '\n';
  std::cout << yamabe::to_string(cfg.command) << ": " << res.status << " (" << res.dir.string() << ")\n";
  return res.exit_code;
}
