#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "gamlss/cli.hpp"

namespace {

int finish(const gamlss::cli::RunResult& r, const std::filesystem::path& dir) {
  const auto where = gamlss::cli::write_outputs(r, dir);
  std::cout << (where / "report.json").string() << '\n';
  if (r.status != gamlss::cli::kExitOk) std::cerr << "gamlss: " << r.message << '\n';
  return r.status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional regression with treatment effects on inequality and vulnerability"};
  app.require_subcommand(1);
  std::string config_path, output_dir, report_path;

  for (const auto& name : gamlss::cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output_dir, "output directory (overrides [output] dir)");
  }
  auto* regen = app.add_subcommand("regenerate", "rerun the analysis recorded in a report");
  regen->add_option("report", report_path, "report.json written by an earlier run")->required()->check(CLI::ExistingFile);
  regen->add_option("--output", output_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gamlss::cli::kExitConfig;
  }

  try {
    if (regen->parsed()) {
      auto [sub, cfg] = gamlss::cli::from_report(report_path);
      return finish(gamlss::cli::run(sub, cfg), output_dir);
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    const auto cfg = gamlss::load_config_file(config_path);
    const auto r = gamlss::cli::run(sub, cfg);
    return finish(r, output_dir.empty() ? std::filesystem::path(cfg.output.dir) : std::filesystem::path(output_dir));
  } catch (const std::exception& e) {
    std::cerr << "gamlss: " << e.what() << '\n';
    return gamlss::cli::exit_code(e);
  }
}
