#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "sagnac/scenario.hpp"

namespace {

struct CommonOpts {
  std::string scenario_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int seeds = 0;  // 0 -> take the scenario's run.seeds
};

void attach(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--scenario", opts.scenario_path, "Scenario JSON document")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "Output directory")->required();
  cmd->add_option("--seed", opts.seed, "Base seed; run k uses seed + k");
  cmd->add_option("--seeds", opts.seeds, "Number of seeds (overrides the scenario)");
}

int execute(const std::string& subcommand, const CommonOpts& opts) {
  const sagnac::Scenario sc = sagnac::load_scenario(opts.scenario_path);
  const int n = opts.seeds > 0 ? opts.seeds : sc.run.seeds;
  sagnac::run(sc, subcommand, opts.seed, n, opts.out_dir);
  std::printf("%s: wrote %s/report.json (scenario %s, seed %llu, %d seed%s)\n",
              subcommand.c_str(), opts.out_dir.c_str(), sc.name.c_str(),
              static_cast<unsigned long long>(opts.seed), n, n == 1 ? "" : "s");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiber-loop interferometer simulator and analysis toolkit"};
  app.require_subcommand(1);

  const char* names[] = {"simulate", "analyze-phase", "fit-otdr", "optimize-burst",
                         "psd"};
  const char* briefs[] = {
      "Monte Carlo fringe visibility with backscatter and dark counts",
      "Classical phase-noise variance estimation (and power-law fit)",
      "Photon-counting reflectometry round trip and exponential fit",
      "Burst on/off pattern design against the backscatter decay",
      "Power spectral density of the synthesized phase process"};
  CommonOpts opts[5];
  for (int i = 0; i < 5; ++i) attach(app.add_subcommand(names[i], briefs[i]), opts[i]);

  CLI11_PARSE(app, argc, argv);
  try {
    for (int i = 0; i < 5; ++i)
      if (app.get_subcommand(names[i])->parsed()) return execute(names[i], opts[i]);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
