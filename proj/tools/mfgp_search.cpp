// mfgp_search: multi-fidelity target search simulator.
//
//   mfgp_search run      --config FILE [--out DIR] [--seed N] [--set key=value]...
//   mfgp_search bench    --config FILE [--out DIR] [--seed N] [--set key=value]...
//   mfgp_search validate --config FILE [--seed N] [--set key=value]...

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfgp/mfgp.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Options& opt, bool with_out) {
  cmd->add_option("--config", opt.config, "Configuration file (key=value text or a manifest.json)")->required();
  if (with_out) cmd->add_option("--out", opt.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", opt.seed, "Seed override");
  cmd->add_option("--set", opt.overrides, "Override a key, e.g. --set mission.delta=0.05 (repeatable)")
      ->allow_extra_args(false);
}

/// Resolves file + overrides; the seed flag maps to seed_key.
mfgp::RunConfig resolve(const Options& opt, const std::string& seed_key, std::vector<std::string>& applied) {
  auto values = mfgp::load_config_values(opt.config);
  for (const auto& o : opt.overrides) {
    const std::string key = values.apply_override(o);
    applied.push_back(key + "=" + *values.raw(key));
  }
  if (opt.seed) {
    values.set(seed_key, std::to_string(*opt.seed), "--seed");
    applied.push_back(seed_key + "=" + std::to_string(*opt.seed));
  }
  return mfgp::to_run_config(values);
}

bool report_violations(const mfgp::RunConfig& rc) {
  const auto violations = rc.mission.violations();
  for (const auto& v : violations) std::cerr << "mfgp_search: invalid configuration: " << v << '\n';
  return violations.empty();
}

void write_json(const fs::path& path, const nlohmann::ordered_json& doc) {
  mfgp::write_file(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

int cmd_run(const Options& opt) {
  std::vector<std::string> applied;
  const auto rc = resolve(opt, "mission.seed", applied);
  if (!report_violations(rc)) return 1;
  const fs::path out = opt.out;
  write_json(out / "manifest.json", mfgp::manifest_json("run", opt.config, applied, opt.out, rc));

  const auto report = mfgp::run_mission(rc.mission);
  const auto& domain = rc.mission.domain;

  write_json(out / "report.json", mfgp::report_json(report, rc));
  mfgp::write_file(out / "occupancy.csv", [&](auto& s) { mfgp::write_occupancy_csv(s, domain, report.cells); });
  mfgp::write_file(out / "occupancy.pgm", [&](auto& s) { mfgp::write_occupancy_pgm(s, domain, report.cells); });
  mfgp::write_file(out / "mean.csv", [&](auto& s) { mfgp::write_grid_csv(s, domain, report.mean); });
  mfgp::write_file(out / "variance.csv", [&](auto& s) { mfgp::write_grid_csv(s, domain, report.variance); });
  mfgp::write_file(out / "plan.csv", [&](auto& s) { mfgp::write_plan_csv(s, domain, report.plans); });
  mfgp::write_file(out / "tours.csv", [&](auto& s) { mfgp::write_tours_csv(s, report.waypoints); });
  const auto diags = mfgp::sample_diagnostics(report.log, domain, rc.mission.model);
  mfgp::write_file(out / "diagnostics.log", [&](auto& s) { mfgp::write_diagnostics(s, domain, diags); });
  for (mfgp::Fidelity m = 1; m <= rc.mission.model.size(); ++m) {
    const auto name = "truth_" + std::to_string(m);
    const auto& layer = report.truth.layer(m);
    mfgp::write_file(out / (name + ".csv"), [&](auto& s) { mfgp::write_grid_csv(s, domain, layer); });
    mfgp::write_file(out / (name + ".pgm"), [&](auto& s) { mfgp::write_grid_pgm(s, domain, layer); });
  }
  if (report.decay) mfgp::write_file(out / "decay.csv", [&](auto& s) { mfgp::write_decay_csv(s, *report.decay); });

  std::cout << "status " << mfgp::to_string(report.status) << '\n'
            << "epochs " << report.epochs.size() << '\n'
            << "samples " << report.samples() << '\n'
            << "classified_fraction " << mfgp::fmt(report.classified_fraction()) << '\n'
            << "clock " << mfgp::fmt(report.clock) << '\n'
            << "output " << out.string() << '\n';
  return report.status == mfgp::Termination::epoch_cap ? 2 : 0;
}

int cmd_bench(const Options& opt) {
  std::vector<std::string> applied;
  const auto rc = resolve(opt, "bench.first_seed", applied);
  if (!report_violations(rc)) return 1;
  if (rc.mission.model.size() < 2) {
    std::cerr << "mfgp_search: bench compares multi- and single-fidelity sampling and needs model.levels >= 2 (got "
              << rc.mission.model.size() << ")\n";
    return 1;
  }
  if (rc.bench.max_epochs < 0) {
    std::cerr << "mfgp_search: bench.max_epochs must be non-negative\n";
    return 1;
  }
  if (rc.bench.seeds == 0) {
    std::cerr << "mfgp_search: bench.seeds must be positive\n";
    return 1;
  }
  if (rc.bench.seeds == 1) {
    std::cerr << "mfgp_search: warning: bench.seeds = 1; detection-time means are single-sample estimates\n";
  }
  const fs::path out = opt.out;
  write_json(out / "manifest.json", mfgp::manifest_json("bench", opt.config, applied, opt.out, rc));

  const auto decay = mfgp::compare_decay(rc.mission, rc.bench.decay_samples);
  mfgp::write_file(out / "decay.csv", [&](auto& s) { mfgp::write_decay_csv(s, decay); });

  mfgp::MissionConfig study = rc.mission;
  if (study.mode != mfgp::GroundTruthMode::prior_draw) {
    std::cerr << "mfgp_search: note: detection-time study uses prior-draw ground truth\n";
    study.mode = mfgp::GroundTruthMode::prior_draw;
  }
  if (rc.bench.max_epochs > 0) study.max_epochs = rc.bench.max_epochs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < rc.bench.seeds; ++i) seeds.push_back(rc.bench.first_seed + i);
  const auto table = mfgp::detection_time_study(study, seeds, rc.bench.bins);
  mfgp::write_file(out / "detection_time.csv", [&](auto& s) { mfgp::write_detection_csv(s, table); });

  std::cout << "decay_samples " << rc.bench.decay_samples << '\n' << "missions " << table.missions << '\n';
  for (std::size_t b = 0; b < table.bins.size(); ++b) {
    const auto& bin = table.bins[b];
    std::cout << "bin " << b << " gap [" << mfgp::fmt(bin.gap_low) << ", " << mfgp::fmt(bin.gap_high)
              << "] mean_time " << mfgp::fmt(bin.mean_time) << " censored " << bin.censored << '\n';
  }
  std::cout << "output " << out.string() << '\n';
  return 0;
}

int cmd_validate(const Options& opt) {
  std::vector<std::string> applied;
  const auto rc = resolve(opt, "mission.seed", applied);
  if (!report_violations(rc)) return 1;
  std::cout << mfgp::normalized_text(rc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity Gaussian-process target search simulator"};
  app.set_version_flag("--version", std::string(mfgp::tool_version));
  app.require_subcommand(1);

  Options run_opt, bench_opt, validate_opt;
  auto* run = app.add_subcommand("run", "Run one search mission and export its artifacts");
  add_common(run, run_opt, true);
  auto* bench = app.add_subcommand("bench", "Uncertainty-decay comparison and detection-time study");
  add_common(bench, bench_opt, true);
  auto* validate = app.add_subcommand("validate", "Check a configuration and print its normalized form");
  add_common(validate, validate_opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run_opt);
    if (*bench) return cmd_bench(bench_opt);
    if (*validate) return cmd_validate(validate_opt);
  } catch (const std::exception& e) {
    std::cerr << "mfgp_search: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
