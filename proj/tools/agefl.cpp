// agefl: run, compare, validate and inspect federated training experiments.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error or invalid config.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "agefl/agefl.hpp"

namespace fs = std::filesystem;
using namespace agefl;

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 1;

// Raised for problems the user can fix in the invocation or config file.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path out_root() {
  const char* env = std::getenv("AGEFL_OUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

RunConfig load_checked(const fs::path& path, std::optional<std::uint64_t> seed, const std::string& variant) {
  RunConfig cfg;
  try {
    cfg = load_config(path);
    if (seed) cfg.seed = *seed;
    if (!variant.empty()) cfg.sparsifier.type = parse_sparsifier_type(variant);
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
  return cfg;
}

std::vector<SparsifierType> parse_variants(const std::vector<std::string>& names) {
  std::vector<SparsifierType> out;
  try {
    for (const auto& n : names) out.push_back(parse_sparsifier_type(n));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return out;
}

int cmd_validate(const fs::path& config, std::optional<std::uint64_t> seed, const std::string& variant) {
  const auto cfg = load_checked(config, seed, variant);
  std::cout << "config ok: " << config.string() << '\n'
            << "d=" << cfg.dim() << " N=" << cfg.num_clients << " sparsifier=" << to_string(cfg.sparsifier.type)
            << " r=" << cfg.sparsifier.pool() << " k=" << cfg.sparsifier.k << " H=" << cfg.local_iters
            << " M=" << cfg.recluster_period << " T=" << cfg.total_iters << '\n';
  return 0;
}

int cmd_run(const fs::path& config, fs::path out, std::optional<std::uint64_t> seed, const std::string& variant) {
  const auto cfg = load_checked(config, seed, variant);
  if (out.empty())
    out = out_root() / (config.stem().string() + "_" + std::string(to_string(cfg.sparsifier.type)) + "_s" +
                        std::to_string(cfg.seed));
  const auto report = Simulation(cfg).run();
  write_run_directory(out, report);
  const auto target = report.rounds_to_accuracy(cfg.target_accuracy);
  std::cout << "wrote " << out.string() << '\n'
            << "rounds=" << report.rounds.size()
            << " final_mean_accuracy=" << format_double(report.rounds.empty() ? 0.0 : report.rounds.back().mean_accuracy)
            << " rounds_to_target=" << (target ? std::to_string(*target) : std::string("none"))
            << " uplink_bits=" << report.ledger.total_uplink() << '\n';
  return 0;
}

int cmd_compare(const fs::path& config, fs::path out, const std::vector<std::uint64_t>& seeds,
                const std::vector<std::string>& variants) {
  ExperimentSuite suite;
  suite.base = load_checked(config, std::nullopt, "");
  if (!variants.empty()) suite.variants = parse_variants(variants);
  if (!seeds.empty()) {
    suite.seeds = seeds;
  } else {
    suite.seeds.clear();
    for (std::uint64_t s = 0; s < 5; ++s) suite.seeds.push_back(suite.base.seed + s);
  }
  try {
    suite.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (out.empty()) out = out_root() / (config.stem().string() + "_compare");
  suite.out_dir = out;
  const auto runs = run_suite(suite, [&](const SuiteRun& r) {
    const auto dir = out / (std::string(to_string(r.variant)) + "_s" + std::to_string(r.seed));
    write_run_directory(dir, r.report);
    std::cerr << "finished " << dir.string() << '\n';
  });
  {
    auto os = open_output(out / "summary.csv");
    write_summary_csv(os, runs);
  }
  {
    auto os = open_output(out / "summary_median.csv");
    write_median_csv(os, suite, runs);
  }
  write_median_csv(std::cout, suite, runs);
  return 0;
}

int cmd_heatmap(const fs::path& run_dir, fs::path out) {
  if (out.empty()) out = run_dir;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(run_dir / "report.json"));
    const auto events = reclusters_from_report(j);
    write_recluster_csvs(out, events);
    std::cout << "wrote " << 2 * events.size() << " matrix files to " << out.string() << '\n';
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report.json: ") + e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with age-aware sparsification"};
  app.require_subcommand(1);

  std::string config, out, variant;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> variants;
  std::string run_dir;

  auto* run = app.add_subcommand("run", "Run one experiment and write its run directory");
  run->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Run directory (default: $AGEFL_OUT_ROOT or ./runs, then a derived name)");
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--variant", variant, "Override the sparsifier: rage_k, rtop_k or top_k");

  auto* compare = app.add_subcommand("compare", "Run every variant for every seed and summarise");
  compare->add_option("--config", config, "Base config file")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", out, "Suite directory");
  compare->add_option("--seed", seeds, "Seed to include (repeatable; default: five seeds from the config's)");
  compare->add_option("--variant", variants, "Sparsifier to include (repeatable; default: rage_k rtop_k)");

  auto* validate = app.add_subcommand("validate", "Check a config without loading data");
  validate->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  validate->add_option("--seed", seed, "Override the master seed");
  validate->add_option("--variant", variant, "Override the sparsifier");

  auto* heatmap = app.add_subcommand("heatmap", "Re-emit similarity/distance CSVs from a finished run");
  heatmap->add_option("run_dir", run_dir, "Run directory containing report.json")->required()->check(CLI::ExistingDirectory);
  heatmap->add_option("--out", out, "Destination directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run) return cmd_run(config, out, seed, variant);
    if (*compare) return cmd_compare(config, out, seeds, variants);
    if (*validate) return cmd_validate(config, seed, variant);
    return cmd_heatmap(run_dir, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
