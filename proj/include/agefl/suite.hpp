#pragma once

// Controlled comparisons: the same base config run once per sparsifier
// variant and seed, with only the sparsifier type (and seed) changing.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "agefl/config.hpp"
#include "agefl/io.hpp"
#include "agefl/orchestrator.hpp"

namespace agefl {

struct SuiteRun {
  SparsifierType variant = SparsifierType::RAgeK;
  std::uint64_t seed = 0;
  RunReport report;

  // Rounds to the config's target accuracy, +inf when never reached.
  double rounds_to_target() const {
    const auto r = report.rounds_to_accuracy(report.config.target_accuracy);
    return r ? static_cast<double>(*r) : std::numeric_limits<double>::infinity();
  }
};

struct ExperimentSuite {
  RunConfig base;
  std::vector<SparsifierType> variants{SparsifierType::RAgeK, SparsifierType::RTopK};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path out_dir;  // empty: keep results in memory only

  RunConfig config_for(SparsifierType v, std::uint64_t seed) const {
    RunConfig c = base;
    c.sparsifier.type = v;
    c.seed = seed;
    return c;
  }

  void validate() const {
    if (variants.empty()) throw ValidationError("suite needs at least one variant");
    if (seeds.empty()) throw ValidationError("suite needs at least one seed");
    for (auto v : variants) config_for(v, seeds.front()).validate();
  }
};

// Median with +inf entries sorting last; the mean of the middle pair for even sizes.
inline double median(std::vector<double> xs) {
  if (xs.empty()) throw ParameterError("median of an empty list");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  if (xs.size() % 2 == 1) return xs[m];
  if (std::isinf(xs[m - 1]) || std::isinf(xs[m])) return std::max(xs[m - 1], xs[m]);
  return 0.5 * (xs[m - 1] + xs[m]);
}

inline double median_rounds(const std::vector<SuiteRun>& runs, SparsifierType v) {
  std::vector<double> xs;
  for (const auto& r : runs)
    if (r.variant == v) xs.push_back(r.rounds_to_target());
  return median(std::move(xs));
}

inline std::string format_rounds(double r) { return std::isinf(r) ? "inf" : format_double(r); }

// Columns: variant, seed, rounds_to_target, final_mean_accuracy, final_mean_loss, total_uplink_bits.
inline void write_summary_csv(std::ostream& os, const std::vector<SuiteRun>& runs) {
  os << "variant,seed,rounds_to_target,final_mean_accuracy,final_mean_loss,total_uplink_bits\n";
  for (const auto& r : runs) {
    const auto& rounds = r.report.rounds;
    os << to_string(r.variant) << ',' << r.seed << ',' << format_rounds(r.rounds_to_target()) << ','
       << (rounds.empty() ? std::string("nan") : format_double(rounds.back().mean_accuracy)) << ','
       << (rounds.empty() ? std::string("nan") : format_double(rounds.back().mean_loss)) << ','
       << r.report.ledger.total_uplink() << '\n';
  }
}

// Columns: variant, median_rounds_to_target, reached, seeds.
inline void write_median_csv(std::ostream& os, const ExperimentSuite& suite, const std::vector<SuiteRun>& runs) {
  os << "variant,median_rounds_to_target,reached,seeds\n";
  for (auto v : suite.variants) {
    std::size_t reached = 0, total = 0;
    for (const auto& r : runs)
      if (r.variant == v) {
        ++total;
        reached += !std::isinf(r.rounds_to_target());
      }
    os << to_string(v) << ',' << format_rounds(median_rounds(runs, v)) << ',' << reached << ',' << total << '\n';
  }
}

// `on_run` sees each finished run, e.g. to write its directory.
template <typename OnRun>
std::vector<SuiteRun> run_suite(const ExperimentSuite& suite, OnRun&& on_run) {
  suite.validate();
  std::vector<SuiteRun> runs;
  for (auto v : suite.variants)
    for (auto seed : suite.seeds) {
      runs.push_back({v, seed, Simulation(suite.config_for(v, seed)).run()});
      on_run(runs.back());
    }
  return runs;
}

inline std::vector<SuiteRun> run_suite(const ExperimentSuite& suite) {
  return run_suite(suite, [](const SuiteRun&) {});
}

}  // namespace agefl
