#pragma once

// Run-directory artifacts:
//   config.resolved       every config key with defaults materialised
//   metrics.csv           one row per global round
//   report.json           summary, clusters, ledger totals, recluster events
//   similarity_t<T>.csv   client similarity matrix at recluster iteration T
//   distance_t<T>.csv     matching DBSCAN distance matrix
//   model.bin             global model checkpoint
//   ages.bin              per-cluster age vectors
//   frequencies.bin       per-client frequency vectors

#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "agefl/aging.hpp"
#include "agefl/clustering.hpp"
#include "agefl/config.hpp"
#include "agefl/io.hpp"
#include "agefl/learner.hpp"
#include "agefl/orchestrator.hpp"

namespace agefl {

// Columns: t, loss_c<i>..., acc_c<i>..., mean_loss, mean_acc, cluster_c<i>...,
// uplink_bits, downlink_bits (cumulative over all clients).
inline void write_metrics_csv(std::ostream& os, const RunReport& report) {
  const std::size_t n = report.config.num_clients;
  os << 't';
  for (std::size_t i = 0; i < n; ++i) os << ",loss_c" << i;
  for (std::size_t i = 0; i < n; ++i) os << ",acc_c" << i;
  os << ",mean_loss,mean_acc";
  for (std::size_t i = 0; i < n; ++i) os << ",cluster_c" << i;
  os << ",uplink_bits,downlink_bits\n";
  for (const auto& r : report.rounds) {
    os << r.t;
    for (double v : r.client_loss) os << ',' << format_double(v);
    for (double v : r.client_accuracy) os << ',' << format_double(v);
    os << ',' << format_double(r.mean_loss) << ',' << format_double(r.mean_accuracy);
    for (auto id : r.cluster_labels) os << ',' << id;
    os << ',' << r.uplink_bits << ',' << r.downlink_bits << '\n';
  }
}

inline std::string metrics_csv(const RunReport& report) {
  std::ostringstream os;
  write_metrics_csv(os, report);
  return os.str();
}

inline nlohmann::json matrix_json(const SquareMatrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.n; ++i) {
    auto row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.n; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline SquareMatrix matrix_from_json(const nlohmann::json& rows) {
  SquareMatrix m(rows.size());
  for (std::size_t i = 0; i < m.n; ++i) {
    if (rows[i].size() != m.n) throw StructuralError("matrix in report is not square");
    for (std::size_t j = 0; j < m.n; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

inline nlohmann::json report_json(const RunReport& r) {
  nlohmann::json j;
  j["sparsifier"] = std::string(to_string(r.config.sparsifier.type));
  j["dim"] = r.dim;
  j["seed"] = r.config.seed;
  j["global_rounds"] = r.rounds.size();
  j["recluster_events"] = r.reclusters.size();
  if (!r.rounds.empty()) {
    j["final"] = {{"t", r.rounds.back().t},
                  {"mean_accuracy", r.rounds.back().mean_accuracy},
                  {"mean_loss", r.rounds.back().mean_loss}};
  }
  const auto target = r.rounds_to_accuracy(r.config.target_accuracy);
  j["target_accuracy"] = r.config.target_accuracy;
  j["rounds_to_target"] = target ? nlohmann::json(*target) : nlohmann::json(nullptr);

  auto clusters = nlohmann::json::array();
  for (const auto& cl : r.clusters.clusters())
    clusters.push_back({{"id", cl.id}, {"members", cl.members}, {"max_age", cl.ages.max()}});
  j["clusters"] = std::move(clusters);
  j["noise"] = r.clusters.noise();

  j["ledger"] = {{"uplink_bits", r.ledger.uplink_bits},
                 {"downlink_bits", r.ledger.downlink_bits},
                 {"total_uplink_bits", r.ledger.total_uplink()},
                 {"total_downlink_bits", r.ledger.total_downlink()}};
  j["beta_audit"] = {{"max_beta", r.beta.max_beta},
                     {"min_gamma_safe", r.beta.min_gamma_safe},
                     {"min_gamma_linear", r.beta.min_gamma_linear},
                     {"measured", r.beta.measured},
                     {"degenerate", r.beta.degenerate}};

  auto events = nlohmann::json::array();
  for (const auto& ev : r.reclusters)
    events.push_back({{"t", ev.t},
                      {"labels", ev.labels},
                      {"similarity", matrix_json(ev.similarity)},
                      {"distance", matrix_json(ev.distance)}});
  j["reclusters"] = std::move(events);
  return j;
}

inline std::vector<ReclusterRecord> reclusters_from_report(const nlohmann::json& j) {
  std::vector<ReclusterRecord> out;
  for (const auto& ev : j.at("reclusters")) {
    ReclusterRecord rec;
    rec.t = ev.at("t").get<std::uint64_t>();
    rec.labels = ev.at("labels").get<std::vector<ClusterId>>();
    rec.similarity = matrix_from_json(ev.at("similarity"));
    rec.distance = matrix_from_json(ev.at("distance"));
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_recluster_csvs(const std::filesystem::path& dir, const std::vector<ReclusterRecord>& events) {
  for (const auto& ev : events) {
    auto sim = open_output(dir / ("similarity_t" + std::to_string(ev.t) + ".csv"));
    write_matrix_csv(sim, ev.similarity);
    auto dist = open_output(dir / ("distance_t" + std::to_string(ev.t) + ".csv"));
    write_matrix_csv(dist, ev.distance);
  }
}

// ages.bin: u64 cluster count, then per cluster: u64 id, u64 member count,
// u64 members..., and the age vector as a counts block (u64 d, d x u64).
// frequencies.bin: u64 client count, then one counts block per client.
// All integers little-endian.
inline void write_age_checkpoint(std::ostream& os, const ClusterState& state) {
  detail::write_u64_le(os, state.clusters().size());
  for (const auto& cl : state.clusters()) {
    detail::write_u64_le(os, cl.id);
    detail::write_u64_le(os, cl.members.size());
    for (auto m : cl.members) detail::write_u64_le(os, m);
    write_counts(os, cl.ages.ages);
  }
}

inline void write_frequency_checkpoint(std::ostream& os, const std::vector<FrequencyVector>& freqs) {
  detail::write_u64_le(os, freqs.size());
  for (const auto& f : freqs) write_counts(os, f.counts);
}

inline std::vector<FrequencyVector> read_frequency_checkpoint(std::istream& is) {
  std::uint64_t offset = 0;
  const auto n = detail::read_u64_le(is, offset);
  std::vector<FrequencyVector> out;
  for (std::uint64_t i = 0; i < n; ++i) out.emplace_back(read_counts(is), static_cast<ClientId>(i));
  return out;
}

inline void write_run_directory(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  open_output(dir / "config.resolved") << to_config_text(report.config);
  {
    auto os = open_output(dir / "metrics.csv");
    write_metrics_csv(os, report);
  }
  open_output(dir / "report.json") << report_json(report).dump(2) << '\n';
  write_recluster_csvs(dir, report.reclusters);
  {
    auto os = open_output(dir / "model.bin", true);
    write_checkpoint(os, report.global_model);
  }
  {
    auto os = open_output(dir / "ages.bin", true);
    write_age_checkpoint(os, report.clusters);
  }
  {
    auto os = open_output(dir / "frequencies.bin", true);
    write_frequency_checkpoint(os, report.frequencies);
  }
}

}  // namespace agefl
