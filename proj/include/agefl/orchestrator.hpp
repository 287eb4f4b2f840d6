#pragma once

// Federated training loop with a parameter server (PS).
//
// Every iteration each client takes one local step. Every H iterations the PS
// runs a global round: for rAge-k the clients report their top-r indices, the
// PS picks the stalest k per client from its cluster's age vector, and the
// clients send those values; the baselines send k values directly. The PS sums
// the sparse updates, steps the global model and broadcasts it. Every M
// iterations the PS reclusters clients on their request-frequency vectors.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agefl/aging.hpp"
#include "agefl/clustering.hpp"
#include "agefl/config.hpp"
#include "agefl/data.hpp"
#include "agefl/learner.hpp"
#include "agefl/rng.hpp"
#include "agefl/sparsifiers.hpp"
#include "agefl/vectors.hpp"

namespace agefl {

// Bits needed to address one of d coordinates.
inline std::uint64_t index_bits(std::size_t d) {
  return d <= 1 ? 0 : static_cast<std::uint64_t>(std::bit_width(d - 1));
}

struct RoundComm {
  std::uint64_t t = 0;
  std::vector<std::uint64_t> report_bits;     // phase 1: top-r index report
  std::vector<std::uint64_t> payload_bits;    // phase 2: requested values with their indices
  std::vector<std::uint64_t> broadcast_bits;  // downlink model

  std::uint64_t uplink(std::size_t client) const { return report_bits[client] + payload_bits[client]; }
};

struct CommLedger {
  std::vector<std::uint64_t> uplink_bits;  // cumulative per client
  std::vector<std::uint64_t> downlink_bits;
  std::vector<RoundComm> rounds;

  std::uint64_t total_uplink() const {
    std::uint64_t s = 0;
    for (auto v : uplink_bits) s += v;
    return s;
  }
  std::uint64_t total_downlink() const {
    std::uint64_t s = 0;
    for (auto v : downlink_bits) s += v;
    return s;
  }
};

struct RoundMetrics {
  std::uint64_t t = 0;
  std::vector<double> client_loss;
  std::vector<double> client_accuracy;
  double mean_loss = 0.0;
  double mean_accuracy = 0.0;
  std::vector<ClusterId> cluster_labels;
  std::uint64_t uplink_bits = 0;  // cumulative over all clients
  std::uint64_t downlink_bits = 0;
};

struct ReclusterRecord {
  std::uint64_t t = 0;
  SquareMatrix similarity;
  SquareMatrix distance;
  std::vector<ClusterId> labels;
};

// What happened in one global round, for observers that audit the protocol.
struct RoundTrace {
  std::uint64_t t = 0;
  std::vector<IndexSet> requested;  // per client
  std::vector<CandidateSet> candidates;  // per client (empty for top-k)
  std::vector<std::vector<ClientId>> cluster_members;
  std::vector<AgeVector> ages_before;  // aligned with cluster_members
  std::vector<AgeVector> ages_after;
  std::vector<FrequencyVector> frequencies_before;
  std::vector<FrequencyVector> frequencies_after;
  GradientVector aggregated;
  RoundComm comm;
};

struct BetaAudit {
  double max_beta = 1.0;
  double min_gamma_safe = 1.0;
  double min_gamma_linear = 1.0;
  std::uint64_t measured = 0;
  std::uint64_t degenerate = 0;  // reports whose r-th magnitude was zero
};

struct RunReport {
  RunConfig config;
  std::size_t dim = 0;
  std::vector<RoundMetrics> rounds;
  std::vector<ReclusterRecord> reclusters;
  ClusterState clusters;
  std::vector<FrequencyVector> frequencies;
  CommLedger ledger;
  BetaAudit beta;
  ModelState global_model;

  // 1-based index of the first global round whose mean accuracy reached the target.
  std::optional<std::size_t> rounds_to_accuracy(double target) const {
    for (std::size_t i = 0; i < rounds.size(); ++i)
      if (rounds[i].mean_accuracy >= target) return i + 1;
    return std::nullopt;
  }
};

inline std::vector<Dataset> load_client_data(const RunConfig& cfg) {
  Dataset full = cfg.data_source == DataSource::Synthetic
                     ? synth_generate(cfg.synth_classes, cfg.synth_input_dim, cfg.synth_per_class,
                                      cfg.synth_separation, derive_seed(cfg.seed, "data"))
                     : load_mnist(cfg.mnist_images, cfg.mnist_labels);
  return shard(full, cfg.shard_plan, derive_seed(cfg.seed, "shard"), cfg.shard_overlap);
}

class Simulation {
 public:
  using Observer = std::function<void(const RoundTrace&)>;

  struct Client {
    ClientId id = 0;
    Dataset data;
    ModelState model;
    OptimizerState optimizer;
    BatchSampler sampler;
    Rng sparsify_rng;
  };

  explicit Simulation(RunConfig cfg) : Simulation(validated(std::move(cfg)), std::nullopt) {}

  // Uses the given per-client datasets instead of the configured source.
  Simulation(RunConfig cfg, std::vector<Dataset> client_data)
      : Simulation(validated(std::move(cfg)), std::optional(std::move(client_data))) {}

  void set_observer(Observer obs) { observer_ = std::move(obs); }

  const RunConfig& config() const noexcept { return cfg_; }
  std::uint64_t iteration() const noexcept { return t_; }
  const std::vector<Client>& clients() const noexcept { return clients_; }
  const ModelState& global_model() const noexcept { return global_; }
  const ClusterState& cluster_state() const noexcept { return clusters_; }
  const std::vector<FrequencyVector>& frequencies() const noexcept { return frequencies_; }
  const CommLedger& ledger() const noexcept { return ledger_; }
  const std::vector<RoundMetrics>& rounds() const noexcept { return rounds_; }

  // One iteration of the training loop.
  void step() {
    ++t_;
    for (auto& c : clients_) {
      const auto batch = c.sampler.next_batch(c.data, cfg_.batch_size);
      const auto lg = loss_and_gradient(c.model, batch);
      apply_update(c.model, c.optimizer, lg.gradient);
    }
    if (t_ % cfg_.local_iters == 0) global_round();
    if (t_ % cfg_.recluster_period == 0 && cfg_.sparsifier.type == SparsifierType::RAgeK) recluster_step();
  }

  RunReport run() {
    while (t_ < cfg_.total_iters) step();
    return report();
  }

  RunReport report() const {
    RunReport r;
    r.config = cfg_;
    r.dim = cfg_.dim();
    r.rounds = rounds_;
    r.reclusters = reclusters_;
    r.clusters = clusters_;
    r.frequencies = frequencies_;
    r.ledger = ledger_;
    r.beta = beta_;
    r.global_model = global_;
    return r;
  }

  // Gradient a client sparsifies: a fresh minibatch at its current local
  // parameters (not the accumulated local displacement).
  GradientVector gradient_for_report(ClientId id) {
    auto& c = clients_.at(id);
    const auto batch = c.sampler.next_batch(c.data, cfg_.batch_size);
    return loss_and_gradient(c.model, batch).gradient;
  }

 private:
  static RunConfig validated(RunConfig cfg) {
    cfg.validate();
    return cfg;
  }

  Simulation(RunConfig cfg, std::optional<std::vector<Dataset>> client_data) : cfg_(std::move(cfg)) {
    auto data = client_data ? std::move(*client_data) : load_client_data(cfg_);
    if (data.size() != cfg_.num_clients) throw ValidationError("expected one dataset per client");
    const std::size_t d = cfg_.dim();
    Rng init_rng(derive_seed(cfg_.seed, "init"));
    global_ = init_model(cfg_.model, init_rng);
    server_opt_ = OptimizerState(cfg_.server_optimizer, d);
    clients_.reserve(cfg_.num_clients);
    for (ClientId i = 0; i < cfg_.num_clients; ++i) {
      if (data[i].empty()) throw ValidationError("client " + std::to_string(i) + " received no samples");
      clients_.push_back(Client{i, std::move(data[i]), global_, OptimizerState(cfg_.local_optimizer, d),
                                BatchSampler(derive_seed(cfg_.seed, "batch", i)),
                                Rng(derive_seed(cfg_.seed, "sparsify", i))});
      frequencies_.emplace_back(d, i);
    }
    clusters_ = ClusterState::singletons(cfg_.num_clients, d);
    ledger_.uplink_bits.assign(cfg_.num_clients, 0);
    ledger_.downlink_bits.assign(cfg_.num_clients, 0);
  }

  void global_round() {
    const std::size_t n = clients_.size();
    const std::size_t d = cfg_.dim();
    const std::size_t r = cfg_.sparsifier.pool();
    const std::uint64_t addr = index_bits(d);

    RoundTrace trace;
    trace.t = t_;
    trace.requested.resize(n);
    trace.candidates.resize(n);
    trace.comm.t = t_;
    trace.comm.report_bits.assign(n, 0);
    trace.comm.payload_bits.assign(n, 0);
    trace.comm.broadcast_bits.assign(n, 0);

    std::vector<GradientVector> reports;
    reports.reserve(n);
    for (ClientId i = 0; i < n; ++i) {
      reports.push_back(gradient_for_report(i));
      audit_beta(reports.back(), r, cfg_.budget(i));
    }

    std::vector<SparseUpdate> updates(n);
    switch (cfg_.sparsifier.type) {
      case SparsifierType::TopK:
        for (ClientId i = 0; i < n; ++i) updates[i] = top_k_sparsify(reports[i], cfg_.budget(i));
        break;
      case SparsifierType::RTopK:
        for (ClientId i = 0; i < n; ++i)
          updates[i] = r_top_k_sparsify(reports[i], r, cfg_.budget(i), clients_[i].sparsify_rng);
        break;
      case SparsifierType::RAgeK:
        for (ClientId i = 0; i < n; ++i) {
          trace.candidates[i] = top_r_candidates(reports[i], r);
          trace.comm.report_bits[i] = r * addr;
        }
        trace.frequencies_before = frequencies_;
        for (auto& cluster : clusters_.clusters()) {
          trace.cluster_members.push_back(cluster.members);
          trace.ages_before.push_back(cluster.ages);
          std::vector<IndexSet> chosen;
          if (cfg_.disjoint_requests && cluster.members.size() >= 2) {
            std::vector<CandidateSet> cands;
            std::vector<std::size_t> budgets;
            for (ClientId c : cluster.members) {
              cands.push_back(trace.candidates[c]);
              budgets.push_back(cfg_.budget(c));
            }
            chosen = assign_disjoint_requests(cluster.ages, cands, budgets);
          } else {
            for (ClientId c : cluster.members)
              chosen.push_back(select_oldest(cluster.ages.ages, trace.candidates[c], cfg_.budget(c)));
          }
          std::vector<Index> all;
          for (std::size_t m = 0; m < cluster.members.size(); ++m) {
            const ClientId c = cluster.members[m];
            all.insert(all.end(), chosen[m].begin(), chosen[m].end());
            frequencies_[c] = record_request(frequencies_[c], chosen[m]);
            updates[c] = restrict_to(reports[c], chosen[m]);
          }
          cluster.ages = age_update(cluster.ages, make_index_set(std::move(all)));
          trace.ages_after.push_back(cluster.ages);
        }
        trace.frequencies_after = frequencies_;
        break;
    }

    for (ClientId i = 0; i < n; ++i) {
      trace.requested[i] = updates[i].requested;
      trace.comm.payload_bits[i] = updates[i].requested.size() * (addr + cfg_.value_bits);
      trace.comm.broadcast_bits[i] = d * cfg_.value_bits;
      ledger_.uplink_bits[i] += trace.comm.uplink(i);
      ledger_.downlink_bits[i] += trace.comm.broadcast_bits[i];
    }

    auto aggregated = aggregate(updates, d);
    const double scale = cfg_.resolved_aggregation_scale();
    for (auto& v : aggregated.values()) v *= scale;
    apply_update(global_, server_opt_, aggregated);
    for (auto& c : clients_) {
      c.model.theta = global_.theta;
      if (cfg_.reset_local_optimizer) c.optimizer.reset();
    }

    RoundMetrics m;
    m.t = t_;
    for (const auto& c : clients_) {
      const auto ev = evaluate(global_, c.data);
      m.client_loss.push_back(ev.mean_loss);
      m.client_accuracy.push_back(ev.accuracy);
      m.mean_loss += ev.mean_loss;
      m.mean_accuracy += ev.accuracy;
    }
    m.mean_loss /= static_cast<double>(n);
    m.mean_accuracy /= static_cast<double>(n);
    m.cluster_labels = clusters_.labels();
    m.uplink_bits = ledger_.total_uplink();
    m.downlink_bits = ledger_.total_downlink();
    rounds_.push_back(std::move(m));

    ledger_.rounds.push_back(trace.comm);
    trace.aggregated = std::move(aggregated);
    if (observer_) observer_(trace);
  }

  void recluster_step() {
    auto ev = recluster_traced(clusters_, frequencies_, cfg_.dbscan_eps, cfg_.dbscan_min_pts);
    clusters_ = std::move(ev.state);
    reclusters_.push_back({t_, std::move(ev.similarity), std::move(ev.distance), clusters_.labels()});
  }

  void audit_beta(const GradientVector& g, std::size_t r, std::size_t k) {
    try {
      const auto s = compression_stats(g, r, k);
      beta_.max_beta = std::max(beta_.max_beta, s.beta);
      beta_.min_gamma_safe = std::min(beta_.min_gamma_safe, s.gamma_safe);
      beta_.min_gamma_linear = std::min(beta_.min_gamma_linear, s.gamma_linear_beta);
      ++beta_.measured;
    } catch (const DegenerateInputError&) {
      ++beta_.degenerate;
    }
  }

  RunConfig cfg_;
  std::uint64_t t_ = 0;
  ModelState global_;
  OptimizerState server_opt_;
  std::vector<Client> clients_;
  ClusterState clusters_;
  std::vector<FrequencyVector> frequencies_;
  CommLedger ledger_;
  std::vector<RoundMetrics> rounds_;
  std::vector<ReclusterRecord> reclusters_;
  BetaAudit beta_;
  Observer observer_;
};

inline RunReport run(const RunConfig& cfg) { return Simulation(cfg).run(); }

}  // namespace agefl
