#pragma once

// Run configuration and its plain-text form: one `key = value` per line, `#`
// starts a comment. Every key has a default (the MNIST profile), and
// `to_config_text` writes all of them back out so a run directory is
// self-describing.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "agefl/data.hpp"
#include "agefl/error.hpp"
#include "agefl/io.hpp"
#include "agefl/learner.hpp"
#include "agefl/sparsifiers.hpp"

namespace agefl {

enum class DataSource { Synthetic, Mnist };

struct RunConfig {
  std::size_t num_clients = 10;
  SparsifierKind sparsifier{SparsifierType::RAgeK, 75, 10};
  std::vector<std::size_t> client_budgets;  // optional per-client k; empty means k for everyone
  std::uint64_t local_iters = 4;            // H
  std::uint64_t recluster_period = 20;      // M
  std::uint64_t total_iters = 400;          // T
  double dbscan_eps = 0.5;
  std::size_t dbscan_min_pts = 2;
  std::uint64_t seed = 1;

  ModelSpec model{{784, 50, 10}};
  std::size_t batch_size = 256;
  OptimizerConfig local_optimizer{OptimizerKind::Adam, 1e-4};
  OptimizerConfig server_optimizer{OptimizerKind::Adam, 1e-4};
  std::optional<double> aggregation_scale;  // unset: 1/N
  bool disjoint_requests = true;
  bool reset_local_optimizer = false;
  unsigned value_bits = 64;

  DataSource data_source = DataSource::Mnist;
  std::size_t synth_classes = 10;
  std::size_t synth_input_dim = 20;
  std::size_t synth_per_class = 200;
  double synth_separation = 5.0;
  std::string mnist_images = "data/mnist/train-images-idx3-ubyte";
  std::string mnist_labels = "data/mnist/train-labels-idx1-ubyte";
  ShardPlan shard_plan = mnist_pairs_plan();
  bool shard_overlap = false;

  double target_accuracy = 0.9;

  std::size_t dim() const { return model.parameter_count(); }
  double resolved_aggregation_scale() const {
    return aggregation_scale.value_or(1.0 / static_cast<double>(num_clients));
  }
  std::size_t budget(std::size_t client) const {
    return client_budgets.empty() ? sparsifier.k : client_budgets.at(client);
  }
  std::size_t data_input_dim() const { return data_source == DataSource::Mnist ? 784 : synth_input_dim; }
  std::size_t data_classes() const { return data_source == DataSource::Mnist ? 10 : synth_classes; }

  // Checks every constraint without touching the data source.
  void validate() const {
    const auto fail = [](const std::string& msg) { throw ValidationError(msg); };
    if (num_clients < 1) fail("num_clients must be at least 1");
    if (local_iters < 1) fail("local_iters (H) must be at least 1");
    if (recluster_period < 1 || recluster_period % local_iters != 0)
      fail("recluster_period (M=" + std::to_string(recluster_period) + ") must be a positive multiple of local_iters (H=" +
           std::to_string(local_iters) + ")");
    if (total_iters < recluster_period)
      fail("total_iters (T=" + std::to_string(total_iters) + ") must be at least recluster_period (M=" +
           std::to_string(recluster_period) + ")");
    try {
      model.validate();
    } catch (const Error& e) {
      fail(std::string("model_layers: ") + e.what());
    }
    if (model.input_dim() != data_input_dim())
      fail("model_layers input width " + std::to_string(model.input_dim()) + " does not match data dimension " +
           std::to_string(data_input_dim()));
    if (model.num_classes() < data_classes())
      fail("model_layers output width " + std::to_string(model.num_classes()) + " is smaller than the class count " +
           std::to_string(data_classes()));
    const std::size_t d = dim();
    const std::size_t r = sparsifier.pool(), k = sparsifier.k;
    if (k < 1 || k > r || r > d)
      fail("sparsifier budgets must satisfy 1 <= k <= r <= d (k=" + std::to_string(k) + ", r=" + std::to_string(r) +
           ", d=" + std::to_string(d) + ")");
    if (!client_budgets.empty()) {
      if (client_budgets.size() != num_clients) fail("client_budgets must list one budget per client");
      for (auto b : client_budgets)
        if (b < 1 || b > r) fail("client_budgets entries must lie in [1, r]");
    }
    if (!(dbscan_eps > 0.0)) fail("dbscan_eps must be positive");
    if (dbscan_min_pts < 1) fail("dbscan_min_pts must be at least 1");
    if (batch_size < 1) fail("batch_size must be at least 1");
    for (const auto* opt : {&local_optimizer, &server_optimizer}) {
      if (!(opt->learning_rate > 0.0)) fail("learning rates must be positive");
      if (!(opt->beta1 >= 0.0 && opt->beta1 < 1.0 && opt->beta2 >= 0.0 && opt->beta2 < 1.0))
        fail("adam betas must lie in [0, 1)");
      if (!(opt->epsilon > 0.0)) fail("adam_epsilon must be positive");
    }
    if (aggregation_scale && !(std::isfinite(*aggregation_scale) && *aggregation_scale > 0.0))
      fail("aggregation_scale must be positive");
    if (value_bits != 32 && value_bits != 64) fail("value_bits must be 32 or 64");
    if (shard_plan.num_clients() != num_clients)
      fail("shard_plan lists " + std::to_string(shard_plan.num_clients()) + " clients but num_clients is " +
           std::to_string(num_clients));
    for (std::size_t c = 0; c < shard_plan.num_clients(); ++c) {
      if (shard_plan.classes[c].empty()) fail("shard_plan gives client " + std::to_string(c) + " no classes");
      for (int label : shard_plan.classes[c])
        if (label < 0 || static_cast<std::size_t>(label) >= data_classes())
          fail("shard_plan uses class " + std::to_string(label) + " outside [0, " + std::to_string(data_classes()) + ")");
    }
    if (data_source == DataSource::Synthetic) {
      if (synth_per_class < 1) fail("synth_per_class must be at least 1");
      if (!(synth_separation >= 0.0)) fail("synth_separation must be non-negative");
    }
    if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) fail("target_accuracy must lie in (0, 1]");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw ValidationError("config key '" + key + "': cannot parse '" + value + "' as a number");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + value + "'");
}

inline OptimizerKind parse_optimizer(const std::string& key, const std::string& value) {
  if (value == "adam") return OptimizerKind::Adam;
  if (value == "sgd") return OptimizerKind::Sgd;
  throw ValidationError("config key '" + key + "': expected adam or sgd, got '" + value + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  if (value.empty()) return out;
  for (const auto& item : split(value, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(items[i]);
  }
  return out;
}

}  // namespace detail

// Named presets or an explicit list: client class sets separated by ';',
// classes within a client by ','. Example: "0,1;0,1;2,3;2,3".
inline ShardPlan parse_shard_plan(const std::string& text) {
  if (text == "mnist_pairs") return mnist_pairs_plan();
  if (text == "cifar_groups") return cifar_groups_plan();
  ShardPlan plan;
  for (const auto& client : detail::split(text, ';')) {
    std::set<int> classes;
    for (int c : detail::parse_list<int>("shard_plan", client)) classes.insert(c);
    plan.classes.push_back(std::move(classes));
  }
  return plan;
}

inline std::string format_shard_plan(const ShardPlan& plan) {
  std::string out;
  for (std::size_t c = 0; c < plan.classes.size(); ++c) {
    if (c) out += ';';
    out += detail::join(std::vector<int>(plan.classes[c].begin(), plan.classes[c].end()));
  }
  return out;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "num_clients") cfg.num_clients = parse_number<std::size_t>(key, value);
  else if (key == "sparsifier") {
    try {
      cfg.sparsifier.type = parse_sparsifier_type(value);
    } catch (const ParameterError& e) {
      throw ValidationError(std::string("config key 'sparsifier': ") + e.what());
    }
  } else if (key == "r") cfg.sparsifier.r = parse_number<std::size_t>(key, value);
  else if (key == "k") cfg.sparsifier.k = parse_number<std::size_t>(key, value);
  else if (key == "client_budgets") cfg.client_budgets = parse_list<std::size_t>(key, value);
  else if (key == "local_iters") cfg.local_iters = parse_number<std::uint64_t>(key, value);
  else if (key == "recluster_period") cfg.recluster_period = parse_number<std::uint64_t>(key, value);
  else if (key == "total_iters") cfg.total_iters = parse_number<std::uint64_t>(key, value);
  else if (key == "dbscan_eps") cfg.dbscan_eps = parse_number<double>(key, value);
  else if (key == "dbscan_min_pts") cfg.dbscan_min_pts = parse_number<std::size_t>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "model_layers") cfg.model.layer_sizes = parse_list<std::size_t>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "local_optimizer") cfg.local_optimizer.kind = parse_optimizer(key, value);
  else if (key == "local_lr") cfg.local_optimizer.learning_rate = parse_number<double>(key, value);
  else if (key == "server_optimizer") cfg.server_optimizer.kind = parse_optimizer(key, value);
  else if (key == "server_lr") cfg.server_optimizer.learning_rate = parse_number<double>(key, value);
  else if (key == "adam_beta1") cfg.local_optimizer.beta1 = cfg.server_optimizer.beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") cfg.local_optimizer.beta2 = cfg.server_optimizer.beta2 = parse_number<double>(key, value);
  else if (key == "adam_epsilon")
    cfg.local_optimizer.epsilon = cfg.server_optimizer.epsilon = parse_number<double>(key, value);
  else if (key == "aggregation_scale") {
    if (value == "auto" || value.empty())
      cfg.aggregation_scale.reset();
    else
      cfg.aggregation_scale = parse_number<double>(key, value);
  } else if (key == "disjoint_requests") cfg.disjoint_requests = parse_bool(key, value);
  else if (key == "reset_local_optimizer") cfg.reset_local_optimizer = parse_bool(key, value);
  else if (key == "value_bits") cfg.value_bits = parse_number<unsigned>(key, value);
  else if (key == "data_source") {
    if (value == "synthetic") cfg.data_source = DataSource::Synthetic;
    else if (value == "mnist") cfg.data_source = DataSource::Mnist;
    else throw ValidationError("config key 'data_source': expected synthetic or mnist, got '" + value + "'");
  } else if (key == "synth_classes") cfg.synth_classes = parse_number<std::size_t>(key, value);
  else if (key == "synth_input_dim") cfg.synth_input_dim = parse_number<std::size_t>(key, value);
  else if (key == "synth_per_class") cfg.synth_per_class = parse_number<std::size_t>(key, value);
  else if (key == "synth_separation") cfg.synth_separation = parse_number<double>(key, value);
  else if (key == "mnist_images") cfg.mnist_images = value;
  else if (key == "mnist_labels") cfg.mnist_labels = value;
  else if (key == "shard_plan") cfg.shard_plan = parse_shard_plan(value);
  else if (key == "shard_overlap") cfg.shard_overlap = parse_bool(key, value);
  else if (key == "target_accuracy") cfg.target_accuracy = parse_number<double>(key, value);
  else throw ValidationError("unknown config key '" + key + "'");
}

// Applies `text` on top of `base`. Later lines override earlier ones.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = detail::trim(std::string_view(body).substr(0, eq));
    const auto value = detail::trim(std::string_view(body).substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

inline std::string to_config_text(const RunConfig& c) {
  const auto opt_name = [](OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; };
  std::ostringstream os;
  os << "num_clients = " << c.num_clients << '\n'
     << "sparsifier = " << to_string(c.sparsifier.type) << '\n'
     << "r = " << c.sparsifier.r << '\n'
     << "k = " << c.sparsifier.k << '\n'
     << "client_budgets = " << detail::join(c.client_budgets) << '\n'
     << "local_iters = " << c.local_iters << '\n'
     << "recluster_period = " << c.recluster_period << '\n'
     << "total_iters = " << c.total_iters << '\n'
     << "dbscan_eps = " << format_double(c.dbscan_eps) << '\n'
     << "dbscan_min_pts = " << c.dbscan_min_pts << '\n'
     << "seed = " << c.seed << '\n'
     << "model_layers = " << detail::join(c.model.layer_sizes) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "local_optimizer = " << opt_name(c.local_optimizer.kind) << '\n'
     << "local_lr = " << format_double(c.local_optimizer.learning_rate) << '\n'
     << "server_optimizer = " << opt_name(c.server_optimizer.kind) << '\n'
     << "server_lr = " << format_double(c.server_optimizer.learning_rate) << '\n'
     << "adam_beta1 = " << format_double(c.server_optimizer.beta1) << '\n'
     << "adam_beta2 = " << format_double(c.server_optimizer.beta2) << '\n'
     << "adam_epsilon = " << format_double(c.server_optimizer.epsilon) << '\n'
     << "aggregation_scale = " << format_double(c.resolved_aggregation_scale()) << '\n'
     << "disjoint_requests = " << (c.disjoint_requests ? "true" : "false") << '\n'
     << "reset_local_optimizer = " << (c.reset_local_optimizer ? "true" : "false") << '\n'
     << "value_bits = " << c.value_bits << '\n'
     << "data_source = " << (c.data_source == DataSource::Mnist ? "mnist" : "synthetic") << '\n'
     << "synth_classes = " << c.synth_classes << '\n'
     << "synth_input_dim = " << c.synth_input_dim << '\n'
     << "synth_per_class = " << c.synth_per_class << '\n'
     << "synth_separation = " << format_double(c.synth_separation) << '\n'
     << "mnist_images = " << c.mnist_images << '\n'
     << "mnist_labels = " << c.mnist_labels << '\n'
     << "shard_plan = " << format_shard_plan(c.shard_plan) << '\n'
     << "shard_overlap = " << (c.shard_overlap ? "true" : "false") << '\n'
     << "target_accuracy = " << format_double(c.target_accuracy) << '\n';
  return os.str();
}

}  // namespace agefl
