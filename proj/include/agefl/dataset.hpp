#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace agefl {

// Labelled samples; features are row-major, one row of `input_dim` per sample.
// Also used for minibatches.
struct Dataset {
  std::size_t input_dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * input_dim, input_dim);
  }

  void push_back(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace agefl
