#pragma once

// Single-layer 1D convolutional feature extractor:
//   valid cross-correlation -> ReLU -> global average pooling.
// The layer is initialized from a seed and never trained.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ddosguard/common.hpp"
#include "ddosguard/preprocess.hpp"

namespace ddosguard {

class ConvExtractor {
 public:
  /// weights are filter-major: weights[f * kernel_size + j].
  ConvExtractor(std::size_t filter_count, std::size_t kernel_size, std::vector<double> weights,
                std::vector<double> biases, std::uint64_t init_seed)
      : filter_count_(filter_count),
        kernel_size_(kernel_size),
        weights_(std::move(weights)),
        biases_(std::move(biases)),
        init_seed_(init_seed) {
    if (filter_count_ < 1 || kernel_size_ < 1) throw InvalidArgument("extractor: need >= 1 filter and kernel >= 1");
    if (weights_.size() != filter_count_ * kernel_size_ || biases_.size() != filter_count_) {
      throw InvalidArgument("extractor: parameter shapes do not match");
    }
    for (double w : weights_) {
      if (!std::isfinite(w)) throw InvalidArgument("extractor: non-finite weight");
    }
  }

  std::size_t filter_count() const noexcept { return filter_count_; }
  std::size_t kernel_size() const noexcept { return kernel_size_; }
  std::uint64_t init_seed() const noexcept { return init_seed_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& biases() const noexcept { return biases_; }

  std::span<const double> kernel(std::size_t f) const noexcept {
    return {weights_.data() + f * kernel_size_, kernel_size_};
  }
  double bias(std::size_t f) const noexcept { return biases_[f]; }

  friend bool operator==(const ConvExtractor&, const ConvExtractor&) = default;

 private:
  std::size_t filter_count_;
  std::size_t kernel_size_;
  std::vector<double> weights_;
  std::vector<double> biases_;
  std::uint64_t init_seed_;
};

/// Weights uniform in [-sqrt(1/N), +sqrt(1/N)], biases zero.
inline ConvExtractor init_extractor(std::uint64_t seed, std::size_t filter_count, std::size_t kernel_size) {
  if (filter_count < 1 || kernel_size < 1) throw InvalidArgument("extractor: need >= 1 filter and kernel >= 1");
  const double bound = std::sqrt(1.0 / static_cast<double>(kernel_size));
  Rng rng(seed);
  std::vector<double> weights(filter_count * kernel_size);
  for (auto& w : weights) w = rng.uniform(-bound, bound);
  return {filter_count, kernel_size, std::move(weights), std::vector<double>(filter_count, 0.0), seed};
}

/// out[i] = bias + sum_j input[i + j] * kernel[j], i = 0..L-N.
inline void conv1d_valid(std::span<const double> input, std::span<const double> kernel, double bias,
                         std::span<double> out) {
  if (kernel.empty() || input.size() < kernel.size()) {
    throw InvalidArgument("conv1d: input shorter than kernel");
  }
  const std::size_t steps = input.size() - kernel.size() + 1;
  if (out.size() != steps) throw InvalidArgument("conv1d: output length must be L - N + 1");
  for (std::size_t i = 0; i < steps; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kernel.size(); ++j) acc += input[i + j] * kernel[j];
    out[i] = bias + acc;
  }
}

inline std::vector<double> conv1d_valid(std::span<const double> input, std::span<const double> kernel,
                                        double bias) {
  if (kernel.empty() || input.size() < kernel.size()) {
    throw InvalidArgument("conv1d: input shorter than kernel");
  }
  std::vector<double> out(input.size() - kernel.size() + 1);
  conv1d_valid(input, kernel, bias, out);
  return out;
}

inline void relu_inplace(std::span<double> values) noexcept {
  for (auto& v : values) v = std::max(0.0, v);
}

inline std::vector<double> relu(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  relu_inplace(out);
  return out;
}

inline double average(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("global average pool: empty sequence");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

/// One mean per filter sequence, in filter order.
inline std::vector<double> global_avg_pool(std::span<const std::vector<double>> per_filter) {
  std::vector<double> out;
  out.reserve(per_filter.size());
  for (const auto& seq : per_filter) out.push_back(average(seq));
  return out;
}

/// n x F feature matrix: per sample and filter, conv1d_valid -> relu -> mean.
inline Matrix extract_features(const ConvExtractor& ex, const SequenceBatch& samples) {
  const std::size_t F = ex.filter_count();
  Matrix out(samples.count(), F);
  if (samples.count() == 0) return out;
  if (samples.length() < ex.kernel_size()) throw InvalidArgument("extract: sequence shorter than kernel");
  const std::size_t steps = samples.length() - ex.kernel_size() + 1;
  std::vector<double> buffer(steps);
  for (std::size_t s = 0; s < samples.count(); ++s) {
    const auto seq = samples.sequence(s);
    for (std::size_t f = 0; f < F; ++f) {
      conv1d_valid(seq, ex.kernel(f), ex.bias(f), buffer);
      relu_inplace(buffer);
      out(s, f) = average(buffer);
    }
  }
  return out;
}

}  // namespace ddosguard
