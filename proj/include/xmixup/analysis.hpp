#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "xmixup/dataset.hpp"
#include "xmixup/linalg.hpp"
#include "xmixup/model.hpp"
#include "xmixup/pairing.hpp"

namespace xmixup {

/// Singular values in descending order, by one-sided Jacobi rotations.
Vector singular_values(const Matrix& a);

/// Singular values divided by the largest, descending.
struct Spectrum {
  Vector normalized;

  /// Mean of the `k` smallest normalized values (all of them if fewer).
  double tail_mean(std::size_t k = 10) const;
};

/// Throws NumericError for an all-zero matrix.
Spectrum normalized_spectrum(const Matrix& features);

/// Rows are extracted features for the listed samples.
Matrix feature_matrix(const ModelParams& params, const Dataset& ds,
                      std::span<const std::size_t> rows);

/// Spectrum of the feature matrix over `batch` samples of `ds` picked by a
/// seeded shuffle. batch must be at least the feature width.
Spectrum spectrum(const ModelParams& params, const Dataset& ds, std::size_t batch,
                  std::uint64_t seed = 0);

/// min(512, |ds|)
std::size_t default_spectrum_batch(const Dataset& ds);

enum class ProbeSubset { Auxiliary, ABA, All };

std::string_view to_string(ProbeSubset subset);

/// Auxiliary: the plan's selected source classes. ABA: all but those.
Dataset probe_subset(const Dataset& src, const PairingPlan& plan, ProbeSubset subset);

struct ProbeConfig {
  int iterations = 500;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  ProbeSubset subset = ProbeSubset::All;
  double accuracy = 0.0;        // held-out
  double train_accuracy = 0.0;  // on the probe's own training split
};

/// Fresh softmax classifier on frozen extracted features.
ProbeResult linear_probe(const ModelParams& params, const Dataset& subset,
                         ProbeSubset which, const ProbeConfig& cfg);

}  // namespace xmixup
