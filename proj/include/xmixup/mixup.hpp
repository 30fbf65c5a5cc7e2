#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xmixup/dataset.hpp"
#include "xmixup/model.hpp"
#include "xmixup/pairing.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

struct MixupConfig {
  double alpha = 2.0;
  double beta = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MixedExample {
  Vector x;
  SoftLabel y;
  double lambda = 1.0;
};

/// Inverse CDF of Beta(alpha, 1): F(x) = x^alpha, so x = u^(1/alpha).
double beta_one_inverse_cdf(double alpha, double u);

/// Marsaglia-Tsang; shapes below 1 use G(a) = G(a + 1) U^(1/a).
double sample_gamma(double shape, Rng& rng);

/// G_a / (G_a + G_b).
double sample_beta_gamma_ratio(double alpha, double beta, Rng& rng);

/// Beta(alpha, beta) draw; beta == 1 takes the inverse-CDF path.
double sample_beta(const MixupConfig& cfg, Rng& rng);

/// Per-class sample index over a source dataset, for repeated draws.
class SourcePool {
 public:
  explicit SourcePool(const Dataset& src);

  const Dataset& dataset() const noexcept { return *src_; }
  const std::vector<std::size_t>& members(int source_class) const;

 private:
  const Dataset* src_;
  std::vector<std::vector<std::size_t>> by_class_;
};

/// Uniform over the source classes paired with `target_class` (all rounds),
/// then uniform over that class's samples.
const Sample& draw_auxiliary(const PairingPlan& plan, int target_class,
                             const SourcePool& pool, Rng& rng);
Sample draw_auxiliary(const PairingPlan& plan, int target_class, const Dataset& src,
                      Rng& rng);

/// x = l x_t + (1 - l) x_s, y = l y_t + (1 - l) y_s.
MixedExample mix(std::span<const double> x_t, const SoftLabel& y_t,
                 std::span<const double> x_s, const SoftLabel& y_s, double lambda);

/// Uniform-with-replacement positions into `ds`.
std::vector<std::size_t> draw_indices(const Dataset& ds, std::size_t count, Rng& rng);

/// Cross-domain mix of one target sample with an auxiliary source sample.
/// With `keep_aux_label` false the mixed label is the target one-hot.
MixedExample cross_domain_mix(const Sample& target, const PairingPlan& plan,
                              const SourcePool& pool, const LabelSpace& labels,
                              const MixupConfig& cfg, Rng& rng,
                              bool keep_aux_label = true);

/// Target batch drawn with replacement, each sample mixed with a fresh
/// auxiliary sample and a fresh lambda.
std::vector<MixedExample> make_batch(const Dataset& tgt_train, const Dataset& src,
                                     const PairingPlan& plan, const LabelSpace& labels,
                                     const MixupConfig& cfg, std::size_t batch_size,
                                     Rng& rng);

}  // namespace xmixup
