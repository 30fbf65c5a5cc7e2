#include "xmixup/mixup.hpp"

#include <cmath>
#include <string>

#include "xmixup/errors.hpp"

namespace xmixup {

void MixupConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha) || !(beta > 0.0) || !std::isfinite(beta)) {
    throw ArgumentError("mixup: alpha and beta must be positive");
  }
}

double beta_one_inverse_cdf(double alpha, double u) {
  if (!(alpha > 0.0)) throw ArgumentError("beta: alpha must be positive");
  return std::pow(u, 1.0 / alpha);
}

double sample_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) throw ArgumentError("gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta_gamma_ratio(double alpha, double beta, Rng& rng) {
  const double a = sample_gamma(alpha, rng);
  const double b = sample_gamma(beta, rng);
  return a / (a + b);
}

double sample_beta(const MixupConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.beta == 1.0) return beta_one_inverse_cdf(cfg.alpha, rng.uniform());
  return sample_beta_gamma_ratio(cfg.alpha, cfg.beta, rng);
}

SourcePool::SourcePool(const Dataset& src) : src_(&src), by_class_(src.indices_by_class()) {}

const std::vector<std::size_t>& SourcePool::members(int source_class) const {
  if (source_class < 0 || static_cast<std::size_t>(source_class) >= by_class_.size() ||
      by_class_[static_cast<std::size_t>(source_class)].empty()) {
    throw DataError("source class " + std::to_string(source_class) + " has no samples");
  }
  return by_class_[static_cast<std::size_t>(source_class)];
}

const Sample& draw_auxiliary(const PairingPlan& plan, int target_class, const SourcePool& pool,
                             Rng& rng) {
  const auto sources = plan.sources_for(target_class);
  if (sources.empty()) {
    throw LookupError("pairing plan has no entry for target class " + std::to_string(target_class));
  }
  const int cls = sources[rng.index(sources.size())];
  const auto& members = pool.members(cls);
  return pool.dataset().samples[members[rng.index(members.size())]];
}

Sample draw_auxiliary(const PairingPlan& plan, int target_class, const Dataset& src, Rng& rng) {
  SourcePool pool(src);
  return draw_auxiliary(plan, target_class, pool, rng);
}

MixedExample mix(std::span<const double> x_t, const SoftLabel& y_t, std::span<const double> x_s,
                 const SoftLabel& y_s, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("mix: lambda outside [0, 1]");
  if (x_t.size() != x_s.size() || y_t.p.size() != y_s.p.size()) {
    throw ArgumentError("mix: dimension mismatch");
  }
  MixedExample m{Vector(x_t.size()), SoftLabel{Vector(y_t.p.size())}, lambda};
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < x_t.size(); ++i) m.x[i] = lambda * x_t[i] + mu * x_s[i];
  for (std::size_t i = 0; i < y_t.p.size(); ++i) m.y.p[i] = lambda * y_t.p[i] + mu * y_s.p[i];
  return m;
}

std::vector<std::size_t> draw_indices(const Dataset& ds, std::size_t count, Rng& rng) {
  if (ds.empty()) throw DataError("cannot draw from an empty dataset");
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = rng.index(ds.size());
  return idx;
}

MixedExample cross_domain_mix(const Sample& target, const PairingPlan& plan, const SourcePool& pool,
                              const LabelSpace& labels, const MixupConfig& cfg, Rng& rng,
                              bool keep_aux_label) {
  const Sample& aux = draw_auxiliary(plan, target.label, pool, rng);
  const double lambda = sample_beta(cfg, rng);
  const SoftLabel y_t = SoftLabel::one_hot(labels.size(), labels.target_index(target.label));
  const SoftLabel y_s = keep_aux_label ? SoftLabel::one_hot(labels.size(), labels.source_index(aux.label)) : y_t;
  return mix(target.x, y_t, aux.x, y_s, lambda);
}

std::vector<MixedExample> make_batch(const Dataset& tgt_train, const Dataset& src,
                                     const PairingPlan& plan, const LabelSpace& labels,
                                     const MixupConfig& cfg, std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw ArgumentError("make_batch: batch size must be >= 1");
  cfg.validate();
  SourcePool pool(src);
  std::vector<MixedExample> out;
  out.reserve(batch_size);
  for (std::size_t i : draw_indices(tgt_train, batch_size, rng)) {
    out.push_back(cross_domain_mix(tgt_train.samples[i], plan, pool, labels, cfg, rng));
  }
  return out;
}

}  // namespace xmixup
