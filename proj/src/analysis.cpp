#include "xmixup/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "xmixup/errors.hpp"
#include "xmixup/mixup.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

namespace {

constexpr int kMaxSweeps = 100;

// Column-major copy of `a` (or of its transpose when it is wide) so that the
// Jacobi rotations act on contiguous columns.
std::vector<Vector> tall_columns(const Matrix& a) {
  const bool wide = a.cols() > a.rows();
  const std::size_t rows = wide ? a.cols() : a.rows();
  const std::size_t cols = wide ? a.rows() : a.cols();
  std::vector<Vector> c(cols, Vector(rows));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      if (wide) {
        c[r][k] = a(r, k);
      } else {
        c[k][r] = a(r, k);
      }
    }
  }
  return c;
}

}  // namespace

Vector singular_values(const Matrix& a) {
  if (!all_finite(a.values())) throw NumericError("singular_values: non-finite entries");
  auto cols = tall_columns(a);
  const std::size_t n = cols.size();
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto& up = cols[p];
        auto& uq = cols[q];
        const double alpha = dot(up, up);
        const double beta = dot(uq, uq);
        const double gamma = dot(up, uq);
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < up.size(); ++i) {
          const double xp = up[i];
          const double xq = uq[i];
          up[i] = c * xp - s * xq;
          uq[i] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) break;
  }
  Vector sv(n);
  for (std::size_t k = 0; k < n; ++k) sv[k] = norm(cols[k]);
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

double Spectrum::tail_mean(std::size_t k) const {
  if (normalized.empty()) return 0.0;
  k = std::min(k, normalized.size());
  double s = 0.0;
  for (std::size_t i = normalized.size() - k; i < normalized.size(); ++i) s += normalized[i];
  return s / static_cast<double>(k);
}

Spectrum normalized_spectrum(const Matrix& features) {
  Vector sv = singular_values(features);
  if (sv.empty() || !(sv.front() > 0.0)) throw NumericError("spectrum: feature matrix has rank 0");
  const double top = sv.front();
  for (double& v : sv) v /= top;
  sv.front() = 1.0;
  return Spectrum{std::move(sv)};
}

Matrix feature_matrix(const ModelParams& params, const Dataset& ds, std::span<const std::size_t> rows) {
  Matrix m(rows.size(), params.feature_dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Vector f = extract_features(params, ds.samples.at(rows[r]).x);
    std::copy(f.begin(), f.end(), m.row(r).begin());
  }
  return m;
}

std::size_t default_spectrum_batch(const Dataset& ds) { return std::min<std::size_t>(512, ds.size()); }

Spectrum spectrum(const ModelParams& params, const Dataset& ds, std::size_t batch, std::uint64_t seed) {
  if (batch < params.feature_dim()) {
    throw ArgumentError("spectrum: batch " + std::to_string(batch) + " is smaller than the feature width " +
                        std::to_string(params.feature_dim()));
  }
  if (batch > ds.size()) throw ArgumentError("spectrum: batch larger than the dataset");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
  idx.resize(batch);
  return normalized_spectrum(feature_matrix(params, ds, idx));
}

std::string_view to_string(ProbeSubset subset) {
  switch (subset) {
    case ProbeSubset::Auxiliary:
      return "auxiliary";
    case ProbeSubset::ABA:
      return "aba";
    case ProbeSubset::All:
      return "all";
  }
  return "?";
}

Dataset probe_subset(const Dataset& src, const PairingPlan& plan, ProbeSubset subset) {
  if (subset == ProbeSubset::All) return src;
  const auto aux = plan.selected_sources();
  if (subset == ProbeSubset::Auxiliary) return select_classes(src, aux);
  std::vector<int> rest;
  for (int c = 0; c < src.class_count; ++c) {
    if (!std::binary_search(aux.begin(), aux.end(), c)) rest.push_back(c);
  }
  return select_classes(src, rest);
}

ProbeResult linear_probe(const ModelParams& params, const Dataset& subset, ProbeSubset which,
                         const ProbeConfig& cfg) {
  if (subset.empty()) throw DataError("linear_probe: empty subset");
  std::set<int> present;
  for (const auto& s : subset.samples) present.insert(s.label);
  if (present.size() < 2) throw DataError("linear_probe: degenerate probe, subset has a single class");
  const std::vector<int> classes(present.begin(), present.end());
  auto remap = [&](int label) {
    return static_cast<int>(std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
  };

  const std::size_t h = params.feature_dim();
  Dataset feats{subset.domain, static_cast<int>(classes.size()), h, {}};
  for (const auto& s : subset.samples) feats.samples.push_back({extract_features(params, s.x), remap(s.label), s.domain});
  Split parts = split(feats, cfg.test_fraction, derive_seed(cfg.seed, 1));

  // Standardise with training-split statistics.
  Vector mean(h, 0.0), scale(h, 0.0);
  for (const auto& s : parts.train.samples) {
    for (std::size_t j = 0; j < h; ++j) mean[j] += s.x[j];
  }
  for (double& m : mean) m /= static_cast<double>(parts.train.size());
  for (const auto& s : parts.train.samples) {
    for (std::size_t j = 0; j < h; ++j) scale[j] += (s.x[j] - mean[j]) * (s.x[j] - mean[j]);
  }
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(parts.train.size()));
    v = v > 1e-8 ? 1.0 / v : 0.0;
  }
  auto standardise = [&](Dataset& d) {
    for (auto& s : d.samples) {
      for (std::size_t j = 0; j < h; ++j) s.x[j] = (s.x[j] - mean[j]) * scale[j];
    }
  };
  standardise(parts.train);
  standardise(parts.test);

  const std::size_t k = classes.size();
  Rng rng(derive_seed(cfg.seed, 2));
  Layer clf = init_layer(h, k, rng);
  Layer grad{Matrix(k, h), Vector(k)};
  Layer vel{Matrix(k, h), Vector(k, 0.0)};
  for (int it = 0; it < cfg.iterations; ++it) {
    std::fill(grad.weights.values().begin(), grad.weights.values().end(), 0.0);
    std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
    const double inv = 1.0 / static_cast<double>(cfg.batch_size);
    for (std::size_t i : draw_indices(parts.train, cfg.batch_size, rng)) {
      const Sample& s = parts.train.samples[i];
      const Vector logits = affine(clf.weights, clf.bias, s.x);
      const SoftmaxLoss sl = softmax_cross_entropy(logits, SoftLabel::one_hot(k, static_cast<std::size_t>(s.label)));
      for (std::size_t r = 0; r < k; ++r) {
        const double d = sl.dlogits[r] * inv;
        grad.bias[r] += d;
        auto row = grad.weights.row(r);
        for (std::size_t j = 0; j < h; ++j) row[j] += d * s.x[j];
      }
    }
    auto step = [&](std::span<double> w, std::span<const double> g, std::span<double> v) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = cfg.momentum * v[i] - cfg.lr * g[i];
        w[i] += v[i];
      }
    };
    step(clf.weights.values(), grad.weights.values(), vel.weights.values());
    step(clf.bias, grad.bias, vel.bias);
  }

  auto accuracy = [&](const Dataset& d) {
    std::size_t correct = 0;
    for (const auto& s : d.samples) {
      const Vector logits = affine(clf.weights, clf.bias, s.x);
      const auto best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (best == s.label) ++correct;
    }
    return d.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(d.size());
  };
  if (!all_finite(clf.weights.values())) throw NumericError("linear_probe: classifier diverged");
  return ProbeResult{which, accuracy(parts.test), accuracy(parts.train)};
}

}  // namespace xmixup
