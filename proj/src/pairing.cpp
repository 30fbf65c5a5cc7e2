#include "xmixup/pairing.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>

#include "xmixup/errors.hpp"
#include "xmixup/format.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

namespace {

// Greedy matching over the allowed rows/columns; stops when either side runs
// out. Returns (row, col) pairs in selection order.
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(const Matrix& sims,
                                                              std::vector<bool> row_free,
                                                              std::vector<bool> col_free) {
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  while (true) {
    std::optional<std::pair<std::size_t, std::size_t>> best;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < sims.rows(); ++r) {
      if (!row_free[r]) continue;
      for (std::size_t c = 0; c < sims.cols(); ++c) {
        if (!col_free[c]) continue;
        if (!best || sims(r, c) > best_val) {
          best = {r, c};
          best_val = sims(r, c);
        }
      }
    }
    if (!best) break;
    row_free[best->first] = false;
    col_free[best->second] = false;
    picks.push_back(*best);
  }
  return picks;
}

void sort_entries(std::vector<PlanEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
    return a.round != b.round ? a.round < b.round : a.target < b.target;
  });
}

}  // namespace

SimilarityMatrix SimilarityMatrix::from_values(Matrix values) {
  SimilarityMatrix s;
  s.target_classes.resize(values.rows());
  s.source_classes.resize(values.cols());
  std::iota(s.target_classes.begin(), s.target_classes.end(), 0);
  std::iota(s.source_classes.begin(), s.source_classes.end(), 0);
  s.sims = std::move(values);
  return s;
}

std::vector<int> PairingPlan::sources_for(int target) const {
  std::vector<int> out;
  for (const auto& e : entries) {
    if (e.target == target) out.push_back(e.source);
  }
  return out;
}

std::vector<int> PairingPlan::target_classes() const {
  std::set<int> t;
  for (const auto& e : entries) t.insert(e.target);
  return {t.begin(), t.end()};
}

std::vector<int> PairingPlan::selected_sources() const {
  std::set<int> s;
  for (const auto& e : entries) s.insert(e.source);
  return {s.begin(), s.end()};
}

Assignment PairingPlan::first_round() const {
  Assignment a;
  for (const auto& e : entries) {
    if (e.round == 1) a[e.target] = e.source;
  }
  return a;
}

CentroidBank compute_centroids(const Dataset& ds, const ModelParams& params) {
  ds.validate();
  CentroidBank bank;
  for (const auto& s : ds.samples) {
    Vector f = extract_features(params, s.x);
    auto [it, inserted] = bank.centroids.try_emplace(s.label, f.size(), 0.0);
    for (std::size_t j = 0; j < f.size(); ++j) it->second[j] += f[j];
    ++bank.counts[s.label];
  }
  for (int c = 0; c < ds.class_count; ++c) {
    if (!bank.counts.count(c)) throw DataError("compute_centroids: class " + std::to_string(c) + " is empty");
  }
  for (auto& [c, v] : bank.centroids) {
    for (double& x : v) x /= static_cast<double>(bank.counts[c]);
  }
  return bank;
}

SimilarityMatrix similarity(const CentroidBank& src, const CentroidBank& tgt) {
  SimilarityMatrix s;
  for (const auto& [c, v] : tgt.centroids) s.target_classes.push_back(c);
  for (const auto& [c, v] : src.centroids) s.source_classes.push_back(c);
  s.sims = Matrix(s.targets(), s.sources());

  std::optional<std::size_t> width;
  auto check = [&](const char* side, int c, const Vector& v) {
    if (width && v.size() != *width) throw ArgumentError("similarity: centroid lengths differ");
    width = v.size();
    const double n = norm(v);
    if (!(n > 1e-12)) {
      throw NumericError(std::string("similarity: ") + side + " class " + std::to_string(c) +
                         " has a zero-norm centroid");
    }
    return n;
  };
  std::vector<double> src_norms;
  for (const auto& [c, v] : src.centroids) src_norms.push_back(check("source", c, v));
  std::size_t r = 0;
  for (const auto& [tc, tv] : tgt.centroids) {
    const double tn = check("target", tc, tv);
    std::size_t col = 0;
    for (const auto& [sc, sv] : src.centroids) {
      s.sims(r, col) = dot(tv, sv) / (tn * src_norms[col]);
      ++col;
    }
    ++r;
  }
  return s;
}

Assignment greedy_pair(const SimilarityMatrix& sims) {
  if (sims.sources() < sims.targets()) {
    throw ArgumentError("greedy_pair: need at least as many source classes (" +
                        std::to_string(sims.sources()) + ") as target classes (" +
                        std::to_string(sims.targets()) + ")");
  }
  Assignment out;
  for (auto [r, c] : greedy_match(sims.sims, std::vector<bool>(sims.targets(), true),
                                  std::vector<bool>(sims.sources(), true))) {
    out[sims.target_classes[r]] = sims.source_classes[c];
  }
  return out;
}

Assignment optimal_pair(const SimilarityMatrix& sims) {
  const std::size_t n = sims.targets();
  const std::size_t m = sims.sources();
  if (n > 8) throw SizeError("optimal_pair: exhaustive search limited to 8 target classes");
  if (m < n) throw ArgumentError("optimal_pair: fewer source than target classes");

  std::vector<std::size_t> current(n), best;
  std::vector<bool> used(m, false);
  double best_total = -std::numeric_limits<double>::infinity();
  auto search = [&](auto&& self, std::size_t row, double total) -> void {
    if (row == n) {
      if (best.empty() || total > best_total) {
        best_total = total;
        best = current;
      }
      return;
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (used[c]) continue;
      used[c] = true;
      current[row] = c;
      self(self, row + 1, total + sims.sims(row, c));
      used[c] = false;
    }
  };
  search(search, 0, 0.0);

  Assignment out;
  for (std::size_t r = 0; r < n; ++r) out[sims.target_classes[r]] = sims.source_classes[best[r]];
  return out;
}

double total_similarity(const SimilarityMatrix& sims, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& [t, s] : assignment) {
    auto r = std::find(sims.target_classes.begin(), sims.target_classes.end(), t);
    auto c = std::find(sims.source_classes.begin(), sims.source_classes.end(), s);
    if (r == sims.target_classes.end() || c == sims.source_classes.end()) {
      throw LookupError("total_similarity: class not in similarity matrix");
    }
    total += sims.sims(static_cast<std::size_t>(r - sims.target_classes.begin()),
                       static_cast<std::size_t>(c - sims.source_classes.begin()));
  }
  return total;
}

PairingPlan expand_until_threshold(const SimilarityMatrix& sims,
                                   const std::map<int, std::size_t>& src_class_sizes,
                                   std::size_t threshold) {
  if (sims.sources() < sims.targets()) {
    throw ArgumentError("expand_until_threshold: fewer source than target classes");
  }
  auto size_of = [&](int cls) {
    auto it = src_class_sizes.find(cls);
    if (it == src_class_sizes.end()) {
      throw LookupError("expand_until_threshold: no size for source class " + std::to_string(cls));
    }
    return it->second;
  };

  PairingPlan plan;
  std::vector<bool> col_free(sims.sources(), true);
  std::size_t selected = 0;
  std::size_t remaining = sims.sources();
  while (remaining > 0 && (plan.rounds == 0 || selected < threshold)) {
    ++plan.rounds;
    auto picks = greedy_match(sims.sims, std::vector<bool>(sims.targets(), true), col_free);
    for (auto [r, c] : picks) {
      col_free[c] = false;
      --remaining;
      const int src = sims.source_classes[c];
      selected += size_of(src);
      plan.entries.push_back({plan.rounds, sims.target_classes[r], src, sims.sims(r, c)});
    }
  }
  plan.exhausted = selected < threshold;
  sort_entries(plan.entries);
  return plan;
}

PairingPlan randomize_plan(const PairingPlan& plan, const SimilarityMatrix& sims,
                           std::uint64_t seed) {
  if (plan.entries.size() > sims.sources()) {
    throw ArgumentError("randomize_plan: plan uses more source classes than available");
  }
  Rng rng(seed);
  std::vector<std::size_t> cols(sims.sources());
  std::iota(cols.begin(), cols.end(), 0);
  for (std::size_t i = cols.size(); i > 1; --i) std::swap(cols[i - 1], cols[rng.index(i)]);

  PairingPlan out;
  out.rounds = plan.rounds;
  out.exhausted = plan.exhausted;
  std::size_t next = 0;
  for (const auto& e : plan.entries) {
    auto r = std::find(sims.target_classes.begin(), sims.target_classes.end(), e.target);
    if (r == sims.target_classes.end()) throw LookupError("randomize_plan: unknown target class");
    const std::size_t c = cols[next++];
    out.entries.push_back({e.round, e.target, sims.source_classes[c],
                           sims.sims(static_cast<std::size_t>(r - sims.target_classes.begin()), c)});
  }
  sort_entries(out.entries);
  return out;
}

LabelSpace::LabelSpace(int target_classes, std::vector<int> source_classes)
    : target_count_(target_classes), source_classes_(std::move(source_classes)) {
  if (target_count_ < 1) throw ArgumentError("label space needs at least one target class");
  std::sort(source_classes_.begin(), source_classes_.end());
  source_classes_.erase(std::unique(source_classes_.begin(), source_classes_.end()), source_classes_.end());
  for (std::size_t i = 0; i < source_classes_.size(); ++i) {
    source_lookup_[source_classes_[i]] = static_cast<std::size_t>(target_count_) + i;
  }
}

LabelSpace LabelSpace::from_plan(const PairingPlan& plan, int target_classes) {
  return LabelSpace(target_classes, plan.selected_sources());
}

std::size_t LabelSpace::target_index(int target_class) const {
  if (target_class < 0 || target_class >= target_count_) {
    throw LookupError("label space: target class " + std::to_string(target_class) + " out of range");
  }
  return static_cast<std::size_t>(target_class);
}

std::size_t LabelSpace::source_index(int source_class) const {
  auto it = source_lookup_.find(source_class);
  if (it == source_lookup_.end()) {
    throw LookupError("label space: source class " + std::to_string(source_class) + " not selected");
  }
  return it->second;
}

void write_plan_csv(const PairingPlan& plan, std::ostream& out) {
  out << "round,target_class,source_class,similarity\n";
  for (const auto& e : plan.entries) {
    out << e.round << ',' << e.target << ',' << e.source << ',' << format_double(e.similarity) << '\n';
  }
}

PairingPlan read_plan_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("round,target_class,source_class,similarity", 0) != 0) {
    throw ParseError("expected header 'round,target_class,source_class,similarity'", 1);
  }
  PairingPlan plan;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_fields(line);
    long long round = 0, t = 0, s = 0;
    double sim = 0.0;
    if (f.size() != 4 || !parse_int(f[0], round) || !parse_int(f[1], t) || !parse_int(f[2], s) ||
        !parse_double(f[3], sim) || round < 1 || t < 0 || s < 0) {
      throw ParseError("malformed pairing row", lineno);
    }
    plan.entries.push_back({static_cast<int>(round), static_cast<int>(t), static_cast<int>(s), sim});
    plan.rounds = std::max(plan.rounds, static_cast<int>(round));
  }
  if (plan.entries.empty()) throw DataError("pairing plan has no rows");
  sort_entries(plan.entries);
  return plan;
}

}  // namespace xmixup
