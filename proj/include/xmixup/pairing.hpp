#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <vector>

#include "xmixup/dataset.hpp"
#include "xmixup/linalg.hpp"
#include "xmixup/model.hpp"

namespace xmixup {

/// Mean extracted feature per class.
struct CentroidBank {
  std::map<int, Vector> centroids;
  std::map<int, std::size_t> counts;
};

/// Cosine similarities, rows = target classes, columns = source classes.
struct SimilarityMatrix {
  std::vector<int> target_classes;
  std::vector<int> source_classes;
  Matrix sims;

  /// Labels rows 0..n-1 and columns 0..m-1.
  static SimilarityMatrix from_values(Matrix values);

  std::size_t targets() const noexcept { return target_classes.size(); }
  std::size_t sources() const noexcept { return source_classes.size(); }
};

/// target class -> source class
using Assignment = std::map<int, int>;

struct PlanEntry {
  int round = 1;  // 1-based
  int target = 0;
  int source = 0;
  double similarity = 0.0;

  bool operator==(const PlanEntry&) const = default;
};

/// Multi-round pairing. Within a round the target -> source map is
/// injective; a source class is selected at most once over all rounds.
struct PairingPlan {
  std::vector<PlanEntry> entries;
  int rounds = 0;
  /// True when the sample threshold was not reached because every source
  /// class had been selected.
  bool exhausted = false;

  /// Source classes paired with `target`, in round order.
  std::vector<int> sources_for(int target) const;
  /// Target classes present in the plan, ascending.
  std::vector<int> target_classes() const;
  /// Distinct selected source classes, ascending.
  std::vector<int> selected_sources() const;
  /// Round-1 assignment.
  Assignment first_round() const;

  bool operator==(const PairingPlan&) const = default;
};

CentroidBank compute_centroids(const Dataset& ds, const ModelParams& params);

SimilarityMatrix similarity(const CentroidBank& src, const CentroidBank& tgt);

/// Globally most similar unmatched (target, source) pair first; ties go to
/// the smallest target row, then the smallest source column. Requires m >= n.
Assignment greedy_pair(const SimilarityMatrix& sims);

/// Exhaustive maximum-total-similarity injective map. Test oracle, n <= 8.
Assignment optimal_pair(const SimilarityMatrix& sims);

double total_similarity(const SimilarityMatrix& sims, const Assignment& assignment);

/// Repeats greedy pairing over the not-yet-selected source classes until the
/// selected classes hold at least `threshold` samples or none remain. A final
/// round with fewer free sources than targets pairs as many targets as it can.
PairingPlan expand_until_threshold(const SimilarityMatrix& sims,
                                   const std::map<int, std::size_t>& src_class_sizes,
                                   std::size_t threshold);

/// Plan with the same per-round shape as `plan` but source classes drawn
/// uniformly at random, without repetition, from the columns of `sims`.
PairingPlan randomize_plan(const PairingPlan& plan, const SimilarityMatrix& sims,
                           std::uint64_t seed);

/// Unified label space: target classes take [0, n), each selected source class
/// one further index in ascending class order.
class LabelSpace {
 public:
  LabelSpace(int target_classes, std::vector<int> source_classes);
  static LabelSpace from_plan(const PairingPlan& plan, int target_classes);

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(target_count_) + source_classes_.size();
  }
  int target_count() const noexcept { return target_count_; }
  const std::vector<int>& source_classes() const noexcept { return source_classes_; }

  std::size_t target_index(int target_class) const;
  std::size_t source_index(int source_class) const;

  LogitRange target_range() const { return {0, static_cast<std::size_t>(target_count_)}; }
  LogitRange source_range() const {
    return {static_cast<std::size_t>(target_count_), size()};
  }

 private:
  int target_count_;
  std::vector<int> source_classes_;
  std::map<int, std::size_t> source_lookup_;
};

/// CSV with header `round,target_class,source_class,similarity`.
void write_plan_csv(const PairingPlan& plan, std::ostream& out);
PairingPlan read_plan_csv(std::istream& in);

}  // namespace xmixup
