#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xmixup/linalg.hpp"

namespace xmixup {

enum class Domain { Source, Target };

std::string_view to_string(Domain domain);
Domain parse_domain(std::string_view text);

struct Sample {
  Vector x;
  int label = 0;
  Domain domain = Domain::Source;

  bool operator==(const Sample&) const = default;
};

/// A labelled point cloud. Samples are stored class-major by the generators
/// but no consumer relies on ordering.
struct Dataset {
  Domain domain = Domain::Source;
  int class_count = 0;
  std::size_t dim = 0;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Sample count per class, indexed by label.
  std::vector<std::size_t> class_sizes() const;
  /// Sample positions per class, indexed by label.
  std::vector<std::vector<std::size_t>> indices_by_class() const;

  /// Checks dimensions and label ranges; throws DataError.
  void validate() const;
};

/// Ground-truth correspondence from target classes to the source classes
/// they were copied from. nullopt marks a novel class.
struct PlantedMapping {
  std::vector<std::optional<int>> source_of;

  bool operator==(const PlantedMapping&) const = default;
};

struct TargetData {
  Dataset dataset;
  PlantedMapping planted;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// The cluster means gen_source uses for the same arguments.
std::vector<Vector> source_means(int classes, std::size_t dim, double spread, std::uint64_t seed);

/// `classes` Gaussian clusters in `dim` dimensions. Means are uniform in
/// [-1, 1]^dim, resampled while any two lie closer than 0.5 * spread; each
/// sample adds isotropic noise with stddev `spread`.
Dataset gen_source(int classes, int per_class, std::size_t dim, double spread,
                   std::uint64_t seed);

/// Builds a target task from `src`. Target class i < planted.size() is a copy
/// of source class planted[i]: per_class source samples recentred onto the
/// source class mean, then the whole class translated by one N(0, noise^2 I)
/// draw. Novel classes get fresh means and the pooled within-class spread of
/// `src`.
TargetData gen_target(const Dataset& src, std::span<const int> planted, int novel,
                      int per_class, double noise, std::uint64_t seed);

/// Stratified split; every class keeps at least one training sample.
Split split(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Keeps only samples whose label is in `classes`. Labels are unchanged.
Dataset select_classes(const Dataset& ds, std::span<const int> classes);

/// Per-class means of the raw inputs.
std::vector<Vector> class_means(const Dataset& ds);

void write_csv(const Dataset& ds, std::ostream& out);
Dataset read_csv(std::istream& in);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

void write_planted_csv(const PlantedMapping& mapping, std::ostream& out);
PlantedMapping read_planted_csv(std::istream& in);

}  // namespace xmixup
