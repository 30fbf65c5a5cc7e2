#include "xmixup/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include "xmixup/errors.hpp"
#include "xmixup/format.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

namespace {

constexpr int kMaxMeanAttempts = 100000;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Uniform mean in [-1, 1]^dim at least `min_gap` away from every entry of
// `taken`.
Vector draw_separated_mean(std::size_t dim, double min_gap,
                           const std::vector<Vector>& taken, Rng& rng) {
  Vector mean(dim);
  for (int attempt = 0; attempt < kMaxMeanAttempts; ++attempt) {
    for (double& v : mean) v = rng.uniform(-1.0, 1.0);
    bool ok = std::all_of(taken.begin(), taken.end(), [&](const Vector& other) {
      return squared_distance(mean, other) >= min_gap * min_gap;
    });
    if (ok) return mean;
  }
  throw DataError("could not place well-separated class means; lower spread or class count");
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

std::string_view to_string(Domain domain) {
  return domain == Domain::Source ? "source" : "target";
}

Domain parse_domain(std::string_view text) {
  if (text == "source") return Domain::Source;
  if (text == "target") return Domain::Target;
  throw ArgumentError("unknown domain '" + std::string(text) + "'");
}

std::vector<std::size_t> Dataset::class_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(class_count, 0)), 0);
  for (const auto& s : samples) ++sizes.at(static_cast<std::size_t>(s.label));
  return sizes;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> idx(static_cast<std::size_t>(std::max(class_count, 0)));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    idx.at(static_cast<std::size_t>(samples[i].label)).push_back(i);
  }
  return idx;
}

void Dataset::validate() const {
  if (class_count < 1) throw DataError("dataset has no classes");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.x.size() != dim) {
      throw DataError("sample " + std::to_string(i) + " has dimension " +
                      std::to_string(s.x.size()) + ", expected " + std::to_string(dim));
    }
    if (s.label < 0 || s.label >= class_count) {
      throw DataError("sample " + std::to_string(i) + " has label " +
                      std::to_string(s.label) + " outside [0, " +
                      std::to_string(class_count) + ")");
    }
  }
}

std::vector<Vector> source_means(int classes, std::size_t dim, double spread, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  std::vector<Vector> means;
  means.reserve(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) means.push_back(draw_separated_mean(dim, 0.5 * spread, means, rng));
  return means;
}

Dataset gen_source(int classes, int per_class, std::size_t dim, double spread,
                   std::uint64_t seed) {
  if (classes < 2) throw ArgumentError("gen_source: need at least 2 classes");
  if (per_class < 2) throw ArgumentError("gen_source: need at least 2 samples per class");
  if (dim < 2) throw ArgumentError("gen_source: dimension must be at least 2");
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw ArgumentError("gen_source: spread must be positive");
  }

  const std::vector<Vector> means = source_means(classes, dim, spread, seed);
  Rng rng(derive_seed(seed, 1));
  Dataset ds{Domain::Source, classes, dim, {}};
  ds.samples.reserve(static_cast<std::size_t>(classes) * static_cast<std::size_t>(per_class));
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      Sample s{Vector(dim), c, Domain::Source};
      for (std::size_t j = 0; j < dim; ++j) s.x[j] = means[static_cast<std::size_t>(c)][j] + spread * rng.normal();
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<Vector> class_means(const Dataset& ds) {
  std::vector<Vector> means(static_cast<std::size_t>(ds.class_count), Vector(ds.dim, 0.0));
  auto sizes = ds.class_sizes();
  for (const auto& s : ds.samples) {
    auto& m = means[static_cast<std::size_t>(s.label)];
    for (std::size_t j = 0; j < ds.dim; ++j) m[j] += s.x[j];
  }
  for (std::size_t c = 0; c < means.size(); ++c) {
    if (sizes[c] == 0) continue;
    for (double& v : means[c]) v /= static_cast<double>(sizes[c]);
  }
  return means;
}

TargetData gen_target(const Dataset& src, std::span<const int> planted, int novel,
                      int per_class, double noise, std::uint64_t seed) {
  if (per_class < 2) throw ArgumentError("gen_target: need at least 2 samples per class");
  if (novel < 0) throw ArgumentError("gen_target: novel class count must be non-negative");
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw ArgumentError("gen_target: noise must be non-negative");
  }
  if (planted.empty() && novel == 0) throw ArgumentError("gen_target: target needs at least one class");
  std::set<int> seen;
  for (int p : planted) {
    if (p < 0 || p >= src.class_count) {
      throw ArgumentError("gen_target: planted index " + std::to_string(p) + " out of range");
    }
    if (!seen.insert(p).second) {
      throw ArgumentError("gen_target: duplicate planted index " + std::to_string(p));
    }
  }
  src.validate();

  Rng rng(seed);
  const std::size_t dim = src.dim;
  const auto members = src.indices_by_class();
  const auto src_means = class_means(src);

  const int n = static_cast<int>(planted.size()) + novel;
  TargetData out;
  out.dataset = Dataset{Domain::Target, n, dim, {}};
  out.planted.source_of.assign(static_cast<std::size_t>(n), std::nullopt);

  for (std::size_t t = 0; t < planted.size(); ++t) {
    const int s = planted[t];
    out.planted.source_of[t] = s;
    std::vector<std::size_t> pool = members[static_cast<std::size_t>(s)];
    if (pool.empty()) throw DataError("gen_target: source class " + std::to_string(s) + " is empty");
    shuffle(pool, rng);

    std::vector<const Sample*> chosen;
    for (int k = 0; k < per_class; ++k) chosen.push_back(&src.samples[pool[static_cast<std::size_t>(k) % pool.size()]]);
    // Recentre the copies onto the source mean, then shift the whole class.
    Vector offset = src_means[static_cast<std::size_t>(s)];
    for (const Sample* c : chosen) {
      for (std::size_t j = 0; j < dim; ++j) offset[j] -= c->x[j] / static_cast<double>(per_class);
    }
    if (noise > 0.0) {
      for (double& o : offset) o += noise * rng.normal();
    }
    for (const Sample* c : chosen) {
      Sample x{Vector(dim), static_cast<int>(t), Domain::Target};
      for (std::size_t j = 0; j < dim; ++j) x.x[j] = c->x[j] + offset[j];
      out.dataset.samples.push_back(std::move(x));
    }
  }

  if (novel > 0) {
    double ss = 0.0;
    for (const auto& s : src.samples) ss += squared_distance(s.x, src_means[static_cast<std::size_t>(s.label)]);
    const double spread = std::sqrt(ss / (static_cast<double>(src.size()) * static_cast<double>(dim)));
    if (!(spread > 0.0)) throw DataError("gen_target: source has zero within-class spread");
    std::vector<Vector> taken = src_means;
    for (int k = 0; k < novel; ++k) {
      Vector mean = draw_separated_mean(dim, 0.5 * spread, taken, rng);
      taken.push_back(mean);
      const int label = static_cast<int>(planted.size()) + k;
      for (int i = 0; i < per_class; ++i) {
        Sample x{Vector(dim), label, Domain::Target};
        for (std::size_t j = 0; j < dim; ++j) x.x[j] = mean[j] + spread * rng.normal();
        out.dataset.samples.push_back(std::move(x));
      }
    }
  }
  return out;
}

Split split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ArgumentError("split: test fraction must lie in (0, 1)");
  }
  ds.validate();
  Rng rng(seed);
  std::vector<bool> in_test(ds.size(), false);
  auto by_class = ds.indices_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw DataError("split: class " + std::to_string(c) + " has fewer than 2 samples");
    }
    shuffle(idx, rng);
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n_test; ++k) in_test[idx[k]] = true;
  }
  Split out{Dataset{ds.domain, ds.class_count, ds.dim, {}}, Dataset{ds.domain, ds.class_count, ds.dim, {}}};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (in_test[i] ? out.test : out.train).samples.push_back(ds.samples[i]);
  }
  return out;
}

Dataset select_classes(const Dataset& ds, std::span<const int> classes) {
  std::set<int> keep(classes.begin(), classes.end());
  Dataset out{ds.domain, ds.class_count, ds.dim, {}};
  for (const auto& s : ds.samples) {
    if (keep.count(s.label)) out.samples.push_back(s);
  }
  return out;
}

void write_csv(const Dataset& ds, std::ostream& out) {
  out << to_string(ds.domain) << ',' << ds.class_count << ',' << ds.dim << '\n';
  for (const auto& s : ds.samples) {
    out << s.label;
    for (double v : s.x) out << ',' << format_double(v);
    out << '\n';
  }
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  auto header = split_fields(strip_cr(line));
  if (header.size() != 3) throw ParseError("header must be 'domain,class_count,d'", 1);
  Dataset ds;
  try {
    ds.domain = parse_domain(header[0]);
  } catch (const ArgumentError&) {
    throw ParseError("unknown domain '" + std::string(header[0]) + "'", 1);
  }
  long long classes = 0;
  long long dim = 0;
  if (!parse_int(header[1], classes) || classes < 1) throw ParseError("bad class_count", 1);
  if (!parse_int(header[2], dim) || dim < 1) throw ParseError("bad dimension", 1);
  ds.class_count = static_cast<int>(classes);
  ds.dim = static_cast<std::size_t>(dim);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    auto fields = split_fields(row);
    if (fields.size() != ds.dim + 1) {
      throw ParseError("expected " + std::to_string(ds.dim + 1) + " columns, found " +
                           std::to_string(fields.size()),
                       lineno);
    }
    long long label = 0;
    if (!parse_int(fields[0], label)) throw ParseError("non-integer label", lineno);
    if (label < 0 || label >= classes) {
      throw ParseError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")",
                       lineno);
    }
    Sample s{Vector(ds.dim), static_cast<int>(label), ds.domain};
    for (std::size_t j = 0; j < ds.dim; ++j) {
      if (!parse_double(fields[j + 1], s.x[j])) {
        throw ParseError("non-numeric value in column " + std::to_string(j + 1), lineno);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DataError("empty dataset: no sample rows after header");
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(ds, out);
  if (!out) throw DataError("write failed: " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return read_csv(in);
}

void write_planted_csv(const PlantedMapping& mapping, std::ostream& out) {
  out << "target_class,source_class\n";
  for (std::size_t t = 0; t < mapping.source_of.size(); ++t) {
    out << t << ',';
    if (mapping.source_of[t]) {
      out << *mapping.source_of[t];
    } else {
      out << "none";
    }
    out << '\n';
  }
}

PlantedMapping read_planted_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header", 1);
  PlantedMapping m;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    auto f = split_fields(row);
    long long t = 0;
    if (f.size() != 2 || !parse_int(f[0], t) || t != static_cast<long long>(m.source_of.size())) {
      throw ParseError("malformed planted mapping row", lineno);
    }
    long long s = 0;
    if (f[1] == "none") {
      m.source_of.emplace_back(std::nullopt);
    } else if (parse_int(f[1], s) && s >= 0) {
      m.source_of.emplace_back(static_cast<int>(s));
    } else {
      throw ParseError("bad source class", lineno);
    }
  }
  return m;
}

}  // namespace xmixup
