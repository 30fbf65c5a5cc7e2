#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xmixup/dataset.hpp"
#include "xmixup/errors.hpp"

using namespace xmixup;

namespace {

Vector mean_of(const Dataset& ds, int label) {
  Vector m(ds.dim, 0.0);
  int n = 0;
  for (const auto& s : ds.samples) {
    if (s.label != label) continue;
    for (std::size_t j = 0; j < ds.dim; ++j) m[j] += s.x[j];
    ++n;
  }
  for (double& v : m) v /= n;
  return m;
}

}  // namespace

TEST_CASE("gen_source shape and determinism") {
  const Dataset a = gen_source(5, 30, 4, 0.2, 9);
  CHECK(a.size() == 150);
  CHECK(a.class_count == 5);
  CHECK(a.dim == 4);
  CHECK(a.domain == Domain::Source);
  for (auto n : a.class_sizes()) CHECK(n == 30);
  CHECK(a == gen_source(5, 30, 4, 0.2, 9));
  CHECK_FALSE(a == gen_source(5, 30, 4, 0.2, 10));
  CHECK_THROWS_AS(gen_source(1, 30, 4, 0.2, 9), ArgumentError);
  CHECK_THROWS_AS(gen_source(3, 30, 4, -1.0, 9), ArgumentError);
}

TEST_CASE("small-sample class means stay within three standard errors") {
  const Dataset ds = gen_source(3, 50, 2, 0.05, 7);
  const auto planted = source_means(3, 2, 0.05, 7);
  for (int c = 0; c < 3; ++c) {
    const Vector m = mean_of(ds, c);
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(m[j] - planted[c][j]) < 3 * 0.05 / std::sqrt(50.0));
  }
  CHECK(gen_source(3, 2, 2, 0.1, 7).size() == 6);
}

TEST_CASE("source means are separated and lie in the unit box") {
  const double spread = 0.4;
  const auto means = source_means(30, 3, spread, 4);
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (double v : means[a]) CHECK(std::abs(v) <= 1.0);
    for (std::size_t b = 0; b < a; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d2 += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
      CHECK(std::sqrt(d2) >= 0.5 * spread);
    }
  }
}

TEST_CASE("sample moments match the planted means and spread") {
  // Per coordinate the class mean has SE spread / sqrt(n); 4.5 SE over
  // 6 * 8 coordinates keeps the false-alarm rate negligible.
  const int per_class = 4000;
  const double spread = 0.3;
  const Dataset ds = gen_source(6, per_class, 8, spread, 21);
  const auto planted = source_means(6, 8, spread, 21);
  const double se = spread / std::sqrt(double(per_class));
  double var_sum = 0.0;
  for (int c = 0; c < 6; ++c) {
    const Vector m = mean_of(ds, c);
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(m[j] - planted[c][j]) < 4.5 * se);
  }
  for (const auto& s : ds.samples) {
    for (std::size_t j = 0; j < 8; ++j) var_sum += (s.x[j] - planted[s.label][j]) * (s.x[j] - planted[s.label][j]);
  }
  const double var = var_sum / (ds.size() * 8.0);
  CHECK(var == doctest::Approx(spread * spread).epsilon(0.02));
}

TEST_CASE("zero-noise planted classes reproduce the source centroid") {
  const Dataset src = gen_source(6, 50, 5, 0.2, 3);
  const std::vector<int> planted{4, 1};
  const TargetData t = gen_target(src, planted, 2, 30, 0.0, 8);
  CHECK(t.dataset.class_count == 4);
  CHECK(t.dataset.domain == Domain::Target);
  REQUIRE(t.planted.source_of.size() == 4);
  CHECK(t.planted.source_of[0] == 4);
  CHECK(t.planted.source_of[1] == 1);
  CHECK_FALSE(t.planted.source_of[2].has_value());
  CHECK_FALSE(t.planted.source_of[3].has_value());
  for (auto n : t.dataset.class_sizes()) CHECK(n == 30);
  for (int i = 0; i < 2; ++i) {
    const Vector a = mean_of(t.dataset, i), b = mean_of(src, planted[i]);
    for (std::size_t j = 0; j < 5; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("target noise shifts each planted class as a whole") {
  // The centroid offset is one N(0, noise^2 I) draw: E||z||^2 = d noise^2.
  const Dataset src = gen_source(4, 40, 8, 0.2, 5);
  const double noise = 0.5;
  const std::vector<int> planted{2};
  const int trials = 300;
  double sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    const TargetData td = gen_target(src, planted, 0, 20, noise, 1000 + t);
    const Vector a = mean_of(td.dataset, 0), b = mean_of(src, 2);
    for (std::size_t j = 0; j < 8; ++j) sq += (a[j] - b[j]) * (a[j] - b[j]);
  }
  const double expected = 8 * noise * noise;
  const double se = std::sqrt(2.0 * 8) * noise * noise / std::sqrt(double(trials));
  CHECK(std::abs(sq / trials - expected) < 4 * se);
}

TEST_CASE("novel classes are away from every source mean") {
  const Dataset src = gen_source(5, 40, 4, 0.3, 11);
  const TargetData t = gen_target(src, std::vector<int>{}, 3, 400, 0.0, 2);
  const auto src_means = class_means(src);
  for (int c = 0; c < 3; ++c) {
    const Vector m = mean_of(t.dataset, c);
    for (const auto& sm : src_means) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 4; ++j) d2 += (m[j] - sm[j]) * (m[j] - sm[j]);
      CHECK(std::sqrt(d2) > 0.1);
    }
  }
}

TEST_CASE("stratified split") {
  const Dataset ds = gen_source(3, 20, 2, 0.1, 1);
  const Split s = split(ds, 0.25, 4);
  for (auto n : s.test.class_sizes()) CHECK(n == 5);
  for (auto n : s.train.class_sizes()) CHECK(n == 15);
  std::vector<Vector> all, parts;
  for (const auto& x : ds.samples) all.push_back(x.x);
  for (const auto& x : s.train.samples) parts.push_back(x.x);
  for (const auto& x : s.test.samples) parts.push_back(x.x);
  std::sort(all.begin(), all.end());
  std::sort(parts.begin(), parts.end());
  CHECK(all == parts);
  CHECK(s.train == split(ds, 0.25, 4).train);

  Dataset tiny = ds;
  tiny.samples.resize(21);  // class 1 keeps a single sample
  CHECK_THROWS_AS(split(tiny, 0.5, 1), DataError);
}

TEST_CASE("csv round trip is exact") {
  Dataset ds = gen_source(3, 4, 3, 0.7, 2);
  ds.samples[0].x[1] = 1e-300;
  ds.samples[1].x[2] = -0.1;
  std::stringstream buf;
  write_csv(ds, buf);
  CHECK(read_csv(buf) == ds);
}

TEST_CASE("csv errors name the line") {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_csv(in);
  };
  CHECK_THROWS_WITH_AS(parse("source,2,2\n0,1.0\n"), doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_WITH_AS(parse("source,2,2\n0,1,2\n1,1,x\n"), doctest::Contains("line 3"), ParseError);
  CHECK_THROWS_AS(parse("source,2,2\n5,1,2\n"), ParseError);
  CHECK_THROWS_AS(parse("source,2,2\n"), DataError);
}

TEST_CASE("planted mapping csv") {
  PlantedMapping m{{3, std::nullopt, 0}};
  std::stringstream buf;
  write_planted_csv(m, buf);
  CHECK(read_planted_csv(buf) == m);
}
