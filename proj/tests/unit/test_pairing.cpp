#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "xmixup/errors.hpp"
#include "xmixup/pairing.hpp"

using namespace xmixup;

namespace {

SimilarityMatrix sims_of(std::vector<std::vector<double>> rows) {
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return SimilarityMatrix::from_values(m);
}

SimilarityMatrix random_sims(std::size_t n, std::size_t m, Rng& rng) {
  Matrix s(n, m);
  for (double& v : s.values()) v = rng.uniform(-1.0, 1.0);
  return SimilarityMatrix::from_values(s);
}

}  // namespace

TEST_CASE("greedy is not optimal on the 2x2 counterexample") {
  const auto s = sims_of({{0.9, 0.85}, {0.8, 0.1}});
  const Assignment g = greedy_pair(s), o = optimal_pair(s);
  CHECK(g == Assignment{{0, 0}, {1, 1}});
  CHECK(o == Assignment{{0, 1}, {1, 0}});
  CHECK(total_similarity(s, g) == doctest::Approx(1.0));
  CHECK(total_similarity(s, o) == doctest::Approx(1.65));
}

TEST_CASE("greedy never beats the exhaustive optimum") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(5), m = n + rng.index(3);
    const auto s = random_sims(n, m, rng);
    const Assignment g = greedy_pair(s);
    CHECK(g.size() == n);
    std::set<int> used;
    for (auto [tg, src] : g) used.insert(src);
    CHECK(used.size() == n);
    CHECK(total_similarity(s, g) <= total_similarity(s, optimal_pair(s)) + 1e-12);
  }
}

TEST_CASE("ties go to the smallest target then source") {
  const auto s = sims_of({{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}});
  CHECK(greedy_pair(s) == Assignment{{0, 0}, {1, 1}});
}

TEST_CASE("pairing argument checks") {
  Rng rng(1);
  CHECK_THROWS_AS(greedy_pair(random_sims(3, 2, rng)), ArgumentError);
  CHECK_THROWS_AS(optimal_pair(random_sims(9, 9, rng)), SizeError);
}

TEST_CASE("similarity is cosine between centroids") {
  CentroidBank src, tgt;
  src.centroids = {{0, {1.0, 0.0}}, {1, {1.0, 1.0}}};
  tgt.centroids = {{0, {0.0, 2.0}}};
  const auto s = similarity(src, tgt);
  CHECK(s.sims(0, 0) == doctest::Approx(0.0));
  CHECK(s.sims(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
  tgt.centroids[0] = {0.0, 0.0};
  CHECK_THROWS_WITH_AS(similarity(src, tgt), doctest::Contains("0"), NumericError);
}

TEST_CASE("centroids are mean extracted features") {
  const Dataset ds = gen_source(3, 10, 4, 0.5, 2);
  const ModelParams p = init_model(4, std::vector<std::size_t>{5}, 3, 3);
  const CentroidBank bank = compute_centroids(ds, p);
  Vector manual(5, 0.0);
  for (const auto& s : ds.samples) {
    if (s.label != 2) continue;
    const Vector f = extract_features(p, s.x);
    for (std::size_t j = 0; j < 5; ++j) manual[j] += f[j] / 10.0;
  }
  for (std::size_t j = 0; j < 5; ++j) CHECK(bank.centroids.at(2)[j] == doctest::Approx(manual[j]).epsilon(1e-12));
  CHECK(bank.counts.at(2) == 10);
}

TEST_CASE("threshold expansion") {
  const auto s = sims_of({{0.9, 0.1, 0.5, 0.3}, {0.2, 0.8, 0.4, 0.6}});
  const std::map<int, std::size_t> sizes{{0, 10}, {1, 10}, {2, 10}, {3, 10}};
  const PairingPlan plan = expand_until_threshold(s, sizes, 30);
  CHECK(plan.rounds == 2);
  CHECK_FALSE(plan.exhausted);
  CHECK(plan.selected_sources() == std::vector<int>{0, 1, 2, 3});
  CHECK(plan.sources_for(0) == std::vector<int>{0, 2});
  CHECK(plan.sources_for(1) == std::vector<int>{1, 3});

  CHECK(expand_until_threshold(s, sizes, 20).rounds == 1);
  const PairingPlan all = expand_until_threshold(s, sizes, 1000);
  CHECK(all.exhausted);
  CHECK(all.selected_sources().size() == 4);
}

TEST_CASE("a short final round pairs what it can") {
  const auto s = sims_of({{0.9, 0.1, 0.5}, {0.2, 0.8, 0.7}});
  const std::map<int, std::size_t> sizes{{0, 5}, {1, 5}, {2, 5}};
  const PairingPlan plan = expand_until_threshold(s, sizes, 100);
  CHECK(plan.rounds == 2);
  CHECK(plan.exhausted);
  CHECK(plan.sources_for(1) == std::vector<int>{1, 2});
  CHECK(plan.sources_for(0) == std::vector<int>{0});
}

TEST_CASE("randomized plan keeps the round shape") {
  Rng rng(3);
  const auto s = random_sims(3, 12, rng);
  std::map<int, std::size_t> sizes;
  for (int c = 0; c < 12; ++c) sizes[c] = 10;
  const PairingPlan plan = expand_until_threshold(s, sizes, 60);
  const PairingPlan r = randomize_plan(plan, s, 4);
  CHECK(r.rounds == plan.rounds);
  CHECK(r.entries.size() == plan.entries.size());
  CHECK(r.selected_sources().size() == plan.entries.size());
  CHECK(r == randomize_plan(plan, s, 4));
  CHECK_FALSE(r == randomize_plan(plan, s, 5));
}

TEST_CASE("label space") {
  const LabelSpace ls(3, {7, 2});
  CHECK(ls.size() == 5);
  CHECK(ls.target_index(1) == 1);
  CHECK(ls.source_index(2) == 3);
  CHECK(ls.source_index(7) == 4);
  CHECK_THROWS_AS(ls.source_index(5), LookupError);
  CHECK(ls.source_range().begin == 3);
  CHECK(ls.source_range().end == 5);
}

TEST_CASE("plan csv round trip") {
  const auto s = sims_of({{0.9, 0.1, 0.5, 0.3}, {0.2, 0.8, 0.4, 0.6}});
  const PairingPlan plan = expand_until_threshold(s, {{0, 10}, {1, 10}, {2, 10}, {3, 10}}, 30);
  std::stringstream buf;
  write_plan_csv(plan, buf);
  const PairingPlan back = read_plan_csv(buf);
  CHECK(back.entries == plan.entries);
  CHECK(back.rounds == plan.rounds);
}

TEST_CASE("centroid arithmetic") {
  // identity extractor on the positive quadrant
  ModelParams id;
  Layer l{Matrix(2, 2), {0.0, 0.0}};
  l.weights(0, 0) = l.weights(1, 1) = 1.0;
  id.extractor.push_back(l);
  id.head = Layer{Matrix(1, 2), {0.0}};
  Dataset ds{Domain::Target, 2, 2, {{{0.0, 0.0}, 0, Domain::Target}, {{2.0, 2.0}, 0, Domain::Target},
                                    {{3.0, 0.5}, 1, Domain::Target}}};
  const CentroidBank bank = compute_centroids(ds, id);
  CHECK(bank.centroids.at(0) == Vector{1.0, 1.0});
  CHECK(bank.centroids.at(1) == Vector{3.0, 0.5});

  // reversed accumulation order agrees to rounding
  const Dataset big = gen_source(3, 200, 4, 0.5, 6);
  const ModelParams p = init_model(4, std::vector<std::size_t>{6}, 3, 1);
  const CentroidBank fwd = compute_centroids(big, p);
  Vector rev(6, 0.0);
  for (auto it = big.samples.rbegin(); it != big.samples.rend(); ++it) {
    if (it->label != 1) continue;
    const Vector f = extract_features(p, it->x);
    for (std::size_t j = 0; j < 6; ++j) rev[j] += f[j];
  }
  for (std::size_t j = 0; j < 6; ++j) CHECK(fwd.centroids.at(1)[j] == doctest::Approx(rev[j] / 200).epsilon(1e-12));
  CHECK_THROWS_AS(compute_centroids(select_classes(big, std::vector<int>{0, 2}), p), DataError);
}

TEST_CASE("small pairing examples") {
  CentroidBank a, b;
  a.centroids = {{0, {0.3, -2.0}}};
  b.centroids = {{0, {0.3, -2.0}}};
  CHECK(similarity(a, b).sims(0, 0) == doctest::Approx(1.0));
  CHECK(greedy_pair(sims_of({{0.9, 0.1}, {0.2, 0.8}})) == Assignment{{0, 0}, {1, 1}});
  CHECK(optimal_pair(sims_of({{0.9, 0.1}, {0.2, 0.8}})) == Assignment{{0, 0}, {1, 1}});
  CHECK(greedy_pair(sims_of({{0.2, 0.7, 0.5}})) == Assignment{{0, 1}});
  const PairingPlan zero = expand_until_threshold(sims_of({{0.9, 0.1, 0.5}}), {{0, 5}, {1, 5}, {2, 5}}, 0);
  CHECK(zero.rounds == 1);
  CHECK(zero.entries.size() == 1);
}
