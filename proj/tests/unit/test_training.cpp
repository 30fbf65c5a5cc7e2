#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "xmixup/errors.hpp"
#include "xmixup/training.hpp"

using namespace xmixup;

namespace {

TrainConfig quick(int iterations, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.lr_drop_at = iterations * 2 / 3;
  cfg.seed = seed;
  cfg.lr = 0.05;
  return cfg;
}

struct Task {
  Dataset src_all = gen_source(6, 100, 4, 0.05, 3);
  Split src = split(src_all, 0.3, 1);
  TargetData target = gen_target(src.test, std::vector<int>{0, 1}, 1, 20, 0.0, 4);
  Split tgt = split(target.dataset, 0.5, 2);
  PairingPlan plan{{{1, 0, 0, 0.9}, {1, 1, 1, 0.9}, {1, 2, 5, 0.1}}, 1, false};
};

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
  const auto x = param_blocks(a), y = param_blocks(b);
  double m = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    for (std::size_t i = 0; i < x[k].values.size(); ++i) m = std::max(m, std::abs(x[k].values[i] - y[k].values[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("pretraining separates well-spaced clusters") {
  Task t;
  const ModelParams p = pretrain(t.src.train, quick(1500), Architecture{{16, 8}});
  CHECK(p.label_count() == 6);
  CHECK(evaluate(p, t.src.test) >= 0.95);
}

TEST_CASE("fine-tuning is deterministic and traces every iteration") {
  Task t;
  const ModelParams pre = pretrain(t.src.train, quick(300), Architecture{{16, 8}});
  const TransferData data{t.tgt.train, t.tgt.test, t.src.train, &t.plan};
  for (const char* name : {"L2", "L2SP", "Mixup", "XMixup", "XMixupNoLabel", "SeqTrain", "CoTrain"}) {
    CAPTURE(name);
    const Strategy s = make_strategy(name, {{"midtune_iterations", 50}});
    const RunResult a = finetune(pre, data, s, quick(120, 5));
    const RunResult b = finetune(pre, data, s, quick(120, 5));
    CHECK(a.params == b.params);
    CHECK(a.loss_trace.size() == 120);
    CHECK(a.params.label_count() == 6);  // 3 target + 3 selected source classes
    CHECK(a.midtune_trace.size() == (std::string(name) == "SeqTrain" ? 50u : 0u));
    CHECK(strategy_name(s) == name);
  }
  CHECK_THROWS_AS(make_strategy("Nope"), ConfigError);
}

TEST_CASE("XMixup with lambda pinned near one tracks L2") {
  // Beta(2^40, 1) draws are 1 - O(1e-12); batches and head init are shared.
  Task t;
  const ModelParams pre = pretrain(t.src.train, quick(300), Architecture{{16, 8}});
  const TransferData data{t.tgt.train, t.tgt.test, t.src.train, &t.plan};
  const RunResult l2 = finetune(pre, data, strategy::L2{}, quick(200, 7));
  const RunResult xm = finetune(pre, data, strategy::XMixup{MixupConfig{std::ldexp(1.0, 40), 1.0, 0}}, quick(200, 7));
  CHECK(max_abs_diff(l2.params, xm.params) < 1e-6);
}

TEST_CASE("L2SP penalty and gradient") {
  const ModelParams anchor = init_model(3, std::vector<std::size_t>{4}, 2, 1);
  ModelParams p = init_model(3, std::vector<std::size_t>{4}, 2, 2);
  const double w = 0.7;
  double manual = 0.0;
  for (std::size_t i = 0; i < p.extractor[0].weights.size(); ++i) {
    const double d = p.extractor[0].weights.values()[i] - anchor.extractor[0].weights.values()[i];
    manual += d * d;
  }
  p.extractor[0].bias[1] = 0.5;
  manual += 0.25;
  ModelParams g = zeros_like(p);
  CHECK(l2sp_penalty(p, anchor, w, &g) == doctest::Approx(w * manual));
  CHECK(g.extractor[0].bias[1] == doctest::Approx(2 * w * 0.5));
  CHECK(g.head.weights.values()[0] == 0.0);
}

TEST_CASE("L2SP vanishes at the anchor and its gradient matches finite differences") {
  const ModelParams anchor = init_model(3, std::vector<std::size_t>{4, 3}, 2, 1);
  ModelParams g = zeros_like(anchor);
  CHECK(l2sp_penalty(anchor, anchor, 0.3, &g) == 0.0);
  ModelParams p = init_model(3, std::vector<std::size_t>{4, 3}, 2, 8);
  g = zeros_like(p);
  l2sp_penalty(p, anchor, 0.3, &g);
  auto blocks = param_blocks(p);
  const auto grads = param_blocks(g);
  const double h = 1e-5;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].values.size(); ++i) {
      const double keep = blocks[b].values[i];
      blocks[b].values[i] = keep + h;
      const double up = l2sp_penalty(p, anchor, 0.3, nullptr);
      blocks[b].values[i] = keep - h;
      const double down = l2sp_penalty(p, anchor, 0.3, nullptr);
      blocks[b].values[i] = keep;
      const double fd = (up - down) / (2 * h), a = grads[b].values[i];
      CHECK(std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-5}) < 1e-5);
    }
  }
}

namespace {

double extractor_max_diff(const ModelParams& a, const ModelParams& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.extractor.size(); ++k) {
    for (std::size_t i = 0; i < a.extractor[k].weights.size(); ++i) {
      m = std::max(m, std::abs(a.extractor[k].weights.values()[i] - b.extractor[k].weights.values()[i]));
    }
    for (std::size_t i = 0; i < a.extractor[k].bias.size(); ++i) {
      m = std::max(m, std::abs(a.extractor[k].bias[i] - b.extractor[k].bias[i]));
    }
  }
  return m;
}

}  // namespace

TEST_CASE("a heavy L2SP weight pins the extractor") {
  Task t;
  const ModelParams pre = pretrain(t.src.train, quick(300), Architecture{{16, 8}});
  const TransferData data{t.tgt.train, t.tgt.test, t.src.train, nullptr};
  TrainConfig cfg = quick(2000, 3);
  cfg.lr = 1e-5;  // keeps lr * 2e4 well inside the momentum-SGD stability bound
  cfg.weight_decay = 0.0;
  const RunResult pinned = finetune(pre, data, strategy::L2SP{1e4}, cfg);
  const RunResult free = finetune(pre, data, strategy::L2{}, cfg);
  CHECK(extractor_max_diff(pinned.params, pre) < 1e-3);
  CHECK(extractor_max_diff(free.params, pre) > extractor_max_diff(pinned.params, pre));
}

TEST_CASE("zero learning rate leaves the extractor untouched") {
  Task t;
  const ModelParams pre = pretrain(t.src.train, quick(100), Architecture{{16, 8}});
  const TransferData data{t.tgt.train, t.tgt.test, t.src.train, nullptr};
  TrainConfig cfg = quick(50, 2);
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  const RunResult r = finetune(pre, data, strategy::L2{}, cfg);
  CHECK(r.params.extractor == pre.extractor);
  CHECK(r.params.head == init_head(pre.feature_dim(), 3, 2));
}

TEST_CASE("zero pretraining iterations return the initialization") {
  Task t;
  TrainConfig cfg = quick(0, 6);
  cfg.lr_drop_at = 0;
  const std::vector<std::size_t> hidden{16, 8};
  CHECK(pretrain(t.src.train, cfg, Architecture{hidden}) == init_model(4, hidden, 6, derive_seed(6, 0)));
  CHECK(pretrain(t.src.train, quick(20, 6), Architecture{hidden}) == pretrain(t.src.train, quick(20, 6), Architecture{hidden}));
}

TEST_CASE("unit lambda reduces the mixed loss to the plain loss") {
  const ModelParams p = init_model(3, std::vector<std::size_t>{5}, 4, 2);
  Rng rng(4);
  std::vector<Example> plain, mixed;
  for (int i = 0; i < 6; ++i) {
    Vector xt(3), xs(3);
    for (double& v : xt) v = rng.normal();
    for (double& v : xs) v = rng.normal();
    const auto yt = SoftLabel::one_hot(4, i % 2), ys = SoftLabel::one_hot(4, 2 + i % 2);
    plain.push_back({xt, yt, {}});
    const MixedExample m = mix(xt, yt, xs, ys, 1.0);
    mixed.push_back({m.x, m.y, {}});
  }
  CHECK(batch_loss(p, mixed) == batch_loss(p, plain));
}

TEST_CASE("random head scores chance on label-independent data") {
  // inputs carry no label information, so accuracy is Binomial(N, 1/n) / N
  const int n = 5, N = 5000;
  Dataset test{Domain::Target, n, 6, {}};
  Rng rng(12);
  for (int i = 0; i < N; ++i) {
    Vector x(6);
    for (double& v : x) v = rng.normal();
    test.samples.push_back({x, i % n, Domain::Target});
  }
  const ModelParams p = init_model(6, std::vector<std::size_t>{8}, n, 13);
  const double p0 = 1.0 / n;
  CHECK(std::abs(evaluate(p, test) - p0) < 3 * std::sqrt(p0 * (1 - p0) / N));
}

TEST_CASE("evaluation invariances") {
  const Dataset ds = gen_source(4, 30, 3, 0.4, 2);
  ModelParams p = init_model(3, std::vector<std::size_t>{6}, 4, 5);
  const double base = evaluate(p, ds);

  ModelParams shifted = p;
  for (double& b : shifted.head.bias) b += 7.5;
  CHECK(evaluate(shifted, ds) == base);

  // extra source logits never count, however large
  ModelParams padded = p;
  Matrix w(7, 6);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 6; ++c) w(r, c) = r < 4 ? p.head.weights(r, c) : 50.0;
  }
  padded.head.weights = w;
  padded.head.bias.resize(7, 100.0);
  CHECK(evaluate(padded, ds) == base);

  Dataset one{Domain::Target, 4, 3, {ds.samples[0]}};
  const auto logits = forward(p, one.samples[0].x).logits;
  one.samples[0].label = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  CHECK(evaluate(p, one) == 1.0);
}

TEST_CASE("strategies needing a plan refuse to run without one") {
  Task t;
  const ModelParams pre = pretrain(t.src.train, quick(50), Architecture{{8}});
  const TransferData data{t.tgt.train, t.tgt.test, t.src.train, nullptr};
  CHECK_THROWS_AS(finetune(pre, data, strategy::XMixup{}, quick(10)), ConfigError);
  CHECK_NOTHROW(finetune(pre, data, strategy::MixupInDomain{}, quick(10)));
}

TEST_CASE("divergence is reported") {
  Task t;
  const ModelParams pre = pretrain(t.src.train, quick(50), Architecture{{8}});
  const TransferData data{t.tgt.train, t.tgt.test, t.src.train, nullptr};
  TrainConfig cfg = quick(200);
  cfg.lr = 1e12;
  CHECK_THROWS_WITH_AS(finetune(pre, data, strategy::L2{}, cfg), doctest::Contains("iteration"), NumericError);
}

TEST_CASE("evaluate ignores logits past the target classes") {
  ModelParams p = init_model(2, std::vector<std::size_t>{2}, 3, 1);
  p.extractor[0].weights = Matrix(2, 2);
  p.extractor[0].weights(0, 0) = p.extractor[0].weights(1, 1) = 1.0;
  p.head.weights = Matrix(3, 2);
  p.head.weights(0, 0) = p.head.weights(1, 1) = 1.0;
  p.head.bias = {0.0, 0.0, 100.0};  // padding logit always largest
  Dataset test{Domain::Target, 2, 2, {{{1.0, 0.0}, 0, Domain::Target}, {{0.0, 1.0}, 1, Domain::Target}, {{0.0, 0.0}, 1, Domain::Target}}};
  // the last sample ties at zero and resolves to class 0
  CHECK(evaluate(p, test) == doctest::Approx(2.0 / 3.0));
  test.samples.clear();
  CHECK_THROWS_AS(evaluate(p, test), ArgumentError);
}

TEST_CASE("windowed loss") {
  const std::vector<double> trace{1, 2, 3, 4, 5};
  CHECK(windowed_loss(trace, 2) == std::vector<double>{1.5, 3.5, 5});
}
