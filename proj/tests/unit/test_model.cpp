#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "xmixup/errors.hpp"
#include "xmixup/model.hpp"

using namespace xmixup;

namespace {

std::vector<Example> random_batch(std::size_t n, std::size_t dim, std::size_t labels, Rng& rng) {
  std::vector<Example> batch;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.x.resize(dim);
    for (double& v : ex.x) v = rng.normal();
    // soft label over a random active window
    const std::size_t begin = rng.index(labels - 1);
    ex.active = {begin, labels};
    ex.y.p.assign(labels, 0.0);
    double total = 0.0;
    for (std::size_t k = begin; k < labels; ++k) total += ex.y.p[k] = rng.uniform();
    for (double& v : ex.y.p) v /= total;
    batch.push_back(std::move(ex));
  }
  return batch;
}

}  // namespace

TEST_CASE("softmax cross-entropy values") {
  const Vector logits{0.0, 0.0};
  auto r = softmax_cross_entropy(logits, SoftLabel::one_hot(2, 1));
  CHECK(r.loss == doctest::Approx(std::log(2.0)));
  CHECK(r.dlogits[0] == doctest::Approx(0.5));
  CHECK(r.dlogits[1] == doctest::Approx(-0.5));

  const Vector big{1000.0, 0.0, -1000.0};
  r = softmax_cross_entropy(big, SoftLabel::one_hot(3, 0));
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss == doctest::Approx(0.0));

  // only logits 1..2 compete; logit 0 gets no gradient
  r = softmax_cross_entropy(Vector{5.0, 1.0, 1.0}, SoftLabel::one_hot(3, 2), {1, 3});
  CHECK(r.loss == doctest::Approx(std::log(2.0)));
  CHECK(r.dlogits[0] == 0.0);
  CHECK_THROWS_AS(softmax_cross_entropy(Vector{1, 2, 3}, SoftLabel::one_hot(3, 0), {1, 3}), ArgumentError);
}

TEST_CASE("forward pass by hand") {
  ModelParams p;
  Layer l1{Matrix(2, 2), {0.5, -1.0}};
  l1.weights(0, 0) = 1.0;
  l1.weights(0, 1) = 2.0;
  l1.weights(1, 0) = -1.0;
  l1.weights(1, 1) = 1.0;
  p.extractor.push_back(l1);
  p.head = Layer{Matrix(1, 2, 1.0), {0.25}};
  const auto r = forward(p, Vector{1.0, 1.0});
  // h = relu([3.5, -1]) = [3.5, 0]
  CHECK(r.features == Vector{3.5, 0.0});
  CHECK(r.logits[0] == doctest::Approx(3.75));
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t dim = 1 + rng.index(8), labels = 2 + rng.index(7);
    std::vector<std::size_t> hidden(1 + rng.index(3));
    for (auto& w : hidden) w = 1 + rng.index(8);
    ModelParams params = init_model(dim, hidden, labels, rng.next());
    // nonzero biases keep pre-activations off the ReLU kink at 0
    for (auto& l : params.extractor) {
      for (double& v : l.bias) v = rng.uniform(-0.5, 0.5);
    }
    const auto batch = random_batch(1 + rng.index(4), dim, labels, rng);
    const auto analytic = loss_and_grad(params, batch);
    ModelParams probe = params;
    auto blocks = param_blocks(probe);
    const auto grads = param_blocks(analytic.grads);
    const double h = 1e-5;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (std::size_t i = 0; i < blocks[b].values.size(); ++i) {
        const double keep = blocks[b].values[i];
        blocks[b].values[i] = keep + h;
        const double up = batch_loss(probe, batch);
        blocks[b].values[i] = keep - h;
        const double down = batch_loss(probe, batch);
        blocks[b].values[i] = keep;
        const double fd = (up - down) / (2 * h);
        const double a = grads[b].values[i];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-5});
        CHECK(rel < 1e-5);
      }
    }
  }
}

TEST_CASE("non-finite input is rejected") {
  const ModelParams p = init_model(3, std::vector<std::size_t>{4}, 2, 1);
  std::vector<Example> batch{{Vector{1.0, std::numeric_limits<double>::quiet_NaN(), 0.0}, SoftLabel::one_hot(2, 0), {}}};
  CHECK_THROWS_AS(loss_and_grad(p, batch), NumericError);
}

namespace {

// 0.5 x^T A x - b^T x with x stored as a 1x2 head; extractor unused by sgd.
ModelParams quadratic_params(double x0, double x1) {
  ModelParams p;
  p.head = Layer{Matrix(1, 2), {0.0}};
  p.head.weights(0, 0) = x0;
  p.head.weights(0, 1) = x1;
  return p;
}

}  // namespace

TEST_CASE("momentum sgd converges on a quadratic") {
  ModelParams x = quadratic_params(0.0, 0.0);
  ModelParams v = zeros_like(x);
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  cfg.iterations = 2000;
  cfg.lr_drop_at = 2000;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double a = x.head.weights(0, 0), b = x.head.weights(0, 1);
    ModelParams g = quadratic_params(3 * a + b - 1, a + 2 * b - 1);
    sgd_step(x, g, v, cfg, it);
  }
  CHECK(x.head.weights(0, 0) == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(x.head.weights(0, 1) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("learning rate drop and weight decay") {
  TrainConfig cfg;
  cfg.lr = 0.5;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.iterations = 10;
  cfg.lr_drop_at = 4;
  cfg.lr_drop_factor = 0.1;
  CHECK(effective_lr(cfg, 3) == 0.5);
  CHECK(effective_lr(cfg, 4) == 0.5 * 0.1);

  ModelParams x = quadratic_params(0.0, 0.0), v = zeros_like(x);
  const ModelParams g = quadratic_params(1.0, 0.0);
  sgd_step(x, g, v, cfg, 3);
  const double before = -x.head.weights(0, 0);
  sgd_step(x, g, v, cfg, 4);
  const double after = -x.head.weights(0, 0) - before;
  CHECK(after / before == doctest::Approx(0.1).epsilon(1e-12));

  cfg.weight_decay = 0.2;
  ModelParams w = quadratic_params(2.0, -1.0), v2 = zeros_like(w);
  w.head.bias[0] = 3.0;
  sgd_step(w, zeros_like(w), v2, cfg, 0);
  CHECK(w.head.weights(0, 0) == doctest::Approx(2.0 * (1 - 0.5 * 0.2)));
  CHECK(w.head.bias[0] == 3.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const ModelParams p = init_model(5, std::vector<std::size_t>{7, 3}, 4, 12);
  const auto path = std::filesystem::temp_directory_path() / "xmixup_test_model.ckpt";
  save_checkpoint(p, path);
  CHECK(load_checkpoint(path) == p);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_drop_at = cfg.iterations + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(init_model(3, std::vector<std::size_t>{}, 2, 1), ArgumentError);
}
