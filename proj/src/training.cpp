#include "xmixup/training.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "xmixup/errors.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

namespace {

// Stream ids for derive_seed; fixed so that strategies sharing a seed draw
// identical target batches and head initialisations.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kPretrainBatchStream = 1;
constexpr std::uint64_t kHeadStream = 10;
constexpr std::uint64_t kTargetBatchStream = 11;
constexpr std::uint64_t kAugmentStream = 12;
constexpr std::uint64_t kMidtuneStream = 13;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const MixupConfig* mixup_of(const Strategy& s) {
  return std::visit(overloaded{
                        [](const strategy::MixupInDomain& m) -> const MixupConfig* { return &m.mixup; },
                        [](const strategy::XMixup& m) -> const MixupConfig* { return &m.mixup; },
                        [](const strategy::XMixupNoLabel& m) -> const MixupConfig* { return &m.mixup; },
                        [](const auto&) -> const MixupConfig* { return nullptr; },
                    },
                    s);
}

Example one_hot_example(const Sample& s, std::size_t labels, std::size_t index,
                        LogitRange active = {}) {
  return Example{s.x, SoftLabel::one_hot(labels, index), active};
}

Example from_mixed(MixedExample m) { return Example{std::move(m.x), std::move(m.y), {}}; }

// One SGD iteration; returns the objective value.
double train_step(ModelParams& params, ModelParams& velocity, std::span<const Example> batch,
                  const TrainConfig& cfg, int iter, const ModelParams* anchor = nullptr,
                  double l2sp_weight = 0.0) {
  LossAndGrad lg;
  try {
    lg = loss_and_grad(params, batch);
    if (anchor) lg.loss += l2sp_penalty(params, *anchor, l2sp_weight, &lg.grads);
    if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss");
    sgd_step(params, lg.grads, velocity, cfg, iter);
  } catch (const NumericError& e) {
    throw NumericError("training diverged at iteration " + std::to_string(iter) + ": " + e.what());
  }
  return lg.loss;
}

TrainConfig midtune_config(const TrainConfig& cfg, int iterations) {
  TrainConfig mid = cfg;
  mid.iterations = iterations;
  mid.lr_drop_at = cfg.iterations > 0
                       ? static_cast<int>(std::llround(static_cast<double>(iterations) * cfg.lr_drop_at /
                                                       static_cast<double>(cfg.iterations)))
                       : iterations;
  mid.lr_drop_at = std::clamp(mid.lr_drop_at, 0, iterations);
  return mid;
}

}  // namespace

std::string strategy_name(const Strategy& s) {
  return std::visit(overloaded{
                        [](const strategy::L2&) { return std::string("L2"); },
                        [](const strategy::L2SP&) { return std::string("L2SP"); },
                        [](const strategy::MixupInDomain&) { return std::string("Mixup"); },
                        [](const strategy::XMixup&) { return std::string("XMixup"); },
                        [](const strategy::XMixupNoLabel&) { return std::string("XMixupNoLabel"); },
                        [](const strategy::SeqTrain&) { return std::string("SeqTrain"); },
                        [](const strategy::CoTrain&) { return std::string("CoTrain"); },
                    },
                    s);
}

Strategy make_strategy(std::string_view name, const nlohmann::json& params) {
  const nlohmann::json p = params.is_object() ? params : nlohmann::json::object();
  auto mixup = [&] {
    MixupConfig m;
    m.alpha = p.value("alpha", m.alpha);
    m.beta = p.value("beta", m.beta);
    m.seed = p.value("mixup_seed", m.seed);
    m.validate();
    return m;
  };
  if (name == "L2") return strategy::L2{};
  if (name == "L2SP") {
    strategy::L2SP s;
    s.weight = p.value("l2sp_weight", s.weight);
    if (!(s.weight >= 0.0)) throw ConfigError("L2SP weight must be >= 0");
    return s;
  }
  if (name == "Mixup") return strategy::MixupInDomain{mixup()};
  if (name == "XMixup") return strategy::XMixup{mixup()};
  if (name == "XMixupNoLabel") return strategy::XMixupNoLabel{mixup()};
  if (name == "SeqTrain") {
    strategy::SeqTrain s;
    s.midtune_iterations = p.value("midtune_iterations", s.midtune_iterations);
    if (s.midtune_iterations < 0) throw ConfigError("SeqTrain midtune_iterations must be >= 0");
    return s;
  }
  if (name == "CoTrain") {
    strategy::CoTrain s;
    s.target_fraction = p.value("cotrain_target_fraction", s.target_fraction);
    if (!(s.target_fraction > 0.0 && s.target_fraction < 1.0)) {
      throw ConfigError("CoTrain target fraction must lie in (0, 1)");
    }
    return s;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

bool needs_plan(const Strategy& s) {
  return std::holds_alternative<strategy::XMixup>(s) || std::holds_alternative<strategy::XMixupNoLabel>(s) ||
         std::holds_alternative<strategy::SeqTrain>(s) || std::holds_alternative<strategy::CoTrain>(s);
}

nlohmann::json to_json(const Strategy& s) {
  nlohmann::json j{{"name", strategy_name(s)}};
  std::visit(overloaded{
                 [&](const strategy::L2SP& v) { j["l2sp_weight"] = v.weight; },
                 [&](const strategy::SeqTrain& v) { j["midtune_iterations"] = v.midtune_iterations; },
                 [&](const strategy::CoTrain& v) { j["cotrain_target_fraction"] = v.target_fraction; },
                 [&](const strategy::L2&) {},
                 [&](const auto& v) {
                   j["alpha"] = v.mixup.alpha;
                   j["beta"] = v.mixup.beta;
                   j["mixup_seed"] = v.mixup.seed;
                 },
             },
             s);
  return j;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"iterations", cfg.iterations},
          {"lr_drop_at", cfg.lr_drop_at},
          {"lr_drop_factor", cfg.lr_drop_factor},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  try {
    base.lr = j.value("lr", base.lr);
    base.momentum = j.value("momentum", base.momentum);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.iterations = j.value("iterations", base.iterations);
    base.lr_drop_at = j.value("lr_drop_at", base.lr_drop_at);
    base.lr_drop_factor = j.value("lr_drop_factor", base.lr_drop_factor);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.seed = j.value("seed", base.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  base.validate();
  return base;
}

std::vector<double> windowed_loss(const std::vector<double>& trace, std::size_t window) {
  std::vector<double> out;
  for (std::size_t start = 0; start < trace.size(); start += window) {
    const std::size_t end = std::min(trace.size(), start + window);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) s += trace[i];
    out.push_back(s / static_cast<double>(end - start));
  }
  return out;
}

nlohmann::json to_json(const RunResult& result) {
  nlohmann::json j;
  j["config"] = result.config;
  j["seed"] = result.seed;
  j["accuracy"] = result.accuracy;
  j["loss_per_100"] = windowed_loss(result.loss_trace);
  if (!result.midtune_trace.empty()) j["midtune_loss_per_100"] = windowed_loss(result.midtune_trace);
  return j;
}

ModelParams pretrain(const Dataset& src_train, const TrainConfig& cfg, const Architecture& arch) {
  cfg.validate();
  src_train.validate();
  if (src_train.class_count < 2) throw ArgumentError("pretrain: source needs at least 2 classes");
  if (src_train.empty()) throw DataError("pretrain: empty source dataset");

  const auto labels = static_cast<std::size_t>(src_train.class_count);
  ModelParams params = init_model(src_train.dim, arch.hidden, labels, derive_seed(cfg.seed, kInitStream));
  ModelParams velocity = zeros_like(params);
  Rng rng(derive_seed(cfg.seed, kPretrainBatchStream));
  std::vector<Example> batch;
  for (int it = 0; it < cfg.iterations; ++it) {
    batch.clear();
    for (std::size_t i : draw_indices(src_train, cfg.batch_size, rng)) {
      const Sample& s = src_train.samples[i];
      batch.push_back(one_hot_example(s, labels, static_cast<std::size_t>(s.label)));
    }
    train_step(params, velocity, batch, cfg, it);
  }
  return params;
}

Layer init_head(std::size_t features, std::size_t labels, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kHeadStream));
  return init_layer(features, labels, rng);
}

double l2sp_penalty(const ModelParams& params, const ModelParams& anchor, double weight,
                    ModelParams* grads) {
  if (params.extractor.size() != anchor.extractor.size()) {
    throw ArgumentError("l2sp_penalty: extractor depth differs from anchor");
  }
  double penalty = 0.0;
  auto accumulate = [&](std::span<const double> w, std::span<const double> w0, std::span<double> g) {
    if (w.size() != w0.size()) throw ArgumentError("l2sp_penalty: shape differs from anchor");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - w0[i];
      penalty += d * d;
      if (!g.empty()) g[i] += 2.0 * weight * d;
    }
  };
  for (std::size_t k = 0; k < params.extractor.size(); ++k) {
    const Layer& l = params.extractor[k];
    const Layer& a = anchor.extractor[k];
    accumulate(l.weights.values(), a.weights.values(),
               grads ? grads->extractor[k].weights.values() : std::span<double>{});
    accumulate(l.bias, a.bias, grads ? std::span<double>(grads->extractor[k].bias) : std::span<double>{});
  }
  return weight * penalty;
}

RunResult finetune(const ModelParams& pretrained, const TransferData& data, const Strategy& strat,
                   const TrainConfig& cfg) {
  cfg.validate();
  pretrained.validate();
  data.target_train.validate();
  if (data.target_train.empty()) throw DataError("finetune: empty target training set");
  if (needs_plan(strat) && data.plan == nullptr) {
    throw ConfigError("finetune: strategy " + strategy_name(strat) + " needs a pairing plan");
  }
  const int n = data.target_train.class_count;
  if (data.plan) {
    for (int t = 0; t < n; ++t) {
      if (data.plan->sources_for(t).empty()) {
        throw ConfigError("finetune: pairing plan does not cover target class " + std::to_string(t));
      }
    }
  }
  const LabelSpace labels = data.plan ? LabelSpace::from_plan(*data.plan, n) : LabelSpace(n, {});
  const std::size_t L = labels.size();

  ModelParams params = pretrained;
  params.head = init_head(pretrained.feature_dim(), L, cfg.seed);
  ModelParams velocity = zeros_like(params);

  Rng sample_rng(derive_seed(cfg.seed, kTargetBatchStream));
  const MixupConfig* mixup = mixup_of(strat);
  Rng aug_rng(derive_seed(derive_seed(cfg.seed, kAugmentStream), mixup ? mixup->seed : 0));

  std::optional<SourcePool> pool;
  Dataset aux;
  if (data.plan) {
    pool.emplace(data.source);
    aux = select_classes(data.source, data.plan->selected_sources());
    if (aux.empty()) throw DataError("finetune: no source samples for the selected auxiliary classes");
  }

  RunResult result;
  result.seed = cfg.seed;
  result.config = {{"strategy", to_json(strat)},
                   {"train", to_json(cfg)},
                   {"target_classes", n},
                   {"label_space", L},
                   {"auxiliary_classes", labels.source_classes()}};

  auto target_example = [&](const Sample& s) {
    return one_hot_example(s, L, labels.target_index(s.label));
  };
  auto source_example = [&](const Sample& s, LogitRange active) {
    return one_hot_example(s, L, labels.source_index(s.label), active);
  };

  if (const auto* seq = std::get_if<strategy::SeqTrain>(&strat)) {
    const TrainConfig mid = midtune_config(cfg, seq->midtune_iterations);
    Rng mid_rng(derive_seed(cfg.seed, kMidtuneStream));
    std::vector<Example> batch;
    for (int it = 0; it < mid.iterations; ++it) {
      batch.clear();
      for (std::size_t i : draw_indices(aux, cfg.batch_size, mid_rng)) {
        batch.push_back(source_example(aux.samples[i], {}));
      }
      result.midtune_trace.push_back(train_step(params, velocity, batch, mid, it));
    }
    velocity = zeros_like(params);
  }

  const ModelParams* anchor = nullptr;
  double l2sp_weight = 0.0;
  if (const auto* sp = std::get_if<strategy::L2SP>(&strat)) {
    anchor = &pretrained;
    l2sp_weight = sp->weight;
  }

  std::vector<Example> batch;
  batch.reserve(cfg.batch_size);
  for (int it = 0; it < cfg.iterations; ++it) {
    batch.clear();
    if (const auto* co = std::get_if<strategy::CoTrain>(&strat)) {
      auto n_target = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.batch_size) * co->target_fraction));
      n_target = std::clamp<std::size_t>(n_target, 1, cfg.batch_size);
      for (std::size_t i : draw_indices(data.target_train, n_target, sample_rng)) {
        auto ex = target_example(data.target_train.samples[i]);
        ex.active = labels.target_range();
        batch.push_back(std::move(ex));
      }
      for (std::size_t i : draw_indices(aux, cfg.batch_size - n_target, aug_rng)) {
        batch.push_back(source_example(aux.samples[i], labels.source_range()));
      }
    } else {
      for (std::size_t i : draw_indices(data.target_train, cfg.batch_size, sample_rng)) {
        const Sample& t = data.target_train.samples[i];
        std::visit(overloaded{
                       [&](const strategy::XMixup& s) {
                         batch.push_back(from_mixed(cross_domain_mix(t, *data.plan, *pool, labels, s.mixup, aug_rng)));
                       },
                       [&](const strategy::XMixupNoLabel& s) {
                         batch.push_back(
                             from_mixed(cross_domain_mix(t, *data.plan, *pool, labels, s.mixup, aug_rng, false)));
                       },
                       [&](const strategy::MixupInDomain& s) {
                         const Sample& other = data.target_train.samples[aug_rng.index(data.target_train.size())];
                         const double lambda = sample_beta(s.mixup, aug_rng);
                         batch.push_back(from_mixed(mix(t.x, SoftLabel::one_hot(L, labels.target_index(t.label)),
                                                        other.x, SoftLabel::one_hot(L, labels.target_index(other.label)),
                                                        lambda)));
                       },
                       [&](const auto&) { batch.push_back(target_example(t)); },
                   },
                   strat);
      }
    }
    result.loss_trace.push_back(train_step(params, velocity, batch, cfg, it, anchor, l2sp_weight));
  }

  result.accuracy = data.target_test.empty() ? 0.0 : evaluate(params, data.target_test);
  result.params = std::move(params);
  return result;
}

double evaluate(const ModelParams& params, const Dataset& test) {
  if (test.empty()) throw ArgumentError("evaluate: empty test set");
  const auto n = static_cast<std::size_t>(test.class_count);
  if (params.label_count() < n) throw ArgumentError("evaluate: head has fewer logits than target classes");
  std::size_t correct = 0;
  for (const auto& s : test.samples) {
    const Vector logits = forward(params, s.x).logits;
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (logits[k] > logits[best]) best = k;
    }
    if (static_cast<int>(best) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace xmixup
