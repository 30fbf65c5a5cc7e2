#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmixup/dataset.hpp"
#include "xmixup/mixup.hpp"
#include "xmixup/model.hpp"
#include "xmixup/pairing.hpp"

namespace xmixup {

namespace strategy {

/// Target-only fine-tuning with weight decay.
struct L2 {};

/// Adds weight * ||extractor - pretrained extractor||^2 to the loss.
struct L2SP {
  double weight = 0.01;
};

/// Vanilla mixup between two target samples.
struct MixupInDomain {
  MixupConfig mixup;
};

/// Cross-domain mixup with paired auxiliary source samples.
struct XMixup {
  MixupConfig mixup;
};

/// Cross-domain input mixing, target label only.
struct XMixupNoLabel {
  MixupConfig mixup;
};

/// Mid-tune on the auxiliary source samples, then L2 on the target.
struct SeqTrain {
  int midtune_iterations = 1500;
};

/// Joint batches of target samples and unmixed auxiliary source samples.
struct CoTrain {
  double target_fraction = 0.5;
};

}  // namespace strategy

using Strategy =
    std::variant<strategy::L2, strategy::L2SP, strategy::MixupInDomain,
                 strategy::XMixup, strategy::XMixupNoLabel, strategy::SeqTrain,
                 strategy::CoTrain>;

std::string strategy_name(const Strategy& s);
/// Names as printed by strategy_name: L2, L2SP, Mixup, XMixup, XMixupNoLabel,
/// SeqTrain, CoTrain. Parameters come from `params` (keys: l2sp_weight,
/// alpha, beta, midtune_iterations, cotrain_target_fraction).
Strategy make_strategy(std::string_view name, const nlohmann::json& params = {});
bool needs_plan(const Strategy& s);
nlohmann::json to_json(const Strategy& s);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct Architecture {
  std::vector<std::size_t> hidden{64, 32};
};

struct RunResult {
  ModelParams params;
  std::vector<double> loss_trace;     // one entry per fine-tune iteration
  std::vector<double> midtune_trace;  // SeqTrain only
  double accuracy = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json config;
};

/// Mean loss over consecutive windows of `window` iterations.
std::vector<double> windowed_loss(const std::vector<double>& trace, std::size_t window = 100);

nlohmann::json to_json(const RunResult& result);

/// Trains extractor and a source head (one logit per source class) from
/// init_model(..., derive_seed(cfg.seed, 0)).
ModelParams pretrain(const Dataset& src_train, const TrainConfig& cfg,
                     const Architecture& arch);

/// Data a fine-tuning run sees. `plan` may be null for target-only strategies;
/// when present it also fixes the unified label space for every strategy.
struct TransferData {
  const Dataset& target_train;
  const Dataset& target_test;
  const Dataset& source;
  const PairingPlan* plan = nullptr;
};

/// Fresh head over `labels` outputs, seeded from cfg.seed.
Layer init_head(std::size_t features, std::size_t labels, std::uint64_t seed);

RunResult finetune(const ModelParams& pretrained, const TransferData& data,
                   const Strategy& strategy, const TrainConfig& cfg);

/// weight * ||extractor(params) - extractor(anchor)||^2 over extractor weights
/// and biases; adds its gradient into `grads` when non-null.
double l2sp_penalty(const ModelParams& params, const ModelParams& anchor, double weight,
                    ModelParams* grads);

/// Top-1 accuracy with argmax over the first test.class_count logits; ties go
/// to the lowest index.
double evaluate(const ModelParams& params, const Dataset& test);

}  // namespace xmixup
