#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xmixup/analysis.hpp"
#include "xmixup/dataset.hpp"
#include "xmixup/mixup.hpp"
#include "xmixup/model.hpp"
#include "xmixup/pairing.hpp"
#include "xmixup/training.hpp"

namespace xmixup {

/// Per-class sample counts. Each source class is generated with
/// source_per_class + probe_per_class + target_train_per_class +
/// target_test_per_class samples and carved into disjoint parts: pretraining,
/// forgetting probes, and the pool planted target classes are copied from.
struct DatasetSpec {
  int source_classes = 20;
  int source_per_class = 200;
  int probe_per_class = 40;
  std::size_t dim = 32;
  double spread = 1.4;
  std::vector<int> planted{0, 1, 2, 3};
  int novel = 2;
  int target_train_per_class = 10;
  int target_test_per_class = 100;
  double target_noise = 0.35;
};

/// Typed view of a merged experiment JSON document. `document` keeps the
/// merged JSON; its hash identifies every artifact produced from it.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  DatasetSpec dataset;
  Architecture arch;
  TrainConfig pretrain;
  TrainConfig finetune;
  MixupConfig mixup;
  std::vector<std::string> strategies{"L2", "L2SP", "SeqTrain", "CoTrain", "XMixup", "Mixup"};
  nlohmann::json strategy_params = nlohmann::json::object();
  /// Auxiliary sample threshold; when unset, multiplier * |target train|.
  std::optional<std::size_t> threshold;
  double threshold_multiplier = 4.0;
  ProbeConfig probe;
  std::optional<std::size_t> spectrum_batch;  // default min(512, |ds|)
  std::uint64_t spectrum_seed = 0;
  std::vector<double> alpha_grid{0.125, 0.25, 0.5, 1, 2, 4, 8, 16, 64, 1024};
  std::vector<std::size_t> size_grid{60, 120, 240, 480, 960, 2400};
  bool randomize_similarity = true;

  nlohmann::json document;

  /// Strategy object for `name` built from strategy_params and mixup.
  Strategy strategy(const std::string& name) const;
};

/// Defaults as a JSON document (the schema accepted by parse_config).
nlohmann::json default_config_json();

/// Recursively overlays `patch` on `base` (objects merge, other values replace).
void merge_json(nlohmann::json& base, const nlohmann::json& patch);

/// Parses a merged document; throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& document);

/// FNV-1a 64 over the canonical dump of the document, as 16 hex digits.
std::string config_hash(const nlohmann::json& document);

struct TaskData {
  Dataset source_train;
  Dataset probe;  // held-out source samples for forgetting probes
  Dataset target_train;
  Dataset target_test;
  PlantedMapping planted;
};

TaskData prepare_task(const DatasetSpec& spec, std::uint64_t seed);

struct PairingResult {
  SimilarityMatrix sims;
  PairingPlan plan;
};

std::size_t resolve_threshold(const ExperimentConfig& cfg, const TaskData& task);

PairingResult pair_classes(const ModelParams& pretrained, const TaskData& task, std::size_t threshold);

/// Reduces the auxiliary pool to `budget` samples by stratified random
/// subsampling of the plan's source classes; other classes are dropped.
Dataset subsample_auxiliary(const Dataset& src, const PairingPlan& plan, std::size_t budget,
                            std::uint64_t seed);

/// Fine-tune outcome plus diagnostics.
struct RunMetrics {
  std::string strategy;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double forgetting_aux = 0.0;
  double forgetting_aba = 0.0;
  double spectrum_tail_mean = 0.0;
  Spectrum spectrum;
};

/// Probes on task.probe restricted to the plan's auxiliary / remaining
/// classes, and the spectrum of target-train features.
RunMetrics analyse(const ModelParams& params, const ExperimentConfig& cfg, const TaskData& task,
                   const PairingPlan& plan, const std::string& strategy, std::uint64_t seed);

TrainConfig finetune_config(const ExperimentConfig& cfg, std::uint64_t seed);
TrainConfig pretrain_config(const ExperimentConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const RunMetrics& m);
RunMetrics run_metrics_from_json(const nlohmann::json& j);

}  // namespace xmixup
