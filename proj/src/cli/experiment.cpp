#include "xmixup/experiment.hpp"

#include <algorithm>
#include <cstdio>

#include "xmixup/errors.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

namespace {

template <class T>
T get(const nlohmann::json& j, const char* key, const char* section) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
  }
}

const nlohmann::json& section(const nlohmann::json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end() || !it->is_object()) throw ConfigError(std::string("config: missing section '") + name + "'");
  return *it;
}

}  // namespace

nlohmann::json default_config_json() {
  const ExperimentConfig d;
  const DatasetSpec& ds = d.dataset;
  return {
      {"seed", d.seed},
      {"seeds", d.seeds},
      {"dataset",
       {{"source_classes", ds.source_classes},
        {"source_per_class", ds.source_per_class},
        {"probe_per_class", ds.probe_per_class},
        {"dim", ds.dim},
        {"spread", ds.spread},
        {"planted", ds.planted},
        {"novel", ds.novel},
        {"target_train_per_class", ds.target_train_per_class},
        {"target_test_per_class", ds.target_test_per_class},
        {"target_noise", ds.target_noise}}},
      {"architecture", {{"hidden", d.arch.hidden}}},
      {"pretrain", to_json(d.pretrain)},
      {"finetune", to_json(d.finetune)},
      {"mixup", {{"alpha", d.mixup.alpha}, {"beta", d.mixup.beta}, {"seed", d.mixup.seed}}},
      {"strategies", d.strategies},
      {"strategy_params", {{"l2sp_weight", 0.01}, {"midtune_iterations", 1500}, {"cotrain_target_fraction", 0.5}}},
      {"pairing", {{"threshold", nullptr}, {"threshold_multiplier", d.threshold_multiplier}}},
      {"probe",
       {{"iterations", d.probe.iterations},
        {"lr", d.probe.lr},
        {"momentum", d.probe.momentum},
        {"batch_size", d.probe.batch_size},
        {"test_fraction", d.probe.test_fraction},
        {"seed", d.probe.seed}}},
      {"spectrum", {{"batch", nullptr}, {"seed", d.spectrum_seed}}},
      {"sweeps",
       {{"alpha", d.alpha_grid}, {"size", d.size_grid}, {"randomize_similarity", d.randomize_similarity}}},
  };
}

void merge_json(nlohmann::json& base, const nlohmann::json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) {
      merge_json(base[it.key()], it.value());
    } else {
      base[it.key()] = it.value();
    }
  }
}

Strategy ExperimentConfig::strategy(const std::string& name) const {
  nlohmann::json p = strategy_params;
  p["alpha"] = mixup.alpha;
  p["beta"] = mixup.beta;
  p["mixup_seed"] = mixup.seed;
  if (!p.contains("midtune_iterations")) p["midtune_iterations"] = finetune.iterations / 2;
  return make_strategy(name, p);
}

ExperimentConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  ExperimentConfig c;
  c.document = doc;
  c.seed = get<std::uint64_t>(doc, "seed", "root");
  c.seeds = get<std::vector<std::uint64_t>>(doc, "seeds", "root");
  if (c.seeds.empty()) throw ConfigError("config: seed list must be non-empty");

  const auto& ds = section(doc, "dataset");
  c.dataset.source_classes = get<int>(ds, "source_classes", "dataset");
  c.dataset.source_per_class = get<int>(ds, "source_per_class", "dataset");
  c.dataset.probe_per_class = get<int>(ds, "probe_per_class", "dataset");
  c.dataset.dim = get<std::size_t>(ds, "dim", "dataset");
  c.dataset.spread = get<double>(ds, "spread", "dataset");
  c.dataset.planted = get<std::vector<int>>(ds, "planted", "dataset");
  c.dataset.novel = get<int>(ds, "novel", "dataset");
  c.dataset.target_train_per_class = get<int>(ds, "target_train_per_class", "dataset");
  c.dataset.target_test_per_class = get<int>(ds, "target_test_per_class", "dataset");
  c.dataset.target_noise = get<double>(ds, "target_noise", "dataset");
  for (int n : {c.dataset.source_per_class, c.dataset.probe_per_class, c.dataset.target_train_per_class,
                c.dataset.target_test_per_class}) {
    if (n < 1) throw ConfigError("config: dataset per-class counts must be positive");
  }

  c.arch.hidden = get<std::vector<std::size_t>>(section(doc, "architecture"), "hidden", "architecture");
  if (c.arch.hidden.empty()) throw ConfigError("config: architecture.hidden must be non-empty");
  c.pretrain = train_config_from_json(section(doc, "pretrain"));
  c.finetune = train_config_from_json(section(doc, "finetune"));

  const auto& mx = section(doc, "mixup");
  c.mixup.alpha = get<double>(mx, "alpha", "mixup");
  c.mixup.beta = get<double>(mx, "beta", "mixup");
  c.mixup.seed = get<std::uint64_t>(mx, "seed", "mixup");
  try {
    c.mixup.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  c.strategies = get<std::vector<std::string>>(doc, "strategies", "root");
  c.strategy_params = doc.value("strategy_params", nlohmann::json::object());
  for (const auto& s : c.strategies) (void)c.strategy(s);

  const auto& pr = section(doc, "pairing");
  if (pr.contains("threshold") && !pr.at("threshold").is_null()) c.threshold = get<std::size_t>(pr, "threshold", "pairing");
  c.threshold_multiplier = get<double>(pr, "threshold_multiplier", "pairing");

  const auto& pb = section(doc, "probe");
  c.probe.iterations = get<int>(pb, "iterations", "probe");
  c.probe.lr = get<double>(pb, "lr", "probe");
  c.probe.momentum = get<double>(pb, "momentum", "probe");
  c.probe.batch_size = get<std::size_t>(pb, "batch_size", "probe");
  c.probe.test_fraction = get<double>(pb, "test_fraction", "probe");
  c.probe.seed = get<std::uint64_t>(pb, "seed", "probe");

  const auto& sp = section(doc, "spectrum");
  if (sp.contains("batch") && !sp.at("batch").is_null()) c.spectrum_batch = get<std::size_t>(sp, "batch", "spectrum");
  c.spectrum_seed = get<std::uint64_t>(sp, "seed", "spectrum");

  const auto& sw = section(doc, "sweeps");
  c.alpha_grid = get<std::vector<double>>(sw, "alpha", "sweeps");
  c.size_grid = get<std::vector<std::size_t>>(sw, "size", "sweeps");
  c.randomize_similarity = get<bool>(sw, "randomize_similarity", "sweeps");
  return c;
}

std::string config_hash(const nlohmann::json& document) {
  const std::string text = document.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TaskData prepare_task(const DatasetSpec& spec, std::uint64_t seed) {
  // split() rounds count * fraction, so these ratios give exact counts
  const int pool = spec.target_train_per_class + spec.target_test_per_class;
  const int held = spec.probe_per_class + pool;
  const int total = spec.source_per_class + held;
  const Dataset src = gen_source(spec.source_classes, total, spec.dim, spec.spread, derive_seed(seed, 1));
  Split pretrain_split = split(src, double(held) / total, derive_seed(seed, 2));
  Split holdout = split(pretrain_split.test, double(pool) / held, derive_seed(seed, 3));
  TargetData tgt = gen_target(holdout.test, spec.planted, spec.novel, pool, spec.target_noise, derive_seed(seed, 4));
  Split target_split = split(tgt.dataset, double(spec.target_test_per_class) / pool, derive_seed(seed, 5));
  return TaskData{std::move(pretrain_split.train), std::move(holdout.train), std::move(target_split.train),
                  std::move(target_split.test), std::move(tgt.planted)};
}

std::size_t resolve_threshold(const ExperimentConfig& cfg, const TaskData& task) {
  if (cfg.threshold) return *cfg.threshold;
  return static_cast<std::size_t>(cfg.threshold_multiplier * static_cast<double>(task.target_train.size()));
}

PairingResult pair_classes(const ModelParams& pretrained, const TaskData& task, std::size_t threshold) {
  const CentroidBank src = compute_centroids(task.source_train, pretrained);
  const CentroidBank tgt = compute_centroids(task.target_train, pretrained);
  SimilarityMatrix sims = similarity(src, tgt);
  std::map<int, std::size_t> sizes;
  const auto counts = task.source_train.class_sizes();
  for (std::size_t c = 0; c < counts.size(); ++c) sizes[static_cast<int>(c)] = counts[c];
  PairingPlan plan = expand_until_threshold(sims, sizes, threshold);
  return {std::move(sims), std::move(plan)};
}

Dataset subsample_auxiliary(const Dataset& src, const PairingPlan& plan, std::size_t budget, std::uint64_t seed) {
  const auto classes = plan.selected_sources();
  Dataset aux = select_classes(src, classes);
  if (budget >= aux.size()) return aux;
  Rng rng(seed);
  auto by_class = aux.indices_by_class();
  std::vector<bool> keep(aux.size(), false);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    auto quota = static_cast<std::size_t>(static_cast<double>(members.size()) * static_cast<double>(budget) /
                                          static_cast<double>(aux.size()));
    quota = std::clamp<std::size_t>(quota, 1, members.size());
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.index(i)]);
    for (std::size_t k = 0; k < quota; ++k) keep[members[k]] = true;
  }
  Dataset out{aux.domain, aux.class_count, aux.dim, {}};
  for (std::size_t i = 0; i < aux.size(); ++i) {
    if (keep[i]) out.samples.push_back(aux.samples[i]);
  }
  return out;
}

RunMetrics analyse(const ModelParams& params, const ExperimentConfig& cfg, const TaskData& task,
                   const PairingPlan& plan, const std::string& strategy, std::uint64_t seed) {
  RunMetrics m;
  m.strategy = strategy;
  m.seed = seed;
  m.accuracy = evaluate(params, task.target_test);
  ProbeConfig probe = cfg.probe;
  probe.seed = derive_seed(cfg.probe.seed, seed);
  m.forgetting_aux =
      linear_probe(params, probe_subset(task.probe, plan, ProbeSubset::Auxiliary), ProbeSubset::Auxiliary, probe)
          .accuracy;
  m.forgetting_aba =
      linear_probe(params, probe_subset(task.probe, plan, ProbeSubset::ABA), ProbeSubset::ABA, probe).accuracy;
  const std::size_t batch = cfg.spectrum_batch.value_or(default_spectrum_batch(task.target_train));
  m.spectrum = spectrum(params, task.target_train, std::min(batch, task.target_train.size()), cfg.spectrum_seed);
  m.spectrum_tail_mean = m.spectrum.tail_mean(10);
  return m;
}

TrainConfig finetune_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.finetune;
  t.seed = seed;
  return t;
}

TrainConfig pretrain_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.pretrain;
  t.seed = derive_seed(seed, 100);
  return t;
}

nlohmann::json to_json(const RunMetrics& m) {
  return {{"strategy", m.strategy},
          {"seed", m.seed},
          {"accuracy", m.accuracy},
          {"forgetting_aux", m.forgetting_aux},
          {"forgetting_aba", m.forgetting_aba},
          {"spectrum_tail_mean", m.spectrum_tail_mean},
          {"spectrum", m.spectrum.normalized}};
}

RunMetrics run_metrics_from_json(const nlohmann::json& j) {
  try {
    RunMetrics m;
    m.strategy = j.at("strategy").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.accuracy = j.at("accuracy").get<double>();
    m.forgetting_aux = j.at("forgetting_aux").get<double>();
    m.forgetting_aba = j.at("forgetting_aba").get<double>();
    m.spectrum_tail_mean = j.at("spectrum_tail_mean").get<double>();
    if (j.contains("spectrum")) m.spectrum.normalized = j.at("spectrum").get<Vector>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("run metrics: ") + e.what());
  }
}

}  // namespace xmixup
