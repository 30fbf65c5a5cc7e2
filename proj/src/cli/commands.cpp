#include "xmixup/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "xmixup/errors.hpp"
#include "xmixup/format.hpp"
#include "xmixup/report.hpp"
#include "xmixup/rng.hpp"

namespace fs = std::filesystem;

namespace xmixup::cli {

namespace {

// Runs fn(0..n-1) on up to `jobs` threads; the first failure by index is
// rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

nlohmann::json parse_override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;
  }
}

struct Context {
  ExperimentConfig cfg;
  std::string hash;
  fs::path out_dir;
  int jobs = 1;
  std::ostream& log;

  fs::path data(const std::string& name) const { return out_dir / "data" / name; }
  fs::path models(const std::string& name) const { return out_dir / "models" / name; }
  fs::path runs(const std::string& name) const { return out_dir / "runs" / name; }
};

void write_text(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_json(const Context& ctx, const fs::path& path, nlohmann::json j, std::uint64_t seed) {
  j["config_hash"] = ctx.hash;
  j["seed"] = seed;
  write_text(path, j.dump(2) + "\n");
}

// CSV columns are fixed, so provenance lives in a sidecar next to the file.
void write_csv_artifact(const Context& ctx, const fs::path& path, const std::string& content, std::uint64_t seed) {
  write_text(path, content);
  nlohmann::json meta{{"artifact", path.filename().string()}, {"config_hash", ctx.hash}, {"seed", seed}};
  write_text(fs::path(path.string() + ".meta.json"), meta.dump(2) + "\n");
}

template <class Writer>
std::string to_text(Writer&& w) {
  std::ostringstream s;
  w(s);
  return s.str();
}

void require(const fs::path& path, const char* producer) {
  if (!fs::exists(path)) {
    throw DataError("missing upstream artifact " + path.string() + " (run `" + producer + "` first)");
  }
}

Dataset load_data(const Context& ctx, const std::string& name) {
  require(ctx.data(name), "gen-data");
  return load_csv(ctx.data(name));
}

TaskData load_task(const Context& ctx) {
  TaskData t;
  t.source_train = load_data(ctx, "source_train.csv");
  t.probe = load_data(ctx, "probe.csv");
  t.target_train = load_data(ctx, "target_train.csv");
  t.target_test = load_data(ctx, "target_test.csv");
  require(ctx.data("planted.csv"), "gen-data");
  std::ifstream in(ctx.data("planted.csv"), std::ios::binary);
  t.planted = read_planted_csv(in);
  return t;
}

ModelParams load_pretrained(const Context& ctx) {
  require(ctx.models("pretrained.ckpt"), "pretrain");
  return load_checkpoint(ctx.models("pretrained.ckpt"));
}

PairingPlan load_plan(const Context& ctx) {
  const fs::path p = ctx.out_dir / "pairing" / "pairing.csv";
  require(p, "pair");
  std::ifstream in(p, std::ios::binary);
  return read_plan_csv(in);
}

std::string run_name(const std::string& strategy, std::uint64_t seed) {
  return strategy + "_seed" + std::to_string(seed);
}

// ---- subcommands ---------------------------------------------------------

void cmd_gen_data(const Context& ctx) {
  const TaskData task = prepare_task(ctx.cfg.dataset, ctx.cfg.seed);
  const auto seed = ctx.cfg.seed;
  auto save = [&](const std::string& name, const Dataset& ds) {
    write_csv_artifact(ctx, ctx.data(name), to_text([&](std::ostream& o) { write_csv(ds, o); }), seed);
  };
  save("source_train.csv", task.source_train);
  save("probe.csv", task.probe);
  save("target_train.csv", task.target_train);
  save("target_test.csv", task.target_test);
  write_csv_artifact(ctx, ctx.data("planted.csv"),
                     to_text([&](std::ostream& o) { write_planted_csv(task.planted, o); }), seed);
  ctx.log << "gen-data: " << task.source_train.size() << " source / " << task.target_train.size() << " target train / "
          << task.target_test.size() << " target test samples\n";
}

void cmd_pretrain(const Context& ctx) {
  const Dataset src = load_data(ctx, "source_train.csv");
  const Dataset probe = load_data(ctx, "probe.csv");
  const TrainConfig tc = pretrain_config(ctx.cfg, ctx.cfg.seed);
  const ModelParams params = pretrain(src, tc, ctx.cfg.arch);
  fs::create_directories(ctx.models(""));
  save_checkpoint(params, ctx.models("pretrained.ckpt"));
  const double acc = evaluate(params, probe);
  write_json(ctx, ctx.models("pretrain.json"),
             {{"train", to_json(tc)}, {"hidden", ctx.cfg.arch.hidden}, {"source_holdout_accuracy", acc}},
             ctx.cfg.seed);
  ctx.log << "pretrain: held-out source accuracy " << acc << "\n";
}

void cmd_pair(const Context& ctx) {
  const TaskData task = load_task(ctx);
  const ModelParams pre = load_pretrained(ctx);
  const std::size_t threshold = resolve_threshold(ctx.cfg, task);
  const PairingResult pr = pair_classes(pre, task, threshold);
  write_csv_artifact(ctx, ctx.out_dir / "pairing" / "pairing.csv",
                     to_text([&](std::ostream& o) { write_plan_csv(pr.plan, o); }), ctx.cfg.seed);

  const Assignment first = pr.plan.first_round();
  std::size_t planted = 0, recovered = 0;
  for (std::size_t t = 0; t < task.planted.source_of.size(); ++t) {
    if (!task.planted.source_of[t]) continue;
    ++planted;
    auto it = first.find(static_cast<int>(t));
    if (it != first.end() && it->second == *task.planted.source_of[t]) ++recovered;
  }
  std::size_t selected = 0;
  const auto sizes = task.source_train.class_sizes();
  for (int s : pr.plan.selected_sources()) selected += sizes[static_cast<std::size_t>(s)];
  nlohmann::json first_json = nlohmann::json::object();
  for (auto [t, s] : first) first_json[std::to_string(t)] = s;
  write_json(ctx, ctx.out_dir / "pairing" / "pair.json",
             {{"threshold", threshold},
              {"rounds", pr.plan.rounds},
              {"exhausted", pr.plan.exhausted},
              {"selected_classes", pr.plan.selected_sources()},
              {"selected_samples", selected},
              {"first_round", first_json},
              {"planted_classes", planted},
              {"planted_recovered", recovered}},
             ctx.cfg.seed);
  ctx.log << "pair: " << pr.plan.rounds << " round(s), " << selected << " auxiliary samples, planted recovery "
          << recovered << "/" << planted << "\n";
}

struct Job {
  std::string strategy;
  std::uint64_t seed;
};

std::vector<Job> strategy_jobs(const ExperimentConfig& cfg, const std::vector<std::string>& strategies) {
  std::vector<Job> jobs;
  for (const auto& s : strategies) {
    for (auto seed : cfg.seeds) jobs.push_back({s, seed});
  }
  return jobs;
}

void cmd_finetune(const Context& ctx) {
  const TaskData task = load_task(ctx);
  const ModelParams pre = load_pretrained(ctx);
  const PairingPlan plan = load_plan(ctx);
  const auto jobs = strategy_jobs(ctx.cfg, ctx.cfg.strategies);
  fs::create_directories(ctx.runs(""));
  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    const TransferData data{task.target_train, task.target_test, task.source_train, &plan};
    const RunResult rr = finetune(pre, data, ctx.cfg.strategy(job.strategy), finetune_config(ctx.cfg, job.seed));
    save_checkpoint(rr.params, ctx.runs(run_name(job.strategy, job.seed) + ".ckpt"));
    write_json(ctx, ctx.runs(run_name(job.strategy, job.seed) + ".json"), to_json(rr), job.seed);
  });
  ctx.log << "finetune: " << jobs.size() << " run(s) written to " << ctx.runs("").string() << "\n";
}

void cmd_eval(const Context& ctx, const std::optional<fs::path>& checkpoint, std::ostream& out) {
  const TaskData task = load_task(ctx);
  const PairingPlan plan = load_plan(ctx);
  if (checkpoint) {
    if (!fs::exists(*checkpoint)) throw DataError("missing checkpoint " + checkpoint->string());
    const ModelParams p = load_checkpoint(*checkpoint);
    RunMetrics m = analyse(p, ctx.cfg, task, plan, checkpoint->stem().string(), ctx.cfg.seed);
    out << to_json(m).dump(2) << "\n";
    return;
  }
  const auto jobs = strategy_jobs(ctx.cfg, ctx.cfg.strategies);
  for (const auto& job : jobs) require(ctx.runs(run_name(job.strategy, job.seed) + ".ckpt"), "finetune");
  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    const ModelParams p = load_checkpoint(ctx.runs(run_name(job.strategy, job.seed) + ".ckpt"));
    const RunMetrics m = analyse(p, ctx.cfg, task, plan, job.strategy, job.seed);
    write_json(ctx, ctx.runs(run_name(job.strategy, job.seed) + ".eval.json"), to_json(m), job.seed);
  });
  ctx.log << "eval: " << jobs.size() << " run(s) evaluated\n";
}

void cmd_report(const Context& ctx) {
  const fs::path dir = ctx.runs("");
  if (!fs::is_directory(dir)) throw DataError("missing upstream artifact " + dir.string() + " (run `eval` first)");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 10 && name.ends_with(".eval.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no *.eval.json files in " + dir.string() + " (run `eval` first)");
  std::vector<RunMetrics> runs;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("cannot parse " + f.string() + ": " + e.what());
    }
    runs.push_back(run_metrics_from_json(j));
  }
  const fs::path rep = ctx.out_dir / "report";
  write_csv_artifact(ctx, rep / "comparison.csv", to_text([&](std::ostream& o) { write_comparison_csv(runs, o); }),
                     ctx.cfg.seed);
  const auto summary = summarize(runs);
  write_csv_artifact(ctx, rep / "summary.csv", to_text([&](std::ostream& o) { write_summary_csv(summary, o); }),
                     ctx.cfg.seed);

  std::map<std::string, Series> by_strategy;
  for (const auto& r : runs) {
    auto& s = by_strategy[r.strategy];
    s.name = r.strategy;
    s.points.emplace_back(static_cast<double>(r.seed), r.accuracy);
  }
  std::vector<Series> series;
  for (auto& [name, s] : by_strategy) series.push_back(std::move(s));
  write_text(rep / "comparison.svg",
             line_chart({"Target accuracy per seed", "seed", "top-1 accuracy", false}, series));
  for (const auto& s : summary) {
    ctx.log << s.strategy << ": " << s.accuracy.mean << " +- " << s.accuracy.std << " (" << s.runs << " runs)\n";
  }
}

// Shared setup for the sweeps: task, pretrained model, similarity matrix.
struct SweepInputs {
  TaskData task;
  ModelParams pretrained;
  PairingResult pairing;
};

SweepInputs sweep_inputs(const Context& ctx) {
  SweepInputs in{load_task(ctx), load_pretrained(ctx), {}};
  in.pairing = pair_classes(in.pretrained, in.task, resolve_threshold(ctx.cfg, in.task));
  return in;
}

double run_accuracy(const ModelParams& pre, const TaskData& task, const Dataset& source, const PairingPlan& plan,
                    const Strategy& s, const TrainConfig& tc) {
  const TransferData data{task.target_train, task.target_test, source, &plan};
  return finetune(pre, data, s, tc).accuracy;
}

std::string summary_rows(const std::vector<std::pair<std::string, std::vector<double>>>& groups) {
  std::string text = "setting,runs,accuracy_mean,accuracy_std\n";
  for (const auto& [name, values] : groups) {
    const MeanStd m = mean_std(values);
    text += name + "," + std::to_string(values.size()) + "," + format_double(m.mean) + "," + format_double(m.std) + "\n";
  }
  return text;
}

void cmd_sweep_alpha(const Context& ctx) {
  const SweepInputs in = sweep_inputs(ctx);
  const auto& grid = ctx.cfg.alpha_grid;
  const auto& seeds = ctx.cfg.seeds;
  const std::size_t per_setting = seeds.size();
  std::vector<double> acc((grid.size() + 1) * per_setting);
  parallel_for(acc.size(), ctx.jobs, [&](std::size_t i) {
    const std::size_t setting = i / per_setting;
    const std::uint64_t seed = seeds[i % per_setting];
    Strategy s = strategy::L2{};
    if (setting < grid.size()) {
      MixupConfig m = ctx.cfg.mixup;
      m.alpha = grid[setting];
      s = strategy::XMixup{m};
    }
    acc[i] = run_accuracy(in.pretrained, in.task, in.task.source_train, in.pairing.plan, s,
                          finetune_config(ctx.cfg, seed));
  });

  std::string csv = "strategy,alpha,seed,accuracy\n";
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  Series curve{"XMixup", {}}, baseline{"L2", {}};
  for (std::size_t g = 0; g <= grid.size(); ++g) {
    const bool is_l2 = g == grid.size();
    std::vector<double> values(acc.begin() + static_cast<long>(g * per_setting),
                               acc.begin() + static_cast<long>((g + 1) * per_setting));
    for (std::size_t k = 0; k < per_setting; ++k) {
      csv += std::string(is_l2 ? "L2,NA," : "XMixup," + format_double(grid[g]) + ",") + std::to_string(seeds[k]) +
             "," + format_double(values[k]) + "\n";
    }
    groups.emplace_back(is_l2 ? "L2" : "alpha=" + format_double(grid[g]), values);
    if (!is_l2) curve.points.emplace_back(grid[g], mean_std(values).mean);
  }
  const double l2_mean = mean_std(groups.back().second).mean;
  for (double a : grid) baseline.points.emplace_back(a, l2_mean);

  const fs::path dir = ctx.out_dir / "sweeps";
  write_csv_artifact(ctx, dir / "alpha.csv", csv, ctx.cfg.seed);
  write_csv_artifact(ctx, dir / "alpha_summary.csv", summary_rows(groups), ctx.cfg.seed);
  if (!grid.empty()) {
    write_text(dir / "alpha.svg", line_chart({"Accuracy vs alpha (beta = " + format_double(ctx.cfg.mixup.beta) + ")",
                                              "alpha", "top-1 accuracy", true},
                                             {curve, baseline}));
  }
  ctx.log << "sweep-alpha: " << acc.size() << " run(s)\n";
}

void cmd_sweep_size(const Context& ctx) {
  const SweepInputs in = sweep_inputs(ctx);
  std::map<int, std::size_t> sizes;
  const auto counts = in.task.source_train.class_sizes();
  for (std::size_t c = 0; c < counts.size(); ++c) sizes[static_cast<int>(c)] = counts[c];

  const auto& grid = ctx.cfg.size_grid;
  const auto& seeds = ctx.cfg.seeds;
  std::vector<PairingPlan> plans;
  std::vector<Dataset> pools;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    plans.push_back(expand_until_threshold(in.pairing.sims, sizes, grid[g]));
    pools.push_back(subsample_auxiliary(in.task.source_train, plans.back(), grid[g], derive_seed(ctx.cfg.seed, g)));
  }
  std::vector<double> acc(grid.size() * seeds.size());
  parallel_for(acc.size(), ctx.jobs, [&](std::size_t i) {
    const std::size_t g = i / seeds.size();
    acc[i] = run_accuracy(in.pretrained, in.task, pools[g], plans[g], strategy::XMixup{ctx.cfg.mixup},
                          finetune_config(ctx.cfg, seeds[i % seeds.size()]));
  });

  std::string csv = "aux_budget,aux_samples,rounds,seed,accuracy\n";
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  Series curve{"XMixup", {}};
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> values;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const double a = acc[g * seeds.size() + k];
      values.push_back(a);
      csv += std::to_string(grid[g]) + "," + std::to_string(pools[g].size()) + "," + std::to_string(plans[g].rounds) +
             "," + std::to_string(seeds[k]) + "," + format_double(a) + "\n";
    }
    groups.emplace_back("aux_samples=" + std::to_string(pools[g].size()), values);
    curve.points.emplace_back(static_cast<double>(pools[g].size()), mean_std(values).mean);
  }
  const fs::path dir = ctx.out_dir / "sweeps";
  write_csv_artifact(ctx, dir / "size.csv", csv, ctx.cfg.seed);
  write_csv_artifact(ctx, dir / "size_summary.csv", summary_rows(groups), ctx.cfg.seed);
  if (!grid.empty()) {
    write_text(dir / "size.svg",
               line_chart({"Accuracy vs auxiliary set size", "auxiliary samples", "top-1 accuracy", true}, {curve}));
  }
  ctx.log << "sweep-size: " << acc.size() << " run(s)\n";
}

void cmd_randomize_aux(const Context& ctx) {
  const SweepInputs in = sweep_inputs(ctx);
  const auto& seeds = ctx.cfg.seeds;
  const std::size_t settings = ctx.cfg.randomize_similarity ? 2 : 1;
  std::vector<double> acc(settings * seeds.size());
  parallel_for(acc.size(), ctx.jobs, [&](std::size_t i) {
    const std::uint64_t seed = seeds[i % seeds.size()];
    const PairingPlan plan = i / seeds.size() == 0 ? in.pairing.plan
                                                   : randomize_plan(in.pairing.plan, in.pairing.sims, derive_seed(seed, 7));
    acc[i] = run_accuracy(in.pretrained, in.task, in.task.source_train, plan, strategy::XMixup{ctx.cfg.mixup},
                          finetune_config(ctx.cfg, seed));
  });
  std::string csv = "selection,seed,accuracy\n";
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (std::size_t g = 0; g < settings; ++g) {
    const std::string name = g == 0 ? "similarity" : "random";
    std::vector<double> values;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      values.push_back(acc[g * seeds.size() + k]);
      csv += name + "," + std::to_string(seeds[k]) + "," + format_double(values.back()) + "\n";
    }
    groups.emplace_back(name, values);
  }
  const fs::path dir = ctx.out_dir / "sweeps";
  write_csv_artifact(ctx, dir / "randomize_aux.csv", csv, ctx.cfg.seed);
  write_csv_artifact(ctx, dir / "randomize_aux_summary.csv", summary_rows(groups), ctx.cfg.seed);
  ctx.log << "randomize-aux: " << acc.size() << " run(s)\n";
}

void cmd_ablate(const Context& ctx) {
  const TaskData task = load_task(ctx);
  const ModelParams pre = load_pretrained(ctx);
  const PairingPlan plan = load_plan(ctx);
  const std::vector<std::string> names{"L2", "XMixup", "Mixup", "XMixupNoLabel"};
  const auto jobs = strategy_jobs(ctx.cfg, names);
  std::vector<double> acc(jobs.size());
  parallel_for(jobs.size(), ctx.jobs, [&](std::size_t i) {
    acc[i] = run_accuracy(pre, task, task.source_train, plan, ctx.cfg.strategy(jobs[i].strategy),
                          finetune_config(ctx.cfg, jobs[i].seed));
  });
  std::string csv = "strategy,seed,accuracy\n";
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (const auto& n : names) groups.emplace_back(n, std::vector<double>{});
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    csv += jobs[i].strategy + "," + std::to_string(jobs[i].seed) + "," + format_double(acc[i]) + "\n";
    groups[i / ctx.cfg.seeds.size()].second.push_back(acc[i]);
  }
  const fs::path dir = ctx.out_dir / "ablation";
  write_csv_artifact(ctx, dir / "ablation.csv", csv, ctx.cfg.seed);
  write_csv_artifact(ctx, dir / "ablation_summary.csv", summary_rows(groups), ctx.cfg.seed);
  ctx.log << "ablate: " << jobs.size() << " run(s)\n";
}

}  // namespace

ExperimentConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = default_config_json();
  if (path) {
    std::ifstream in(*path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + path->string());
    try {
      merge_json(doc, nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + path->string() + " is not valid JSON: " + e.what());
    }
  }
  if (const char* env = std::getenv("XMIXUP_SEED")) {
    long long seed = 0;
    if (!parse_int(env, seed) || seed < 0) throw ConfigError("XMIXUP_SEED must be a non-negative integer");
    doc["seed"] = static_cast<std::uint64_t>(seed);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key.path=value, got '" + o + "'");
    nlohmann::json patch = parse_override_value(o.substr(eq + 1));
    std::string key = o.substr(0, eq);
    for (auto dot = key.rfind('.'); dot != std::string::npos; dot = key.rfind('.')) {
      patch = nlohmann::json{{key.substr(dot + 1), patch}};
      key.resize(dot);
    }
    merge_json(doc, nlohmann::json{{key, patch}});
  }
  return parse_config(doc);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-domain mixup transfer-learning laboratory"};
  app.require_subcommand(1, 1);

  std::optional<std::string> config_path;
  std::string out_dir = "out";
  int jobs = 1;
  std::vector<std::string> overrides;
  std::optional<std::string> checkpoint;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"gen-data", "generate source/target datasets"},
      {"pretrain", "pre-train the feature extractor on the source task"},
      {"pair", "pair target classes with source classes"},
      {"finetune", "fine-tune every configured strategy for every seed"},
      {"eval", "accuracy, forgetting probes and spectra for fine-tuned runs"},
      {"report", "join evaluated runs into comparison tables and a chart"},
      {"sweep-alpha", "XMixup accuracy across the alpha grid"},
      {"sweep-size", "XMixup accuracy across auxiliary set sizes"},
      {"randomize-aux", "similarity-selected vs random auxiliary classes"},
      {"ablate", "XMixup against in-domain mixup and label-free mixing"},
  };
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", config_path, "JSON experiment config");
    sub->add_option("-o,--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("-j,--jobs", jobs, "worker threads for independent runs")->check(CLI::PositiveNumber);
    sub->add_option("--set", overrides, "override a config key, e.g. --set finetune.iterations=500");
    if (std::string_view(s.name) == "eval") {
      sub->add_option("--checkpoint", checkpoint, "evaluate one checkpoint and print its metrics");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    std::optional<fs::path> cfg_path;
    if (config_path) cfg_path = *config_path;
    ExperimentConfig cfg = load_config(cfg_path, overrides);
    const std::string hash = config_hash(cfg.document);
    Context ctx{std::move(cfg), hash, out_dir, jobs, err};
    fs::create_directories(ctx.out_dir);

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") cmd_gen_data(ctx);
    else if (name == "pretrain") cmd_pretrain(ctx);
    else if (name == "pair") cmd_pair(ctx);
    else if (name == "finetune") cmd_finetune(ctx);
    else if (name == "eval") cmd_eval(ctx, checkpoint ? std::optional<fs::path>(*checkpoint) : std::nullopt, out);
    else if (name == "report") cmd_report(ctx);
    else if (name == "sweep-alpha") cmd_sweep_alpha(ctx);
    else if (name == "sweep-size") cmd_sweep_size(ctx);
    else if (name == "randomize-aux") cmd_randomize_aux(ctx);
    else if (name == "ablate") cmd_ablate(ctx);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace xmixup::cli
