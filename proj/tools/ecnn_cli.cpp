// ecnn: generate a synthetic grasp benchmark, cache expert opinions, train gates, evaluate,
// and time the parallel ensemble.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ecnn/ecnn.hpp"

namespace fs = std::filesystem;
using namespace ecnn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path out_dir() {
  const char* env = std::getenv("ECNN_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path("ecnn_out");
}

std::string command_line(int argc, char** argv) {
  std::string s = "ecnn";
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a.find_first_of(" \t\"'") != std::string::npos) a = "'" + a + "'";
    s += " " + a;
  }
  return s;
}

std::vector<ExpertPtr> select_experts(const std::string& list) {
  const auto registry = make_synthetic_experts();
  if (list.empty()) return registry;
  std::vector<ExpertPtr> out;
  std::stringstream ss(list);
  for (std::string id; std::getline(ss, id, ',');) {
    try {
      out.push_back(find_expert(registry, id));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw UsageError(std::string(what) + " directory not found: " + p.string());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " file not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
  out << text;
}

struct GenerateArgs {
  std::uint64_t seed = 0;
  std::size_t scenes = 200;
  std::size_t grasps = 50;
  double positive_fraction = 0.5;
  double depth_noise = 0.0;
  std::string out;
};

struct CacheArgs {
  std::string dataset;
  std::string out;
  std::string experts;
};

struct TrainArgs {
  std::string variant = "grasp-image";
  std::string cache;
  std::string dataset;
  std::string out;
  std::string optimizer = "adam";
  TrainConfig config;
};

struct EvalArgs {
  std::string dataset;
  std::string cache;
  std::string experts;
  std::vector<std::string> gates;
  std::string out;
  std::string split = "validation";
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  double threshold = 0.5;
  bool per_scene = false;
};

struct BenchArgs {
  int delay_ms = 100;
  std::size_t trials = 50;
  std::size_t experts = 3;
};

int run_generate(const GenerateArgs& a, const std::string& cmd, std::size_t jobs) {
  if (a.scenes == 0) throw UsageError("--scenes must be at least 1");
  if (a.grasps == 0) throw UsageError("--grasps-per-scene must be at least 1");
  if (!(a.positive_fraction > 0.0 && a.positive_fraction < 1.0))
    throw UsageError("--positive-fraction must be in (0, 1)");
  DatasetConfig dc;
  dc.seed = a.seed;
  dc.scenes = a.scenes;
  dc.grasps_per_scene = a.grasps;
  dc.positive_fraction = a.positive_fraction;
  dc.depth_noise_sigma = a.depth_noise;
  const fs::path dir = a.out.empty() ? out_dir() / "dataset" : fs::path(a.out);
  const auto ds = generate_dataset(dc, jobs);
  save_dataset(ds, dir, cmd);
  std::size_t positives = 0;
  for (const auto& s : ds.scenes)
    for (const auto& g : s.grasps) positives += static_cast<std::size_t>(g.label);
  std::printf("dataset %s\n", dir.string().c_str());
  std::printf("scenes %zu grasps %zu positives %zu\n", ds.scenes.size(), ds.grasp_count(), positives);
  std::printf("hash %s\n", hex64(hash_directory(dir)).c_str());
  std::printf("reproduce: %s\n", cmd.c_str());
  return 0;
}

int run_cache(const CacheArgs& a, const std::string& cmd, std::size_t jobs) {
  require_dir(a.dataset, "dataset");
  const auto experts = select_experts(a.experts);
  const fs::path out = a.out.empty() ? out_dir() / "opinions.cache" : fs::path(a.out);
  const auto ds = load_dataset(a.dataset);
  const auto cache = cache_opinions(experts, ds, jobs);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_cache(cache, out);
  write_text(out.string() + ".txt", "command " + cmd + "\n");
  std::printf("cache %s\n", out.string().c_str());
  std::printf("experts");
  for (const auto& id : cache.expert_ids) std::printf(" %s", id.c_str());
  std::printf("\nrecords %zu\n", cache.records.size());
  std::printf("hash %s\n", hex64(hash_file(out)).c_str());
  std::printf("reproduce: %s\n", cmd.c_str());
  return 0;
}

int run_train(TrainArgs a, const std::string& cmd) {
  GateVariant variant;
  try {
    variant = parse_variant(a.variant);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (a.config.crop_size < kMinCrop || a.config.crop_size > kMaxCrop)
    throw UsageError("--crop must be in [" + std::to_string(kMinCrop) + ", " + std::to_string(kMaxCrop) + "]");
  if (a.optimizer == "adam")
    a.config.optimizer.kind = OptimizerKind::adam;
  else if (a.optimizer == "sgd")
    a.config.optimizer.kind = OptimizerKind::sgd_momentum;
  else
    throw UsageError("--optimizer must be adam or sgd");
  try {
    a.config.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  require_file(a.cache, "cache");
  if (variant != GateVariant::constant || !a.dataset.empty()) require_dir(a.dataset, "dataset");

  const auto cache = load_cache(a.cache);
  const GraspDataset ds = a.dataset.empty() ? GraspDataset{} : load_dataset(a.dataset);
  const fs::path out = a.out.empty() ? out_dir() / ("gate_" + std::string(to_string(variant)) + ".bin") : fs::path(a.out);
  const auto result = train_gate(variant, cache, ds, a.config);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_gate(result.params, out);

  std::ostringstream history;
  history << "command " << cmd << "\nconfig " << train_config_text(a.config) << "\nvariant " << to_string(variant)
          << "\nepoch loss validation_accuracy\n";
  char line[96];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    const double acc = e < result.validation_accuracy.size() ? result.validation_accuracy[e] : -1.0;
    std::snprintf(line, sizeof line, "%zu %.17g %.6f\n", e + 1, result.epoch_loss[e], acc);
    history << line;
  }
  write_text(out.string() + ".loss.txt", history.str());

  EnsembleManifest m;
  m.expert_ids = cache.expert_ids;
  m.gate_path = out.filename().string();
  m.variant = variant;
  m.crop_size = result.params.crop_size;
  m.config_echo = train_config_text(a.config);
  write_manifest(m, out.string() + ".manifest");

  std::printf("gate %s variant %s epochs %zu\n", out.string().c_str(), to_string(variant), a.config.epochs);
  if (!result.epoch_loss.empty())
    std::printf("loss first %.6f last %.6f\n", result.epoch_loss.front(), result.epoch_loss.back());
  if (!result.validation_accuracy.empty())
    std::printf("validation accuracy %.4f\n", result.validation_accuracy.back());
  std::printf("hash %s\n", hex64(hash_file(out)).c_str());
  std::printf("reproduce: %s\n", cmd.c_str());
  return 0;
}

int run_eval(const EvalArgs& a, const std::string& cmd, std::size_t jobs) {
  require_dir(a.dataset, "dataset");
  if (a.split != "validation" && a.split != "train" && a.split != "all")
    throw UsageError("--split must be validation, train or all");
  if (!(a.validation_fraction > 0.0 && a.validation_fraction < 1.0))
    throw UsageError("--validation-fraction must be in (0, 1)");
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw UsageError("--threshold must be in (0, 1)");
  for (const auto& g : a.gates) require_file(g, "gate");

  const auto ds = load_dataset(a.dataset);
  OpinionCache cache;
  if (!a.cache.empty()) {
    require_file(a.cache, "cache");
    cache = load_cache(a.cache);
    if (!a.experts.empty()) {
      std::vector<std::string> ids;
      for (const auto& e : select_experts(a.experts)) ids.push_back(e->descriptor().id);
      if (ids != cache.expert_ids) throw UsageError("--experts does not match the cache's expert order");
    }
  } else {
    cache = cache_opinions(select_experts(a.experts), ds, jobs);
  }
  std::vector<GateParams> gates;
  for (const auto& g : a.gates) gates.push_back(load_gate(g));

  std::vector<std::size_t> records;
  if (a.split == "all") {
    records.resize(cache.records.size());
    for (std::size_t i = 0; i < records.size(); ++i) records[i] = i;
  } else {
    const auto split = split_records(cache, a.seed, a.validation_fraction);
    records = a.split == "validation" ? split.validation : split.train;
  }
  if (records.empty()) throw UsageError("no records in the selected split");

  std::ostringstream echo;
  echo << "split=" << a.split << " val_fraction=" << a.validation_fraction << " threshold=" << a.threshold
       << " dataset_seed=" << ds.config.seed;
  EvalReport report = build_report(cache, ds, gates, records, a.seed, echo.str(), a.threshold, a.per_scene);
  report.split = a.split;

  const fs::path out = a.out.empty() ? out_dir() / "report" : fs::path(a.out);
  const std::string table = report.to_table() + "reproduce: " + cmd + "\n";
  auto json = report.to_json();
  json["reproduce"] = cmd;
  write_text(out.string() + ".txt", table);
  write_text(out.string() + ".json", json.dump(2) + "\n");
  std::fputs(table.c_str(), stdout);
  std::printf("report %s.txt hash %s\n", out.string().c_str(), hex64(hash_file(out.string() + ".txt")).c_str());
  std::printf("report %s.json hash %s\n", out.string().c_str(), hex64(hash_file(out.string() + ".json")).c_str());
  return 0;
}

int run_bench(const BenchArgs& a, const std::string& cmd) {
  if (a.delay_ms < 0) throw UsageError("--experts-delay must be non-negative");
  if (a.trials == 0 || a.experts == 0) throw UsageError("--trials and --experts must be at least 1");
  const auto r = measure_latency(a.experts, std::chrono::milliseconds(a.delay_ms), a.trials);
  std::printf("experts %zu delay %d ms trials %zu\n", a.experts, a.delay_ms, a.trials);
  std::printf("parallel   median %.2f ms\n", r.parallel_median());
  std::printf("sequential median %.2f ms\n", r.sequential_median());
  std::printf("reproduce: %s\n", cmd.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble of grasp-quality experts with a learned gate"};
  app.require_subcommand(1);
  std::size_t jobs = 1;
  app.add_option("--jobs", jobs, "Worker thread cap")->check(CLI::PositiveNumber);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic grasp dataset");
  generate->add_option("--seed", gen.seed, "Dataset seed");
  generate->add_option("--scenes", gen.scenes, "Number of scenes");
  generate->add_option("--grasps-per-scene", gen.grasps, "Labeled grasps per scene");
  generate->add_option("--positive-fraction", gen.positive_fraction, "Target share of successful grasps");
  generate->add_option("--depth-noise", gen.depth_noise, "Gaussian depth noise sigma in meters");
  generate->add_option("--out", gen.out, "Output directory (default $ECNN_OUT_DIR/dataset)");

  CacheArgs cac;
  auto* cache = app.add_subcommand("cache", "Evaluate every expert once and cache the opinions");
  cache->add_option("--dataset", cac.dataset, "Dataset directory")->required();
  cache->add_option("--out", cac.out, "Cache file (default $ECNN_OUT_DIR/opinions.cache)");
  cache->add_option("--experts", cac.experts, "Comma-separated expert ids (default: all three)");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a gate on cached opinions");
  train->add_option("--variant", tr.variant, "constant | image | grasp-image");
  train->add_option("--cache", tr.cache, "Opinion cache")->required();
  train->add_option("--dataset", tr.dataset, "Dataset directory (images for the gate)");
  train->add_option("--out", tr.out, "Gate parameter file");
  train->add_option("--epochs", tr.config.epochs, "Epochs");
  train->add_option("--lr", tr.config.learning_rate, "Learning rate");
  train->add_option("--batch", tr.config.batch_size, "Batch size");
  train->add_option("--seed", tr.config.seed, "Seed for init, split and shuffling");
  train->add_option("--optimizer", tr.optimizer, "adam | sgd");
  train->add_option("--momentum", tr.config.optimizer.momentum, "SGD momentum");
  train->add_option("--crop", tr.config.crop_size, "Gate input size in pixels, 64..128");
  train->add_option("--validation-fraction", tr.config.validation_fraction, "Held-out scene share");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Compare experts and ensembles");
  eval->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  eval->add_option("--cache", ev.cache, "Opinion cache (default: evaluate experts live)");
  eval->add_option("--experts", ev.experts, "Comma-separated expert ids (default: all three)");
  eval->add_option("--gates", ev.gates, "Gate parameter files")->delimiter(',');
  eval->add_option("--out", ev.out, "Report path stem (default $ECNN_OUT_DIR/report)");
  eval->add_option("--split", ev.split, "validation | train | all");
  eval->add_option("--seed", ev.seed, "Split seed (match the training seed)");
  eval->add_option("--validation-fraction", ev.validation_fraction, "Held-out scene share");
  eval->add_option("--threshold", ev.threshold, "Classification threshold");
  eval->add_flag("--per-scene", ev.per_scene, "Add per-scene success counts");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "Parallel vs sequential latency with mock experts");
  bench->add_option("--experts-delay", be.delay_ms, "Mock expert delay in ms");
  bench->add_option("--trials", be.trials, "Trials per mode");
  bench->add_option("--experts", be.experts, "Number of mock experts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string cmd = command_line(argc, argv);
  try {
    if (generate->parsed()) return run_generate(gen, cmd, jobs);
    if (cache->parsed()) return run_cache(cac, cmd, jobs);
    if (train->parsed()) return run_train(tr, cmd);
    if (eval->parsed()) return run_eval(ev, cmd, jobs);
    if (bench->parsed()) return run_bench(be, cmd);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::invalid_argument ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
