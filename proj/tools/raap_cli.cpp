// raap: generate synthetic data, train, evaluate and run the affordance predictor.
//
// Exit codes: 0 ok, 2 configuration or input error, 3 numeric failure,
// 4 train/test leakage, 5 geometry failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "raap/checkpoint.hpp"
#include "raap/correspondence.hpp"
#include "raap/errors.hpp"
#include "raap/evaluation.hpp"
#include "raap/lifting.hpp"
#include "raap/run_config.hpp"
#include "raap/store_format.hpp"
#include "raap/synthgen.hpp"
#include "raap/training.hpp"

namespace fs = std::filesystem;
using namespace raap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitLeakage = 4;
constexpr int kExitGeometry = 5;

struct Options {
  std::string config;
  // gen
  std::optional<std::string> variant;
  std::vector<std::string> tasks;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_train;
  std::optional<int> n_test;
  std::optional<std::string> out;
  // train
  std::optional<std::string> data_dir;
  std::optional<std::string> checkpoint;
  std::optional<std::string> loss_history;
  std::optional<int> k;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::string> rule;
  // eval
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> k_sweep;
  std::optional<std::string> report;
  std::optional<std::string> sweep_out;
  // predict
  std::string scene;
  std::optional<std::string> scene_id;
  std::optional<std::string> memory;
  std::optional<std::string> task;
  bool lift = false;
  bool quiet = false;
};

RunConfig load_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.variant) c.data.variant = *o.variant;
  if (!o.tasks.empty()) c.data.tasks = o.tasks;
  if (o.seed) {
    c.data.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (o.n_train) c.data.n_train = *o.n_train;
  if (o.n_test) c.data.n_test = *o.n_test;
  if (o.data_dir) c.paths.data_dir = *o.data_dir;
  if (o.out) c.paths.data_dir = *o.out;
  if (o.checkpoint) c.paths.checkpoint = *o.checkpoint;
  if (o.loss_history) c.paths.loss_history = *o.loss_history;
  if (o.report) c.paths.report = *o.report;
  if (o.k) {
    c.train.k = *o.k;
    c.eval.k = *o.k;
  }
  if (o.epochs) c.train.max_epochs = *o.epochs;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.rule) c.model.weighting = parse_weighting_rule(*o.rule);
  if (!o.seeds.empty()) c.eval.seeds = o.seeds;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot open '" + path.string() + "' for writing");
  }
  out << text;
  if (!out) {
    throw ConfigError("failed writing '" + path.string() + "'");
  }
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create directory '" + dir.string() + "'");
  }
}

StoreContents scene_store(const std::vector<Scene>& scenes, bool reference_view) {
  StoreContents store;
  store.embedding_dim = kSceneEmbeddingDim;
  for (const auto& s : scenes) {
    store.entries.push_back(reference_view ? s.memory_entry() : s.query_entry());
    store.depths.push_back({s.id, s.depth, s.intrinsics});
  }
  return store;
}

int run_gen(const Options& o) {
  const RunConfig c = load_config(o);
  const BenchmarkVariant variant = BenchmarkVariant::parse(c.data.variant);
  const SceneSplit split = generate_split(c.data.n_train, c.data.n_test, c.data.tasks, c.data.seed, variant);
  const fs::path dir = c.paths.data_dir;
  ensure_directory(dir);

  StoreContents memory;
  memory.embedding_dim = kSceneEmbeddingDim;
  memory.entries = split.memory.entries();
  write_store_file(dir / "memory.store", memory);
  write_store_file(dir / "train.store", scene_store(split.train, false));
  write_store_file(dir / "test.store", scene_store(split.test, false));

  nlohmann::json manifest;
  manifest["variant"] = variant.name;
  manifest["noise"] = variant.noise;
  manifest["seed"] = c.data.seed;
  manifest["tasks"] = c.data.tasks;
  manifest["n_train_per_task"] = c.data.n_train;
  manifest["n_test_per_task"] = c.data.n_test;
  manifest["files"] = {{"memory", "memory.store"}, {"train", "train.store"}, {"test", "test.store"}};
  auto& train_ids = manifest["train"] = nlohmann::json::array();
  for (const auto& s : split.train) train_ids.push_back(s.id);
  auto& test_ids = manifest["test"] = nlohmann::json::array();
  for (const auto& s : split.test) test_ids.push_back(s.id);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  if (!o.quiet) {
    std::cout << "wrote " << split.train.size() << " train / " << split.test.size() << " test scenes ("
              << variant.name << ") to " << dir.string() << "\n";
  }
  return kExitOk;
}

std::vector<MemoryEntry> load_queries(const fs::path& path) { return read_store_file(path).entries; }

int run_train(const Options& o) {
  RunConfig c = load_config(o);
  const fs::path dir = c.paths.data_dir;
  const Memory memory = load_memory(dir / "memory.store");
  const std::vector<MemoryEntry> queries = load_queries(dir / "train.store");
  if (memory.empty()) {
    throw EmptyMemoryError("memory '" + (dir / "memory.store").string() + "' has no entries");
  }
  c.model.embedding_dim = static_cast<int>(memory.embedding_dim());
  c.model.k_max = std::max(c.model.k_max, c.train.k);
  if (!queries.empty()) {
    c.model.image_height = queries.front().image.height;
    c.model.image_width = queries.front().image.width;
    c.model.channels = queries.front().image.channels();
  }

  std::vector<std::string> warnings;
  const std::vector<Episode> episodes = build_episodes(queries, memory, c.train, c.synonym_table(), &warnings);
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  AlignmentModel model(c.model, c.train.seed);
  const TrainResult result = train(model, episodes, queries, memory, c.train, [&](int epoch, double loss) {
    if (!o.quiet) {
      std::printf("epoch %3d  loss %.6f\n", epoch, loss);
      std::fflush(stdout);
    }
  });
  save_checkpoint(model, c.paths.checkpoint);
  write_loss_history(c.paths.loss_history, result.epoch_loss);
  if (!o.quiet) {
    std::cout << "trained " << result.epoch_loss.size() << " epochs on " << episodes.size() << " episodes"
              << (result.early_stopped ? " (early stop)" : "") << "; checkpoint " << c.paths.checkpoint << "\n";
  }
  return kExitOk;
}

std::string expand(std::string pattern, int k, std::uint64_t seed) {
  const auto replace = [&pattern](const std::string& key, const std::string& value) {
    for (std::size_t pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key, pos + value.size())) {
      pattern.replace(pos, key.size(), value);
    }
  };
  replace("{k}", std::to_string(k));
  replace("{seed}", std::to_string(seed));
  return pattern;
}

std::vector<int> parse_k_range(const std::string& text) {
  std::vector<int> ks;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const int lo = std::stoi(text.substr(0, dots));
      const int hi = std::stoi(text.substr(dots + 2));
      if (lo < 0 || hi < lo) {
        throw ConfigError("");
      }
      for (int k = lo; k <= hi; ++k) ks.push_back(k);
    } else {
      std::stringstream in(text);
      for (std::string part; std::getline(in, part, ',');) {
        ks.push_back(std::stoi(part));
      }
    }
  } catch (const std::exception&) {
    throw ConfigError("--k-sweep expects 'lo..hi' or a comma list, got '" + text + "'");
  }
  for (const int k : ks) {
    if (k < 0) throw ConfigError("--k-sweep values must be non-negative");
  }
  return ks;
}

int run_eval(const Options& o) {
  const RunConfig c = load_config(o);
  const fs::path dir = c.paths.data_dir;
  const Memory memory = load_memory(dir / "memory.store");
  const std::vector<MemoryEntry> queries = load_queries(dir / "test.store");
  const std::vector<int> ks = o.k_sweep ? parse_k_range(*o.k_sweep) : std::vector<int>{c.eval.k};

  std::map<int, std::vector<EvalReport>> by_k;
  nlohmann::json runs = nlohmann::json::array();
  for (const int k : ks) {
    for (const std::uint64_t seed : c.eval.seeds) {
      AlignmentModel model = load_checkpoint(expand(c.paths.checkpoint, k, seed));
      if (o.rule) {
        model.set_weighting(c.model.weighting);
      }
      EvalOptions opts;
      opts.k = k;
      opts.synonyms = c.synonym_table();
      opts.seed = seed;
      opts.variant = c.data.variant;
      EvalReport report = evaluate(model, queries, memory, opts);
      if (!o.quiet) {
        std::printf("k=%d seed=%llu rule=%s  MAE %.3f deg\n", k, static_cast<unsigned long long>(seed),
                    report.weighting.c_str(), report.overall_mae);
      }
      runs.push_back(report_to_json(report));
      by_k[k].push_back(std::move(report));
    }
  }
  const std::vector<KSweepRow> rows = k_sweep_table(by_k);
  nlohmann::json aggregate = nlohmann::json::array();
  for (const auto& r : rows) {
    aggregate.push_back({{"k", r.k}, {"mae", r.mae}, {"seeds", r.seeds}});
  }
  nlohmann::json doc{{"aggregate", aggregate}, {"runs", runs}};
  write_text(c.paths.report, doc.dump(2) + "\n");
  if (o.sweep_out) {
    write_k_sweep(*o.sweep_out, rows);
  }
  if (!o.quiet) {
    for (const auto& r : rows) {
      std::printf("aggregate k=%d  MAE %.3f deg over %d seed(s)\n", r.k, r.mae, r.seeds);
    }
  }
  return kExitOk;
}

int run_predict(const Options& o) {
  const RunConfig c = load_config(o);
  const AlignmentModel model = load_checkpoint(c.paths.checkpoint);
  const StoreContents scenes = read_store_file(o.scene);
  if (scenes.entries.empty()) {
    throw ConfigError("scene file '" + o.scene + "' holds no entries");
  }
  const MemoryEntry* query = &scenes.entries.front();
  if (o.scene_id) {
    query = nullptr;
    for (const auto& e : scenes.entries) {
      if (e.id == *o.scene_id) query = &e;
    }
    if (query == nullptr) {
      throw ConfigError("scene '" + *o.scene_id + "' not found in '" + o.scene + "'");
    }
  }
  const std::string task = o.task ? *o.task : query->task;
  const int k = c.eval.k;
  const fs::path memory_path = o.memory ? fs::path(*o.memory) : fs::path(c.paths.data_dir) / "memory.store";
  const Memory memory = load_memory(memory_path);

  // The contact always comes from the top-1 reference, even when K = 0.
  const RetrievalResult hits =
      memory.empty() ? RetrievalResult{}
                     : retrieve(memory, task, query->embedding, static_cast<std::size_t>(std::max(k, 1)),
                                c.synonym_table(), query->id);
  std::optional<Eigen::Vector2i> contact;
  if (!hits.empty()) {
    const MemoryEntry& top = memory[hits.front().entry];
    contact = transfer_contact(top.image, contact_pixel(top.affordance.contact), query->image);
  }
  std::vector<ReferenceInput> refs;
  for (std::size_t i = 0; i < hits.size() && static_cast<int>(i) < k; ++i) {
    const MemoryEntry& m = memory[hits[i].entry];
    refs.push_back({std::cref(m.image), m.affordance.direction, hits[i].similarity, static_cast<int>(i)});
  }
  const Prediction pred = model.predict(query->image, refs);
  if (pred.degenerate) {
    throw NumericError("prediction is degenerate (near-zero direction)");
  }

  nlohmann::json line{{"scene", query->id},
                      {"task", task},
                      {"k", refs.size()},
                      {"direction", {pred.direction.x(), pred.direction.y()}}};
  line["contact"] = contact ? nlohmann::json{contact->x(), contact->y()} : nlohmann::json(nullptr);
  std::optional<Affordance3D<double>> lifted;
  if (o.lift) {
    if (!contact) {
      throw NoCorrespondenceError("no contact to lift: memory has no candidate for task '" + task + "'");
    }
    const DepthRecord* depth = nullptr;
    for (const auto& d : scenes.depths) {
      if (d.id == query->id) depth = &d;
    }
    if (depth == nullptr) {
      throw ConfigError("scene file has no depth record for '" + query->id + "'");
    }
    lifted = lift_affordance<double>(contact->cast<double>(), pred.direction, depth->depth, depth->intrinsics);
    line["contact_3d"] = {lifted->contact.x(), lifted->contact.y(), lifted->contact.z()};
    line["direction_3d"] = {lifted->direction.x(), lifted->direction.y(), lifted->direction.z()};
  }
  std::cout << line.dump() << "\n";
  if (!o.quiet) {
    std::printf("scene %s (%s), %zu reference(s)\n", query->id.c_str(), task.c_str(), refs.size());
    if (contact) {
      std::printf("  contact   (%d, %d) px\n", contact->x(), contact->y());
    }
    std::printf("  direction (%.4f, %.4f)\n", pred.direction.x(), pred.direction.y());
    if (lifted) {
      std::printf("  contact3d (%.4f, %.4f, %.4f) m\n", lifted->contact.x(), lifted->contact.y(), lifted->contact.z());
      std::printf("  dir3d     (%.4f, %.4f, %.4f)\n", lifted->direction.x(), lifted->direction.y(),
                  lifted->direction.z());
    }
  }
  return kExitOk;
}

int exit_code_for(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const LeakageError& e) {
    std::cerr << "leakage: " << e.what() << "\n";
    return kExitLeakage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const NoSurfaceError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return kExitGeometry;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return kExitGeometry;
  } catch (const NoCorrespondenceError& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return kExitGeometry;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

std::string key_list() {
  std::string text = "Config file keys (JSON, flags override):\n";
  for (const auto& key : run_config_keys()) {
    text += "  " + key + "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented affordance prediction"};
  app.footer(key_list());
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_flag("--quiet", o.quiet, "Only print machine-readable output");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic split, memory and manifest");
  add_common(gen);
  gen->add_option("--variant", o.variant, "noiseless | noisy | reference-informative | noisy-reference-informative");
  gen->add_option("--tasks", o.tasks, "Tasks to generate (open close pickup)")->delimiter(',');
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--n-train", o.n_train, "Training scenes per task");
  gen->add_option("--n-test", o.n_test, "Test scenes per task");
  gen->add_option("--out", o.out, "Output directory");

  CLI::App* trn = app.add_subcommand("train", "Train the direction model");
  add_common(trn);
  trn->add_option("--data", o.data_dir, "Directory with memory.store and train.store");
  trn->add_option("--out-checkpoint", o.checkpoint, "Checkpoint to write");
  trn->add_option("--loss-history", o.loss_history, "Per-epoch loss CSV to write");
  trn->add_option("--k", o.k, "References per episode");
  trn->add_option("--epochs", o.epochs, "Maximum epochs");
  trn->add_option("--lr", o.lr, "Learning rate");
  trn->add_option("--seed", o.seed, "Episode, initialization and shuffling seed");
  trn->add_option("--variant-rule", o.rule, "full | no_gating | no_similarity | uniform");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate checkpoints on the test split");
  add_common(ev);
  ev->add_option("--data", o.data_dir, "Directory with memory.store and test.store");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path; {k} and {seed} are substituted");
  ev->add_option("--k", o.k, "References per query");
  ev->add_option("--variant-rule", o.rule, "full | no_gating | no_similarity | uniform");
  ev->add_option("--seeds", o.seeds, "Seeds (one checkpoint per seed)")->delimiter(',');
  ev->add_option("--k-sweep", o.k_sweep, "K range such as 0..4");
  ev->add_option("--report", o.report, "JSON report to write");
  ev->add_option("--sweep-out", o.sweep_out, "k,mae,seeds CSV to write");

  CLI::App* pred = app.add_subcommand("predict", "Predict contact and direction for one scene");
  add_common(pred);
  pred->add_option("--checkpoint", o.checkpoint, "Checkpoint to load");
  pred->add_option("--scene", o.scene, "Store file holding the scene")->required();
  pred->add_option("--scene-id", o.scene_id, "Scene id (default: first entry)");
  pred->add_option("--memory", o.memory, "Memory store");
  pred->add_option("--task", o.task, "Task label (default: the scene's)");
  pred->add_option("--k", o.k, "References for the direction model");
  pred->add_flag("--lift", o.lift, "Also lift the affordance to 3D");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gen) return run_gen(o);
    if (*trn) return run_train(o);
    if (*ev) return run_eval(o);
    if (*pred) return run_predict(o);
  } catch (...) {
    return exit_code_for(std::current_exception());
  }
  return kExitInput;
}
