#include "raap/run_config.hpp"

#include <fstream>

#include "raap/checkpoint.hpp"
#include "raap/errors.hpp"
#include "raap/synthgen.hpp"

namespace raap {

namespace {

template <typename T>
T get_as(const nlohmann::json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + ": wrong type (" + value.dump() + ")");
  }
}

const nlohmann::json& section(const nlohmann::json& doc, const char* name) {
  static const nlohmann::json empty = nlohmann::json::object();
  const auto it = doc.find(name);
  if (it == doc.end()) {
    return empty;
  }
  if (!it->is_object()) {
    throw ConfigError(std::string(name) + ": expected an object");
  }
  return *it;
}

const std::vector<std::string> kTrainKeys{"k",          "candidate_pool", "episodes_per_query", "max_epochs",
                                          "patience",   "learning_rate",  "batch_size",         "seed",
                                          "flip_probability", "flip_references", "min_improvement"};
const std::vector<std::string> kDataKeys{"variant", "tasks", "n_train", "n_test", "seed"};
const std::vector<std::string> kEvalKeys{"k", "seeds"};
const std::vector<std::string> kPathKeys{"data_dir", "checkpoint", "loss_history", "report"};

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  BenchmarkVariant::parse(data.variant);
  if (data.n_train < 1 || data.n_test < 1) {
    throw ConfigError("data: n_train and n_test must be at least 1");
  }
  if (data.tasks.empty()) {
    throw ConfigError("data.tasks must not be empty");
  }
  if (eval.k < 0 || eval.k > model.k_max) {
    throw ConfigError("eval.k must lie in [0, model.k_max]");
  }
  if (train.k > model.k_max) {
    throw ConfigError("train.k exceeds model.k_max");
  }
  if (eval.seeds.empty()) {
    throw ConfigError("eval.seeds must not be empty");
  }
  (void)synonym_table();
}

RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ConfigError("run config must be a JSON object");
  }
  for (const auto& [key, _] : doc.items()) {
    if (key != "model" && key != "train" && key != "data" && key != "retrieval" && key != "eval" && key != "paths") {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  RunConfig c;
  for (const auto& [key, value] : section(doc, "model").items()) {
    const std::string text = value.is_string() ? value.get<std::string>() : value.dump();
    try {
      set_model_config_field(c.model, key, text);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()));
    }
  }
  for (const auto& [key, value] : section(doc, "train").items()) {
    const std::string where = "train." + key;
    auto& t = c.train;
    if (key == "k") t.k = get_as<int>(value, where);
    else if (key == "candidate_pool") t.candidate_pool = get_as<int>(value, where);
    else if (key == "episodes_per_query") t.episodes_per_query = get_as<int>(value, where);
    else if (key == "max_epochs") t.max_epochs = get_as<int>(value, where);
    else if (key == "patience") t.patience = get_as<int>(value, where);
    else if (key == "learning_rate") t.learning_rate = get_as<double>(value, where);
    else if (key == "batch_size") t.batch_size = get_as<int>(value, where);
    else if (key == "seed") t.seed = get_as<std::uint64_t>(value, where);
    else if (key == "flip_probability") t.flip_probability = get_as<double>(value, where);
    else if (key == "flip_references") t.flip_references = get_as<bool>(value, where);
    else if (key == "min_improvement") t.min_improvement = get_as<double>(value, where);
    else throw ConfigError("unknown key '" + where + "'");
  }
  for (const auto& [key, value] : section(doc, "data").items()) {
    const std::string where = "data." + key;
    auto& d = c.data;
    if (key == "variant") d.variant = get_as<std::string>(value, where);
    else if (key == "tasks") d.tasks = get_as<std::vector<std::string>>(value, where);
    else if (key == "n_train") d.n_train = get_as<int>(value, where);
    else if (key == "n_test") d.n_test = get_as<int>(value, where);
    else if (key == "seed") d.seed = get_as<std::uint64_t>(value, where);
    else throw ConfigError("unknown key '" + where + "'");
  }
  for (const auto& [key, value] : section(doc, "retrieval").items()) {
    if (key == "synonyms") {
      c.synonyms = get_as<std::vector<std::vector<std::string>>>(value, "retrieval.synonyms");
    } else {
      throw ConfigError("unknown key 'retrieval." + key + "'");
    }
  }
  for (const auto& [key, value] : section(doc, "eval").items()) {
    const std::string where = "eval." + key;
    if (key == "k") c.eval.k = get_as<int>(value, where);
    else if (key == "seeds") c.eval.seeds = get_as<std::vector<std::uint64_t>>(value, where);
    else throw ConfigError("unknown key '" + where + "'");
  }
  for (const auto& [key, value] : section(doc, "paths").items()) {
    const std::string where = "paths." + key;
    auto& p = c.paths;
    if (key == "data_dir") p.data_dir = get_as<std::string>(value, where);
    else if (key == "checkpoint") p.checkpoint = get_as<std::string>(value, where);
    else if (key == "loss_history") p.loss_history = get_as<std::string>(value, where);
    else if (key == "report") p.report = get_as<std::string>(value, where);
    else throw ConfigError("unknown key '" + where + "'");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config '" + path.string() + "'");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_run_config(doc);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json model = nlohmann::json::object();
  for (const auto& [key, value] : model_config_fields(c.model)) {
    if (key == "weighting" || key == "coupling") {
      model[key] = value;
    } else {
      model[key] = nlohmann::json::parse(value);
    }
  }
  const auto& t = c.train;
  return {{"model", model},
          {"train",
           {{"k", t.k},
            {"candidate_pool", t.candidate_pool},
            {"episodes_per_query", t.episodes_per_query},
            {"max_epochs", t.max_epochs},
            {"patience", t.patience},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"seed", t.seed},
            {"flip_probability", t.flip_probability},
            {"flip_references", t.flip_references},
            {"min_improvement", t.min_improvement}}},
          {"data",
           {{"variant", c.data.variant},
            {"tasks", c.data.tasks},
            {"n_train", c.data.n_train},
            {"n_test", c.data.n_test},
            {"seed", c.data.seed}}},
          {"retrieval", {{"synonyms", c.synonyms}}},
          {"eval", {{"k", c.eval.k}, {"seeds", c.eval.seeds}}},
          {"paths",
           {{"data_dir", c.paths.data_dir},
            {"checkpoint", c.paths.checkpoint},
            {"loss_history", c.paths.loss_history},
            {"report", c.paths.report}}}};
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, _] : model_config_fields(ModelConfig{})) {
    keys.push_back("model." + key);
  }
  for (const auto& k : kTrainKeys) keys.push_back("train." + k);
  for (const auto& k : kDataKeys) keys.push_back("data." + k);
  keys.push_back("retrieval.synonyms");
  for (const auto& k : kEvalKeys) keys.push_back("eval." + k);
  for (const auto& k : kPathKeys) keys.push_back("paths." + k);
  return keys;
}

}  // namespace raap
