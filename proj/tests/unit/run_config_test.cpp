#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "raap/errors.hpp"
#include "raap/run_config.hpp"

namespace raap {
namespace {

TEST(RunConfig, DefaultsValidate) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.train.k, 3);
  EXPECT_EQ(c.train.learning_rate, 3e-4);
  EXPECT_EQ(c.data.n_train, 70);
  EXPECT_EQ(c.data.n_test, 30);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c;
  c.model.d = 48;
  c.model.weighting = WeightingRule::kUniform;
  c.model.coupling = AttentionCoupling::kPerReference;
  c.train.k = 2;
  c.train.seed = 9;
  c.train.flip_references = false;
  c.data.variant = "noisy";
  c.data.tasks = {"open"};
  c.eval.seeds = {1, 2, 3};
  c.synonyms = {{"open", "pull open"}};
  c.paths.report = "out/r.json";
  const RunConfig back = parse_run_config(run_config_to_json(c));
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train, c.train);
  EXPECT_EQ(back.data.variant, "noisy");
  EXPECT_EQ(back.data.tasks, c.data.tasks);
  EXPECT_EQ(back.eval.seeds, c.eval.seeds);
  EXPECT_EQ(back.synonyms, c.synonyms);
  EXPECT_EQ(back.paths.report, "out/r.json");
}

TEST(RunConfig, PartialDocumentKeepsDefaults) {
  const RunConfig c = parse_run_config(nlohmann::json::parse(R"({"train": {"k": 1}})"));
  EXPECT_EQ(c.train.k, 1);
  EXPECT_EQ(c.model, ModelConfig{});
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"trian": {}})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"train": {"kk": 1}})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"train": {"k": "three"}})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"model": {"weighting": "best"}})")), ConfigError);
  RunConfig c;
  c.data.variant = "foggy";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, FileLoading) {
  const auto path = std::filesystem::temp_directory_path() / "raap_config.json";
  {
    std::ofstream out(path);
    out << R"({"eval": {"k": 4, "seeds": [5]}})";
  }
  const RunConfig c = load_run_config(path);
  EXPECT_EQ(c.eval.k, 4);
  EXPECT_EQ(c.eval.seeds, std::vector<std::uint64_t>{5});
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(load_run_config(path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_run_config(path), ConfigError);
}

TEST(RunConfig, KeyListCoversSections) {
  const auto keys = run_config_keys();
  for (const std::string k : {"model.d", "train.k", "data.variant", "eval.seeds", "paths.report"}) {
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
  }
}

}  // namespace
}  // namespace raap
