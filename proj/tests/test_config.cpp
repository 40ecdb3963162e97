#include "doctest.h"

#include "msm/config.hpp"

#include <filesystem>

using namespace msm;

TEST_CASE("defaults") {
  const RunConfig c = RunConfig::parse("");
  CHECK(c.model.embed_dim == 16);
  CHECK(c.model.num_queries == 8);
  CHECK(c.model.num_layers == 6);
  CHECK(c.model.kappa == 20.0);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.batch_size == 4);
  CHECK(c.train.iterations == 3000);
  CHECK(c.eval.score_threshold == 0.7);
}

TEST_CASE("parsing") {
  const RunConfig c = RunConfig::parse(R"(
# comment
[model]
num_layers = 2   # trailing comment
kappa = 12.5
use_mask = false

[data]
height = 32
)");
  CHECK(c.model.num_layers == 2);
  CHECK(c.model.kappa == 12.5);
  CHECK_FALSE(c.model.use_mask);
  CHECK(c.data.height == 32);
}

TEST_CASE("later keys override earlier ones") {
  const RunConfig c = RunConfig::parse("[train]\nlr = 1\n[train]\nlr = 2\n");
  CHECK(c.train.lr == 2.0);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(RunConfig::parse("[model]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[model]\nnum_layers = two\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[model]\nnum_layers = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[model]\nuse_mask = maybe\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("num_layers = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[model\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("text round trip") {
  RunConfig c;
  c.model.kappa = 0.1;
  c.train.data_dir = "some/where";
  c.data.noise_std = 1.0 / 3.0;
  c.eval.refine = true;
  const RunConfig back = RunConfig::parse(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.model.kappa == 0.1);
  CHECK(back.data.noise_std == 1.0 / 3.0);
  CHECK(back.train.data_dir == "some/where");
  CHECK(back.eval.refine);

  const auto path = std::filesystem::temp_directory_path() / "msm_test_config.txt";
  c.save(path);
  CHECK(RunConfig::load(path).to_text() == c.to_text());
  std::filesystem::remove(path);
}
