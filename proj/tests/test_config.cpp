#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#undef CHECK  // torch defines a glog-style CHECK
#include <doctest.h>

#include "morphaeus/config.hpp"

#include <fstream>

using namespace morphaeus;
namespace fs = std::filesystem;

namespace {

const char* kSample = R"(# sample
[experiment]
kind = ood
name = smoke
models = morphaeus, spatial-ae
seeds = 0, 1, 2

[data]
resolution = 64
root = data/mednist

[train]
max_epochs = 30
learning_rate = 5e-4
deterministic = true
)";

}  // namespace

TEST_CASE("typed access to parsed values") {
  auto cfg = Config::from_string(kSample, "sample.cfg");
  CHECK(cfg.get_string("experiment.kind") == "ood");
  CHECK(cfg.get_list("experiment.models") == std::vector<std::string>{"morphaeus", "spatial-ae"});
  CHECK(cfg.get_int_list("experiment.seeds") == std::vector<int>{0, 1, 2});
  CHECK(cfg.get_int("data.resolution") == 64);
  CHECK(cfg.get_real("train.learning_rate") == 5e-4);
  CHECK(cfg.get_bool("train.deterministic"));
  CHECK(cfg.get_int("train.batch_size", 16) == 16);
  CHECK_FALSE(cfg.has("train.batch_size"));
  CHECK(cfg.keys_in("train") == std::vector<std::string>{"deterministic", "learning_rate", "max_epochs"});
}

TEST_CASE("unknown keys name the file, line and known keys") {
  const std::string text = "[train]\nmax_epochs = 3\nlerning_rate = 0.1\n";
  CHECK_THROWS_WITH_AS(Config::from_string(text, "bad.cfg"), doctest::Contains("bad.cfg:3"), ConfigError);
  CHECK_THROWS_WITH_AS(Config::from_string(text, "bad.cfg"), doctest::Contains("learning_rate"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("[nosuch]\nkey = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("orphan = 1\n"), ConfigError);
}

TEST_CASE("values are type-checked") {
  CHECK_THROWS_WITH_AS(Config::from_string("[data]\nresolution = big\n", "t.cfg"), doctest::Contains("t.cfg:2"),
                       ConfigError);
  CHECK_THROWS_AS(Config::from_string("[train]\ndeterministic = maybe\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("[experiment]\nseeds = 1, x\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("[train]\nlearning_rate = fast\n"), ConfigError);
}

TEST_CASE("overrides") {
  auto cfg = Config::from_string(kSample);
  cfg.apply_overrides({"train.max_epochs=5", "seed=7", "data.resolution = 32"});
  CHECK(cfg.get_int("train.max_epochs") == 5);
  CHECK(cfg.get_int("train.seed") == 7);
  CHECK(cfg.get_int("data.resolution") == 32);
  CHECK_THROWS_WITH_AS(cfg.apply_override("max_epochs=3"), doctest::Contains("ambiguous"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("train.max_epochs"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("train.max_epochs=many"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("train.nope=1"), ConfigError);
}

TEST_CASE("dump is canonical and hashes change with content") {
  auto a = Config::from_string(kSample);
  auto b = Config::from_string(a.dump());
  CHECK(a.dump() == b.dump());
  CHECK(a.hash() == b.hash());
  b.apply_override("train.max_epochs=31");
  CHECK(a.hash() != b.hash());
  CHECK(a.dump().find("[data]") < a.dump().find("[experiment]"));
}

TEST_CASE("relative paths resolve against the config file") {
  auto dir = fs::temp_directory_path() / ("morphaeus_cfg_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream(dir / "run.cfg") << kSample;
  }
  auto cfg = Config::from_file(dir / "run.cfg");
  CHECK(cfg.get_path("data.root") == fs::absolute(dir) / "data/mednist");
  CHECK(cfg.origin() == (dir / "run.cfg").string());
  CHECK_THROWS_AS(Config::from_file(dir / "missing.cfg"), ConfigError);
  fs::remove_all(dir);
}
