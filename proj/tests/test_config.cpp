#include <catch_amalgamated.hpp>

#include <sstream>

#include "sitvos/config.hpp"

using namespace sitvos;

TEST_CASE("config parsing", "[config]") {
  std::istringstream in(
      "# experiment setup\n"
      "model.channels = 32\n"
      "train.base_lr = 1e-4   # override\n"
      "memory.policy = fixed-n:7\n"
      "\n"
      "pipeline.soft_merge = true\n");
  ConfigMap cfg = ConfigMap::parse(in);
  CHECK(cfg.get_int("model.channels", 0) == 32);
  CHECK(cfg.get_double("train.base_lr", 0) == 1e-4);
  CHECK(cfg.get_string("memory.policy", "") == "fixed-n:7");
  CHECK(cfg.get_bool("pipeline.soft_merge", false) == true);
  CHECK(cfg.get_int("train.max_steps", 123) == 123);  // fallback
  CHECK(cfg.has("model.channels"));
  CHECK(!cfg.has("model.width"));
}

TEST_CASE("config format errors", "[config]") {
  {
    std::istringstream in("model.channels 32\n");
    CHECK_THROWS_AS(ConfigMap::parse(in), FormatError);
  }
  {
    std::istringstream in("= 5\n");
    CHECK_THROWS_AS(ConfigMap::parse(in), FormatError);
  }
  {
    std::istringstream in("a = not_a_number\n");
    ConfigMap cfg = ConfigMap::parse(in);
    CHECK_THROWS_AS(cfg.get_double("a", 0), FormatError);
    CHECK_THROWS_AS(cfg.get_int("a", 0), FormatError);
    CHECK_THROWS_AS(cfg.get_bool("a", false), FormatError);
  }
  CHECK_THROWS_AS(ConfigMap::load("no_such_config.cfg"), IoError);
}

TEST_CASE("unknown keys are a startup error", "[config]") {
  std::istringstream in("model.channels = 32\ntrain.base_lr = 1e-4\nmodle.channels = 16\n");
  ConfigMap cfg = ConfigMap::parse(in);
  CHECK_NOTHROW(cfg.require_known({"model.channels", "train.base_lr", "modle.channels"}));
  CHECK_THROWS_AS(cfg.require_known({"model.channels", "train.base_lr"}), ContractError);
}

TEST_CASE("overrides win over file values", "[config]") {
  std::istringstream in("train.base_lr = 1e-4\n");
  ConfigMap cfg = ConfigMap::parse(in);
  cfg.set("train.base_lr", "5e-3");
  cfg.set("train.max_steps", "10");
  CHECK(cfg.get_double("train.base_lr", 0) == 5e-3);
  CHECK(cfg.get_int("train.max_steps", 0) == 10);
}
