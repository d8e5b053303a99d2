#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "murax/config.h"

namespace fs = std::filesystem;
using namespace murax;

namespace {

fs::path write_config(const std::string& name, const std::string& body) {
  fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("profile defaults") {
  RunConfig desk = resolve_config("desk", "", {});
  CHECK(desk.model == DenseNetConfig::desk());
  CHECK(desk.preprocess.side == 64);
  CHECK(desk.train.batch_size == 8);
  CHECK(desk.train.lr0 == doctest::Approx(1e-4));
  CHECK(desk.train.warmup_epochs == 5);

  RunConfig full = resolve_config("full", "", {});
  CHECK(full.model == DenseNetConfig::full());
  CHECK(full.preprocess.side == 224);
  CHECK(conv_layer_count(full.model) == 169);

  CHECK_THROWS_AS(resolve_config("tiny", "", {}), std::runtime_error);
}

TEST_CASE("precedence: flag > file > default") {
  fs::path file = write_config("murax_cfg_prec.json",
                               R"({"train": {"batch_size": 4, "lr0": 0.01}})");
  RunConfig file_only = resolve_config("desk", file.string(), {});
  CHECK(file_only.train.batch_size == 4);
  CHECK(file_only.train.lr0 == doctest::Approx(0.01));
  CHECK(file_only.train.lr_decay_every == 6);  // untouched default

  RunConfig with_flag =
      resolve_config("desk", file.string(), {{"train.batch_size", "16"}});
  CHECK(with_flag.train.batch_size == 16);          // flag beats file
  CHECK(with_flag.train.lr0 == doctest::Approx(0.01));  // file beats default
}

TEST_CASE("precedence holds per key across sections") {
  fs::path file = write_config(
      "murax_cfg_keys.json",
      R"({"augment": {"flip_prob": 0.25}, "preprocess": {"margin_frac": 0.05},
          "model": {"growth_rate": 16}, "eval": {"batch_size": 4}})");
  std::map<std::string, std::string> flags = {{"augment.flip_prob", "0.75"},
                                              {"model.growth_rate", "20"}};
  RunConfig c = resolve_config("desk", file.string(), flags);
  CHECK(c.augment.flip_prob == doctest::Approx(0.75));
  CHECK(c.preprocess.margin_frac == doctest::Approx(0.05));
  CHECK(c.model.growth_rate == 20);
  CHECK(c.eval.batch_size == 4);
}

TEST_CASE("unknown key rejected") {
  CHECK_THROWS_AS(resolve_config("desk", "", {{"train.bogus", "1"}}), std::runtime_error);
  fs::path file = write_config("murax_cfg_unknown.json", R"({"nope": {"x": 1}})");
  CHECK_THROWS_AS(resolve_config("desk", file.string(), {}), std::runtime_error);
}

TEST_CASE("invalid values rejected") {
  CHECK_THROWS_AS(resolve_config("desk", "", {{"augment.flip_prob", "1.5"}}),
                  std::runtime_error);
  CHECK_THROWS_AS(resolve_config("desk", "", {{"train.batch_size", "0"}}),
                  std::runtime_error);
  CHECK_THROWS_AS(resolve_config("desk", "", {{"train.batch_size", "eight"}}),
                  std::runtime_error);
}

TEST_CASE("model input side follows preprocess side unless pinned") {
  RunConfig c = resolve_config("desk", "", {{"preprocess.side", "32"}});
  CHECK(c.model.input_side == 32);
  CHECK_THROWS_AS(
      resolve_config("desk", "", {{"preprocess.side", "32"}, {"model.input_side", "64"}}),
      std::runtime_error);
  RunConfig ok = resolve_config(
      "desk", "", {{"preprocess.side", "32"}, {"model.input_side", "32"}});
  CHECK(ok.model.input_side == 32);
}

TEST_CASE("resolved lines are sorted flat key=value and hash is stable") {
  RunConfig a = resolve_config("desk", "", {});
  auto lines = resolved_lines(a);
  CHECK(std::is_sorted(lines.begin(), lines.end()));
  for (const auto& l : lines) CHECK(l.find('=') != std::string::npos);
  CHECK(config_hash(a) == config_hash(resolve_config("desk", "", {})));
  CHECK(config_hash(a) != config_hash(resolve_config("desk", "", {{"train.seed", "8"}})));
}

TEST_CASE("auto loss weights accepted") {
  RunConfig c = resolve_config("desk", "", {{"train.pos_weight", "auto"}});
  CHECK(c.train.pos_weight < 0);
  RunConfig d = resolve_config("desk", "", {{"train.pos_weight", "2.5"}});
  CHECK(d.train.pos_weight == doctest::Approx(2.5));
}

}  // TEST_SUITE
