#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "camelion/config.hpp"
#include "camelion/error.hpp"
#include "camelion/random.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace camelion;
using nlohmann::json;

namespace {

// Dotted paths of every scalar or array leaf.
void leaves(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) leaves(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.emplace_back(prefix, j);
  }
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c = default_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.n_atlas == 10);
  CHECK(c.n_test == 8);
  CHECK(c.loop.max_iterations == 5);
  CHECK(c.loop.change_threshold == 0.05);
  CHECK(c.loop.synth.learning_rate == 0.001);
  CHECK(c.loop.synth.epochs == 20);
  CHECK(c.loop.seg.prior_epsilon == 0.01);
  CHECK(c.phantom.base_dims == std::array<std::uint32_t, 3>{48, 48, 48});
  CHECK(c.phantom.supersample == 4);
  CHECK(c.phantom.shape_jitter == 0.05);
  CHECK_FALSE(c.include_csf);
}

TEST_CASE("JSON round trip") {
  const std::string text = config_to_json(default_config());
  CHECK(config_to_json(config_from_json(text)) == text);
  RunConfig c = default_config();
  c.loop.synth.backend = SynthBackend::Regressor;
  c.loop.pv.sigma_mode = SigmaMode::PerClassMin;
  c.protocol_b.gamma = 1.7;
  c.include_csf = true;
  const std::string changed = config_to_json(c);
  CHECK(changed != text);
  CHECK(config_to_json(config_from_json(changed)) == changed);
}

TEST_CASE("every documented key is accepted and round-trips") {
  const json doc = json::parse(config_to_json(default_config()));
  std::vector<std::pair<std::string, json>> keys;
  leaves(doc, "", keys);
  CHECK(keys.size() >= 25);
  for (const auto& [key, value] : keys) {
    RunConfig c = default_config();
    CHECK_NOTHROW(apply_override(c, key + "=" + value.dump()));
    CHECK_MESSAGE(config_to_json(c) == config_to_json(default_config()), key);
  }
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(config_from_json(R"({"sed": 1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"loop": {"max_iteration": 3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"loop": {"max_iterations": "three"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"loop": {"max_iterations": 0}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"synth": {"backend": "unet"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"phantom": {"shape_jitter": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("not json"), ConfigError);
  RunConfig c = default_config();
  CHECK_THROWS_AS(apply_override(c, "loop.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "=3"), ConfigError);
}

TEST_CASE("overrides") {
  RunConfig c = default_config();
  apply_override(c, "loop.max_iterations=3");
  apply_override(c, "synth.backend=regressor");
  apply_override(c, "pv.beta=0.25");
  apply_override(c, "phantom.base_dims=[16,16,16]");
  CHECK(c.loop.max_iterations == 3);
  CHECK(c.loop.synth.backend == SynthBackend::Regressor);
  CHECK(c.loop.pv.beta == 0.25);
  CHECK(c.phantom.base_dims == std::array<std::uint32_t, 3>{16, 16, 16});
  // Partial documents layer over a base.
  const RunConfig d = config_from_json(R"({"loop": {"change_threshold": 0.02}})", c);
  CHECK(d.loop.change_threshold == 0.02);
  CHECK(d.loop.max_iterations == 3);
}

TEST_CASE("seed propagation") {
  RunConfig c = default_config();
  CHECK(c.phantom.seed == 20201);
  CHECK(c.loop.seed == 20201);
  c.seed = 5;
  c.propagate_seed();
  CHECK(c.phantom.seed == 5);
  CHECK(c.loop.seed == 5);
  CHECK(c.loop.synth.seed == hash_counter(5, 0x5F17));
  const RunConfig d = config_from_json(R"({"seed": 9})");
  CHECK(d.phantom.seed == 9);
  CHECK(d.loop.seed == 9);
}

TEST_CASE("config files") {
  const auto dir = std::filesystem::temp_directory_path() / ("camelion_config_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "c.json") << R"({"loop": {"max_iterations": 2}, "eval": {"include_csf": true}})";
  }
  const RunConfig c = load_config(dir / "c.json");
  CHECK(c.loop.max_iterations == 2);
  CHECK(c.include_csf);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
  std::filesystem::remove_all(dir);
}
