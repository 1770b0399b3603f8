#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "camelion/phantom.hpp"
#include "camelion/pipeline.hpp"

namespace camelion {

/// Everything a command needs besides paths.
struct RunConfig {
  std::uint64_t seed = 20201;
  PhantomParams phantom;
  int n_atlas = 10;
  int n_test = 8;
  ProtocolParams protocol_a = default_protocol_a();
  ProtocolParams protocol_b = default_protocol_b();
  LoopConfig loop;
  std::vector<double> nhm_percentiles;
  int nhm_reference_atlas = 0;
  bool include_csf = false;

  RunConfig();
  /// Pushes the top-level seed into the phantom, loop and synthesis seeds.
  void propagate_seed();
  /// ConfigError on any invalid value.
  void validate() const;
};

RunConfig default_config();

/// Serializes as nested JSON with a fixed key order.
std::string config_to_json(const RunConfig& cfg);

/// Parses a (possibly partial) JSON config on top of `base`. Unknown keys and
/// ill-typed values raise ConfigError.
RunConfig config_from_json(const std::string& text, RunConfig base = default_config());
RunConfig load_config(const std::filesystem::path& path, RunConfig base = default_config());

/// Applies one "dotted.key=value" override, value parsed as JSON
/// (bare words are taken as strings).
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace camelion
