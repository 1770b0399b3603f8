#include "camelion/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "camelion/error.hpp"
#include "camelion/harmonizer.hpp"
#include "camelion/random.hpp"

namespace camelion {

using nlohmann::ordered_json;

RunConfig::RunConfig() : nhm_percentiles(default_percentiles()) { propagate_seed(); }

void RunConfig::propagate_seed() {
  phantom.seed = seed;
  loop.seed = seed;
  loop.synth.seed = hash_counter(seed, 0x5F17);
}

void RunConfig::validate() const {
  try {
    phantom.validate();
    protocol_a.validate();
    protocol_b.validate();
    loop.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (n_atlas < 1 || n_test < 1) throw ConfigError("n_atlas and n_test must be >= 1");
  if (nhm_reference_atlas < 0 || nhm_reference_atlas >= n_atlas)
    throw ConfigError("nhm.reference_atlas must index an atlas subject");
  if (nhm_percentiles.size() < 2) throw ConfigError("nhm.percentiles needs at least two entries");
  for (std::size_t i = 0; i < nhm_percentiles.size(); ++i) {
    if (!(nhm_percentiles[i] > 0.0 && nhm_percentiles[i] < 100.0)) throw ConfigError("nhm.percentiles must lie in (0, 100)");
    if (i > 0 && !(nhm_percentiles[i] > nhm_percentiles[i - 1]))
      throw ConfigError("nhm.percentiles must be strictly increasing");
  }
}

RunConfig default_config() { return RunConfig{}; }

namespace {

ordered_json protocol_json(const ProtocolParams& p) {
  ordered_json j;
  j["class_means"] = p.class_means;
  j["noise_sigma"] = p.noise_sigma;
  j["gamma"] = p.gamma;
  j["bias_amplitude"] = p.bias_amplitude;
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["phantom"] = {{"base_dims", c.phantom.base_dims},
                  {"voxel_size", c.phantom.voxel_size},
                  {"supersample", c.phantom.supersample},
                  {"shape_jitter", c.phantom.shape_jitter},
                  {"n_atlas", c.n_atlas},
                  {"n_test", c.n_test}};
  j["protocol_a"] = protocol_json(c.protocol_a);
  j["protocol_b"] = protocol_json(c.protocol_b);
  j["segmenter"] = {{"prior_epsilon", c.loop.seg.prior_epsilon},
                    {"smoothing_weight", c.loop.seg.smoothing_weight},
                    {"prior_radius", c.loop.seg.prior_radius}};
  j["pv"] = {{"beta", c.loop.pv.beta},
             {"sigma_mode", c.loop.pv.sigma_mode == SigmaMode::Pooled ? "pooled" : "per-class-min"}};
  j["synth"] = {{"backend", c.loop.synth.backend == SynthBackend::Linear ? "linear" : "regressor"},
                {"patch_radius", c.loop.synth.patch_radius},
                {"hidden_units", c.loop.synth.hidden_units},
                {"epochs", c.loop.synth.epochs},
                {"batch_size", c.loop.synth.batch_size},
                {"learning_rate", c.loop.synth.learning_rate},
                {"inject_noise", c.loop.synth.inject_noise}};
  j["loop"] = {{"max_iterations", c.loop.max_iterations}, {"change_threshold", c.loop.change_threshold}};
  j["nhm"] = {{"percentiles", c.nhm_percentiles}, {"reference_atlas", c.nhm_reference_atlas}};
  j["eval"] = {{"include_csf", c.include_csf}};
  return j;
}

// Walks `patch` against the shape of `schema`, rejecting keys the schema lacks.
void check_keys(const ordered_json& patch, const ordered_json& schema, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const auto& s = schema[it.key()];
    if (s.is_object()) check_keys(it.value(), s, key);
  }
}

template <class T>
void read(const ordered_json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

void read_protocol(const ordered_json& j, const char* key, ProtocolParams& p) {
  if (!j.contains(key)) return;
  const auto& s = j.at(key);
  read(s, "class_means", p.class_means, key);
  read(s, "noise_sigma", p.noise_sigma, key);
  read(s, "gamma", p.gamma, key);
  read(s, "bias_amplitude", p.bias_amplitude, key);
}

RunConfig from_json(const ordered_json& j, RunConfig c) {
  check_keys(j, to_json(c), "");
  const bool seed_given = j.contains("seed");
  read(j, "seed", c.seed, "");
  if (j.contains("phantom")) {
    const auto& s = j.at("phantom");
    read(s, "base_dims", c.phantom.base_dims, "phantom");
    read(s, "voxel_size", c.phantom.voxel_size, "phantom");
    read(s, "supersample", c.phantom.supersample, "phantom");
    read(s, "shape_jitter", c.phantom.shape_jitter, "phantom");
    read(s, "n_atlas", c.n_atlas, "phantom");
    read(s, "n_test", c.n_test, "phantom");
  }
  read_protocol(j, "protocol_a", c.protocol_a);
  read_protocol(j, "protocol_b", c.protocol_b);
  if (j.contains("segmenter")) {
    const auto& s = j.at("segmenter");
    read(s, "prior_epsilon", c.loop.seg.prior_epsilon, "segmenter");
    read(s, "smoothing_weight", c.loop.seg.smoothing_weight, "segmenter");
    read(s, "prior_radius", c.loop.seg.prior_radius, "segmenter");
  }
  if (j.contains("pv")) {
    const auto& s = j.at("pv");
    read(s, "beta", c.loop.pv.beta, "pv");
    std::string mode;
    read(s, "sigma_mode", mode, "pv");
    if (mode == "pooled") {
      c.loop.pv.sigma_mode = SigmaMode::Pooled;
    } else if (mode == "per-class-min") {
      c.loop.pv.sigma_mode = SigmaMode::PerClassMin;
    } else if (!mode.empty()) {
      throw ConfigError("pv.sigma_mode must be 'pooled' or 'per-class-min'");
    }
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    std::string backend;
    read(s, "backend", backend, "synth");
    if (backend == "linear") {
      c.loop.synth.backend = SynthBackend::Linear;
    } else if (backend == "regressor") {
      c.loop.synth.backend = SynthBackend::Regressor;
    } else if (!backend.empty()) {
      throw ConfigError("synth.backend must be 'linear' or 'regressor'");
    }
    read(s, "patch_radius", c.loop.synth.patch_radius, "synth");
    read(s, "hidden_units", c.loop.synth.hidden_units, "synth");
    read(s, "epochs", c.loop.synth.epochs, "synth");
    read(s, "batch_size", c.loop.synth.batch_size, "synth");
    read(s, "learning_rate", c.loop.synth.learning_rate, "synth");
    read(s, "inject_noise", c.loop.synth.inject_noise, "synth");
  }
  if (j.contains("loop")) {
    const auto& s = j.at("loop");
    read(s, "max_iterations", c.loop.max_iterations, "loop");
    read(s, "change_threshold", c.loop.change_threshold, "loop");
  }
  if (j.contains("nhm")) {
    const auto& s = j.at("nhm");
    read(s, "percentiles", c.nhm_percentiles, "nhm");
    read(s, "reference_atlas", c.nhm_reference_atlas, "nhm");
  }
  if (j.contains("eval")) read(j.at("eval"), "include_csf", c.include_csf, "eval");
  if (seed_given) c.propagate_seed();
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text, RunConfig base) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j, std::move(base));
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  ordered_json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    ordered_json wrapped;
    wrapped[*it] = std::move(patch);
    patch = std::move(wrapped);
  }
  cfg = from_json(patch, cfg);
}

}  // namespace camelion
