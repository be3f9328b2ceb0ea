#include "tvu/harness/config.hpp"

#include <fstream>
#include <vector>
#include <functional>
#include <map>

namespace tvu::harness {
namespace {

using nlohmann::json;

// Binds JSON keys of one block to struct fields.
class Block {
 public:
  explicit Block(std::string name) : name_(std::move(name)) {}

  template <typename T>
  Block& field(const std::string& key, T& value) {
    readers_[key] = [full = path(key), &value](const json& j) {
      try {
        value = j.get<T>();
      } catch (const json::exception&) {
        throw ConfigError(full + ": wrong type");
      }
    };
    writers_[key] = [&value]() { return json(value); };
    order_.push_back(key);
    return *this;
  }

  void read(const json& j) const {
    if (!j.is_object()) throw ConfigError(name_ + ": expected an object");
    for (const auto& [key, v] : j.items()) {
      auto it = readers_.find(key);
      if (it == readers_.end()) throw ConfigError(path(key) + ": unknown key");
      it->second(v);
    }
  }

  json write() const {
    json j = json::object();
    for (const auto& key : order_) j[key] = writers_.at(key)();
    return j;
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  std::string name_;
  std::map<std::string, std::function<void(const json&)>> readers_;
  std::map<std::string, std::function<json()>> writers_;
  std::vector<std::string> order_;
};

Block ot_block(OtConfig& c) {
  Block b("ot");
  b.field("tau", c.tau).field("n_iter", c.n_iter).field("alpha", c.alpha).field("gamma", c.gamma);
  b.field("shuffles", c.shuffles);
  return b;
}

Block margin_block(MarginConfig& c) {
  Block b("margin");
  b.field("a0", c.a0).field("a1", c.a1).field("a2", c.a2).field("tau", c.tau).field("eta", c.eta);
  b.field("steps", c.steps);
  return b;
}

Block meta_block(MetaConfig& c) {
  Block b("meta");
  b.field("steps", c.steps).field("alpha", c.alpha).field("beta", c.beta).field("batch", c.batch);
  b.field("meta_batch", c.meta_batch).field("hidden", c.hidden).field("samples", c.samples);
  b.field("dims", c.dims).field("meta_samples", c.meta_samples).field("noise", c.noise);
  return b;
}

Block ssm_block(SsmConfig& c) {
  Block b("ssm");
  b.field("d_state", c.d_state).field("d_model", c.d_model).field("d_hidden", c.d_hidden);
  b.field("d_gating", c.d_gating).field("delta", c.delta).field("max_length", c.max_length);
  b.field("configs", c.configs);
  return b;
}

Block keyframe_block(KeyframeConfig& c) {
  Block b("keyframe");
  b.field("k", c.k).field("q", c.q);
  return b;
}

Block grounding_block(GroundingConfig& c) {
  Block b("grounding");
  b.field("rho_reg", c.rho_reg).field("rho_within", c.rho_within).field("rho_cross", c.rho_cross);
  b.field("center_alpha", c.center_alpha).field("levels", c.levels).field("nms_sigma", c.nms_sigma);
  b.field("score_floor", c.score_floor).field("c3_weight", c.c3_weight);
  return b;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!experiment.empty(), "experiment", "must be set");
  require(ot.tau > 0.0, "ot.tau", "must be > 0");
  require(ot.n_iter >= 1, "ot.n_iter", "must be >= 1");
  require(ot.shuffles >= 0, "ot.shuffles", "must be >= 0");
  // inf over k >= 0 of a1 + exp(-a2 k) is a1 when a2 > 0 and a1 + 1 otherwise
  require(margin.a1 >= 0.0 || (margin.a2 <= 0.0 && margin.a1 + 1.0 > 0.0), "margin.a1",
          "a1 + exp(-a2 k) must stay positive");
  require(margin.tau > 0.0, "margin.tau", "must be > 0");
  require(margin.eta >= 0.0, "margin.eta", "must be >= 0");
  require(margin.steps >= 0, "margin.steps", "must be >= 0");
  require(meta.steps >= 0, "meta.steps", "must be >= 0");
  require(meta.alpha > 0.0, "meta.alpha", "must be > 0");
  require(meta.beta >= 0.0, "meta.beta", "must be >= 0");
  require(meta.batch >= 1 && meta.batch <= meta.samples, "meta.batch", "must be in [1, samples]");
  require(meta.meta_batch >= 1 && meta.meta_batch <= meta.meta_samples, "meta.meta_batch",
          "must be in [1, meta_samples]");
  require(meta.hidden >= 1, "meta.hidden", "must be >= 1");
  require(meta.dims >= 1, "meta.dims", "must be >= 1");
  require(meta.noise >= 0.0 && meta.noise <= 1.0, "meta.noise", "must be in [0, 1]");
  require(ssm.d_state >= 1 && ssm.d_model >= 1 && ssm.d_hidden >= 1, "ssm.d_state", "sizes must be >= 1");
  require(ssm.d_gating >= 1, "ssm.d_gating", "must be >= 1");
  require(ssm.delta > 0.0, "ssm.delta", "must be > 0");
  require(ssm.max_length >= 1, "ssm.max_length", "must be >= 1");
  require(ssm.configs >= 1, "ssm.configs", "must be >= 1");
  require(keyframe.k >= 1, "keyframe.k", "must be >= 1");
  require(keyframe.q >= 1, "keyframe.q", "must be >= 1");
  require(grounding.rho_reg >= 0.0, "grounding.rho_reg", "must be >= 0");
  require(grounding.rho_within >= 0.0, "grounding.rho_within", "must be >= 0");
  require(grounding.rho_cross >= 0.0, "grounding.rho_cross", "must be >= 0");
  require(grounding.center_alpha > 0.0, "grounding.center_alpha", "must be > 0");
  require(grounding.levels >= 1, "grounding.levels", "must be >= 1");
  require(grounding.nms_sigma > 0.0, "grounding.nms_sigma", "must be > 0");
  require(grounding.c3_weight >= 0.0, "grounding.c3_weight", "must be >= 0");
}

nlohmann::json to_json(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["ot"] = ot_block(c.ot).write();
  j["margin"] = margin_block(c.margin).write();
  j["meta"] = meta_block(c.meta).write();
  j["ssm"] = ssm_block(c.ssm).write();
  j["keyframe"] = keyframe_block(c.keyframe).write();
  j["grounding"] = grounding_block(c.grounding).write();
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "experiment") c.experiment = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else if (key == "ot") ot_block(c.ot).read(v);
      else if (key == "margin") margin_block(c.margin).read(v);
      else if (key == "meta") meta_block(c.meta).read(v);
      else if (key == "ssm") ssm_block(c.ssm).read(v);
      else if (key == "keyframe") keyframe_block(c.keyframe).read(v);
      else if (key == "grounding") grounding_block(c.grounding).read(v);
      else throw ConfigError(key + ": unknown key");
    } catch (const json::exception&) {
      throw ConfigError(key + ": wrong type");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << to_json(config).dump(2) << "\n";
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

}  // namespace tvu::harness
