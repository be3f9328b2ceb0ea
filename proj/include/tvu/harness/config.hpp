#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace tvu::harness {

/// Raised for malformed or out-of-range configuration; the message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OtConfig {
  double tau = 0.05;
  int n_iter = 1000;
  double alpha = 10.0;  // similarity margin
  double gamma = 9.0;   // motion gate
  int shuffles = 3;
};

struct MarginConfig {
  double a0 = 2.0;
  double a1 = 10.0;
  double a2 = 0.1;
  double tau = 0.05;  // contrastive temperature
  double eta = 1.0;
  long steps = 1000;
};

struct MetaConfig {
  long steps = 300;
  double alpha = 0.5;
  double beta = 10.0;
  long batch = 32;
  long meta_batch = 32;
  long hidden = 100;
  long samples = 500;
  long dims = 10;
  long meta_samples = 100;
  double noise = 0.4;
};

struct SsmConfig {
  long d_state = 512;
  long d_model = 512;
  long d_hidden = 512;
  long d_gating = 128;
  double delta = 1.0;
  long max_length = 1024;
  long configs = 100;
};

struct KeyframeConfig {
  long k = 5;
  long q = 8;
};

struct GroundingConfig {
  double rho_reg = 1.0;
  double rho_within = 1.0;
  double rho_cross = 1.0;
  double center_alpha = 1.5;
  long levels = 4;
  double nms_sigma = 0.5;
  double score_floor = 1e-3;
  double c3_weight = 0.005;
};

struct ExperimentConfig {
  std::string experiment = "ssm-equivalence";
  std::uint64_t seed = 7;
  std::string out_dir = "tvu_out";
  OtConfig ot;
  MarginConfig margin;
  MetaConfig meta;
  SsmConfig ssm;
  KeyframeConfig keyframe;
  GroundingConfig grounding;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are errors.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace tvu::harness
