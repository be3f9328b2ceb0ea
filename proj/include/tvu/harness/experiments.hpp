#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tvu/harness/config.hpp"

namespace tvu::harness {

enum class Compare { LessEqual, Less, GreaterEqual, Greater, Equal };

struct Assertion {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  Compare compare = Compare::LessEqual;
  bool pass = false;
};

Assertion check(std::string name, double value, Compare compare, double threshold);

struct ExperimentReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<Assertion> assertions;
  /// Optional per-experiment tables written next to the JSON summary.
  std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>> tables;

  bool passed() const;
  nlohmann::json summary() const;
};

struct ExperimentInfo {
  std::string name;
  int criterion;  // acceptance criterion number
  std::string title;
  std::function<ExperimentReport(const ExperimentConfig&)> run;
};

const std::vector<ExperimentInfo>& experiments();
const ExperimentInfo& find_experiment(const std::string& name);

/// Runs the named experiment and writes <out>/<name>.json plus any tables as CSV.
ExperimentReport run_experiment(const ExperimentConfig& config, bool write_files = true);

}  // namespace tvu::harness
