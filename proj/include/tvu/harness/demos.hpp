#pragma once

#include <Eigen/Core>
#include <ostream>
#include <string>
#include <vector>

#include "tvu/harness/config.hpp"
#include "tvu/harness/experiments.hpp"

namespace tvu::harness {

/// Partial-alignment distance between two feature CSVs; writes the per-mass costs.
double potdist(const std::string& a_csv, const std::string& b_csv, const ExperimentConfig& config,
               const std::string& out_csv);

/// Per-step margin and losses on a fixed synthetic batch.
void margin_demo(const ExperimentConfig& config, const std::string& out_csv);

/// Bilevel training trace on the label-noise task.
void meta_train(const ExperimentConfig& config, const std::string& out_csv);

/// Equivalence checks plus timings; returns true when every check passes.
bool ssm_check(const ExperimentConfig& config, const std::string& table_csv, const std::string& timing_csv);

/// Loss values over synthetic videos at increasing noise levels.
void contrast_demo(const ExperimentConfig& config, const std::string& out_csv);

std::vector<Eigen::Index> keyframes(const std::string& features_csv, const ExperimentConfig& config,
                                    const std::string& out_csv);

/// Recall@K x tIoU table from prediction and ground-truth span CSVs.
void ground_eval(const std::string& pred_csv, const std::string& gt_csv, const std::vector<std::size_t>& ks,
                 const std::vector<double>& thetas, bool apply_nms, const ExperimentConfig& config,
                 const std::string& out_csv);

/// One line per acceptance criterion: PASS/FAIL, number, name, assertion values.
std::string format_report_line(const ExperimentInfo& info, const ExperimentReport& report);

/// Runs every experiment, prints one line each and returns the number of failures.
int run_selftest(const ExperimentConfig& config, std::ostream& out, bool write_files);

}  // namespace tvu::harness
