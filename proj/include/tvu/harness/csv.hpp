#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "tvu/grounding.hpp"

namespace tvu::harness {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column by header name; throws when absent.
  std::size_t column(const std::string& name) const;
};

/// Shortest round-trip decimal form ("%.17g" trimmed), '.' separator.
std::string format_number(double v);

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

/// Row-major numeric matrix; a header row is required and skipped.
Eigen::MatrixXd read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header = {});

struct QuerySpan {
  std::string query;
  MomentSpan span;
};

/// Columns query_id, start, end, score.
std::vector<QuerySpan> read_spans_csv(const std::string& path);
void write_spans_csv(const std::string& path, const std::vector<QuerySpan>& spans);

}  // namespace tvu::harness
