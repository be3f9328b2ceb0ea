#include "tvu/harness/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tvu/harness/config.hpp"

namespace tvu::harness {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(where + ": not a number '" + s + "'");
  }
  if (used != s.size()) throw ConfigError(where + ": not a number '" + s + "'");
  return v;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ConfigError("CSV column '" + name + "' missing");
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (first) {
      t.header = split(line);
      first = false;
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw ConfigError(path + ": row " + std::to_string(t.rows.size() + 1) + " has " + std::to_string(row.size()) +
                        " cells, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  if (first) throw ConfigError(path + ": missing header row");
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          parse_number(t.rows[i][j], path + " row " + std::to_string(i + 1));
  return m;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  CsvTable t;
  t.header = header;
  if (t.header.empty())
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.header.push_back("f" + std::to_string(j));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(format_number(m(i, j)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<QuerySpan> read_spans_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t q = t.column("query_id"), s = t.column("start"), e = t.column("end");
  std::size_t sc = t.header.size();
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == "score") sc = i;
  std::vector<QuerySpan> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string where = path + " row " + std::to_string(i + 1);
    MomentSpan span{parse_number(t.rows[i][s], where), parse_number(t.rows[i][e], where),
                    sc < t.header.size() ? parse_number(t.rows[i][sc], where) : 1.0};
    span.validate();
    out.push_back({t.rows[i][q], span});
  }
  return out;
}

void write_spans_csv(const std::string& path, const std::vector<QuerySpan>& spans) {
  CsvTable t;
  t.header = {"query_id", "start", "end", "score"};
  for (const auto& s : spans) {
    t.rows.push_back({s.query, format_number(s.span.start), format_number(s.span.end), format_number(s.span.score)});
  }
  write_csv(path, t);
}

}  // namespace tvu::harness
