#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace rvmb::cli {

enum class Relation { less_equal, less, greater_equal, greater, within, equal };

/// Measured value with the threshold it is judged against; `within` uses [threshold, upper].
struct Metric {
  std::string name;
  double value = 0;
  Relation relation = Relation::less_equal;
  double threshold = 0;
  double upper = 0;
  bool pass = false;
};

Metric make_metric(const std::string& name, double value, Relation relation, double threshold, double upper = 0);

/// Acceptance criterion with every measured value; passes when all metrics pass.
struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Metric> metrics;
  bool pass = false;

  void add(const Metric& m);
  void add(const std::string& name, double value, Relation relation, double threshold, double upper = 0);
};

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
};

struct Report {
  std::string experiment;
  std::map<std::string, std::string> config;
  Table table;
  std::vector<CriterionResult> criteria;
  /// Extra files written next to the report, relative to the output directory.
  std::vector<std::string> files;

  bool pass() const;
  CriterionResult& criterion(int id, const std::string& title);
  const CriterionResult* find(int id) const;
};

std::string format_real(double v);
std::string relation_text(Relation r);

std::string to_json(const Report& r);
std::string to_csv(const Table& t);

/// Writes <experiment>.json and <experiment>.csv into `dir`, creating it if needed.
void write_report(const Report& r, const std::string& dir);

/// One line per criterion: id, verdict and every metric with its threshold.
std::string summary_lines(const Report& r);

}  // namespace rvmb::cli
