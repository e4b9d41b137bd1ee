#include "report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rvmb/error.hpp"

namespace rvmb::cli {

Metric make_metric(const std::string& name, double value, Relation relation, double threshold, double upper) {
  Metric m{name, value, relation, threshold, upper, false};
  switch (relation) {
    case Relation::less_equal: m.pass = value <= threshold; break;
    case Relation::less: m.pass = value < threshold; break;
    case Relation::greater_equal: m.pass = value >= threshold; break;
    case Relation::greater: m.pass = value > threshold; break;
    case Relation::within: m.pass = value >= threshold && value <= upper; break;
    case Relation::equal: m.pass = value == threshold; break;
  }
  return m;
}

void CriterionResult::add(const Metric& m) {
  pass = (metrics.empty() ? true : pass) && m.pass;
  metrics.push_back(m);
}

void CriterionResult::add(const std::string& name, double value, Relation relation, double threshold, double upper) {
  add(make_metric(name, value, relation, threshold, upper));
}

void Table::add_row(std::vector<Cell> row) {
  require(row.size() == columns.size(), ErrorKind::consistency, "table row width differs from the header");
  rows.push_back(std::move(row));
}

bool Report::pass() const {
  for (const CriterionResult& c : criteria)
    if (!c.pass) return false;
  return true;
}

CriterionResult& Report::criterion(int id, const std::string& title) {
  for (CriterionResult& c : criteria)
    if (c.id == id) return c;
  criteria.push_back({id, title, {}, false});
  return criteria.back();
}

const CriterionResult* Report::find(int id) const {
  for (const CriterionResult& c : criteria)
    if (c.id == id) return &c;
  return nullptr;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string relation_text(Relation r) {
  switch (r) {
    case Relation::less_equal: return "<=";
    case Relation::less: return "<";
    case Relation::greater_equal: return ">=";
    case Relation::greater: return ">";
    case Relation::within: return "within";
    case Relation::equal: return "==";
  }
  return "?";
}

namespace {

nlohmann::ordered_json cell_json(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) {
    if (!std::isfinite(*d)) return format_real(*d);
    return *d;
  }
  if (const long long* i = std::get_if<long long>(&c)) return *i;
  return std::get<std::string>(c);
}

nlohmann::ordered_json real_json(double v) {
  if (!std::isfinite(v)) return format_real(v);
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace

std::string to_json(const Report& r) {
  nlohmann::ordered_json j;
  j["experiment"] = r.experiment;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.table.rows) {
    nlohmann::ordered_json jr = nlohmann::ordered_json::array();
    for (const Cell& c : row) jr.push_back(cell_json(c));
    rows.push_back(jr);
  }
  j["table"] = {{"columns", r.table.columns}, {"rows", rows}};
  nlohmann::ordered_json crit = nlohmann::ordered_json::array();
  for (const CriterionResult& c : r.criteria) {
    nlohmann::ordered_json jc;
    jc["id"] = c.id;
    jc["title"] = c.title;
    jc["pass"] = c.pass;
    nlohmann::ordered_json ms = nlohmann::ordered_json::array();
    for (const Metric& m : c.metrics) {
      nlohmann::ordered_json jm;
      jm["name"] = m.name;
      jm["value"] = real_json(m.value);
      jm["relation"] = relation_text(m.relation);
      jm["threshold"] = real_json(m.threshold);
      if (m.relation == Relation::within) jm["upper"] = real_json(m.upper);
      jm["pass"] = m.pass;
      ms.push_back(jm);
    }
    jc["metrics"] = ms;
    crit.push_back(jc);
  }
  j["criteria"] = crit;
  j["files"] = r.files;
  j["pass"] = r.pass();
  return j.dump(2) + "\n";
}

std::string to_csv(const Table& t) {
  std::ostringstream out;
  for (size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << csv_field(t.columns[i]);
  out << "\n";
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ",";
      if (const double* d = std::get_if<double>(&row[i]))
        out << format_real(*d);
      else if (const long long* n = std::get_if<long long>(&row[i]))
        out << *n;
      else
        out << csv_field(std::get<std::string>(row[i]));
    }
    out << "\n";
  }
  return out.str();
}

void write_report(const Report& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::input, "cannot write " + name + " in " + dir);
    out << text;
  };
  put(r.experiment + ".json", to_json(r));
  put(r.experiment + ".csv", to_csv(r.table));
}

std::string summary_lines(const Report& r) {
  std::ostringstream out;
  for (const CriterionResult& c : r.criteria) {
    out << "criterion " << c.id << " " << (c.pass ? "PASS" : "FAIL") << " (" << c.title << ")";
    for (const Metric& m : c.metrics) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g", m.value);
      out << "; " << m.name << " = " << buf << " " << relation_text(m.relation) << " ";
      std::snprintf(buf, sizeof buf, "%.6g", m.threshold);
      out << buf;
      if (m.relation == Relation::within) {
        std::snprintf(buf, sizeof buf, "%.6g", m.upper);
        out << ".." << buf;
      }
      if (!m.pass) out << " [fail]";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace rvmb::cli
