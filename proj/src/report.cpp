#include "ibdiag/report.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace ibdiag {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", kReportDigits, v);
  return buf;
}

nlohmann::ordered_json round_floats(const nlohmann::ordered_json& doc) {
  if (doc.is_number_float()) {
    const double v = doc.get<double>();
    if (!std::isfinite(v)) return nullptr;
    double r = std::strtod(format_number(v).c_str(), nullptr);
    if (r == 0.0) r = 0.0;  // drop negative zero
    return r;
  }
  if (doc.is_array()) {
    auto out = nlohmann::ordered_json::array();
    for (const auto& v : doc) out.push_back(round_floats(v));
    return out;
  }
  if (doc.is_object()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (auto it = doc.begin(); it != doc.end(); ++it) out[it.key()] = round_floats(it.value());
    return out;
  }
  return doc;
}

std::string render_json(const nlohmann::ordered_json& doc) { return round_floats(doc).dump(2) + "\n"; }

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void CsvTable::add_row(std::vector<Cell> row) {
  if (row.size() != header_.size()) throw std::invalid_argument("CSV row width does not match the header");
  std::vector<std::string> cells;
  for (const auto& c : row) {
    if (const auto* s = std::get_if<std::string>(&c)) {
      cells.push_back(csv_escape(*s));
    } else if (const auto* d = std::get_if<double>(&c)) {
      const double v = *d == 0.0 ? 0.0 : *d;
      cells.push_back(format_number(v));
    } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
      cells.push_back(std::to_string(*i));
    } else {
      cells.push_back(std::to_string(std::get<std::uint64_t>(c)));
    }
  }
  rows_.push_back(std::move(cells));
}

std::string CsvTable::render(std::uint64_t seed) const {
  std::string out = "# seed=" + std::to_string(seed) + "\n";
  for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + csv_escape(header_[i]);
  out += "\n";
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw std::runtime_error("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace ibdiag
