#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ibdiag {

inline constexpr int kReportDigits = 9;

// %.9g; non-finite values print as inf, -inf or nan.
std::string format_number(double v);

// Copy with every float rounded to 9 significant digits; non-finite floats
// become null.
nlohmann::ordered_json round_floats(const nlohmann::ordered_json& doc);

// Rounded, 2-space indented, trailing newline.
std::string render_json(const nlohmann::ordered_json& doc);

class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  using Cell = std::variant<std::string, double, std::int64_t, std::uint64_t>;
  void add_row(std::vector<Cell> row);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }
  // Leading "# seed=<seed>" line, header, rows.
  std::string render(std::uint64_t seed) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Throws std::runtime_error when the directory cannot be created or written.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ibdiag
