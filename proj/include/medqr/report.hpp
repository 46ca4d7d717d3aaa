#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace medqr {

/// Metric table plus the configuration that produced it. Values are stored
/// exactly as displayed (percentages for the retrieval and accuracy tables).
struct EvalReport {
  struct Row {
    std::string label;
    std::vector<double> values;
  };

  std::string title;
  std::string row_header = "Model";
  std::vector<std::string> columns;
  std::vector<Row> rows;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::optional<std::string> timestamp;  // only when requested; keeps reruns byte-identical
  int precision = 2;
  /// Extra lines printed under the table.
  std::vector<std::string> notes;

  void add_row(std::string label, std::vector<double> values) { rows.push_back({std::move(label), std::move(values)}); }

  std::string to_text() const {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({row_header});
    cells.back().insert(cells.back().end(), columns.begin(), columns.end());
    for (const auto& r : rows) {
      std::vector<std::string> line{r.label};
      for (double v : r.values) line.push_back(format(v));
      cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width;
    for (const auto& line : cells) {
      if (width.size() < line.size()) width.resize(line.size(), 0);
      for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    }
    std::string out;
    if (!title.empty()) out += title + "\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (std::size_t c = 0; c < cells[i].size(); ++c) {
        const auto& cell = cells[i][c];
        const std::string pad(width[c] - cell.size(), ' ');
        out += c == 0 ? cell + pad : "  " + pad + cell;
      }
      out += "\n";
      if (i == 0) {
        std::size_t total = 0;
        for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c == 0 ? 0 : 2);
        out += std::string(total, '-') + "\n";
      }
    }
    for (const auto& n : notes) out += n + "\n";
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& r : rows) {
      nlohmann::json row = nlohmann::json::object();
      for (std::size_t c = 0; c < columns.size() && c < r.values.size(); ++c) row[columns[c]] = r.values[c];
      metrics[r.label] = row;
    }
    nlohmann::json j = {{"title", title}, {"columns", columns}, {"metrics", metrics}, {"config", config}, {"seed", seed}};
    if (timestamp) j["timestamp"] = *timestamp;
    return j;
  }

 private:
  std::string format(double v) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
  }
};

}  // namespace medqr
