#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace ksadv::cli {

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct ReportSection {
  std::string experiment;
  std::string statement;  // the result the experiment exercises
  std::vector<std::string> notes;
  std::vector<ReportTable> tables;
};

/// Markdown summary of a set of runs; an empty set yields just the header.
inline std::string emit_report(const std::vector<ReportSection>& runs) {
  std::ostringstream md;
  md << "# ksadv run report\n";
  for (const auto& r : runs) {
    md << "\n## " << r.experiment << "\n\n";
    md << "Exercises: " << r.statement << "\n";
    for (const auto& n : r.notes) md << "\n" << n << "\n";
    for (const auto& t : r.tables) {
      md << "\n|";
      for (const auto& c : t.columns) md << ' ' << c << " |";
      md << "\n|";
      for (std::size_t i = 0; i < t.columns.size(); ++i) md << " --- |";
      md << '\n';
      for (const auto& row : t.rows) {
        md << '|';
        for (const auto& c : row) md << ' ' << c << " |";
        md << '\n';
      }
    }
  }
  return md.str();
}

}  // namespace ksadv::cli
