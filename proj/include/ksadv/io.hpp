#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ksadv/field.hpp"

namespace ksadv {

/// Shortest decimal text that reads back to exactly the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::initializer_list<std::string_view> header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    row_begin();
    for (auto h : header) cell(h);
    row_end();
  }

  CsvWriter& cell(std::string_view s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& cell(double x) { return cell(std::string_view(format_double(x))); }
  CsvWriter& cell(long long x) { return cell(std::string_view(std::to_string(x))); }

  void row_end() {
    out_ << '\n';
    first_ = true;
  }

 private:
  void row_begin() { first_ = true; }
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }

  std::ofstream out_;
  bool first_ = true;
};

/// Reads "k1 k2 re im" lines (# comments allowed) into a Hermitian field.
/// Modes outside the retained lattice are rejected.
inline SpectralField load_field_coefficients(std::istream& in, const GridPtr& grid) {
  SpectralField f(grid);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    int k1, k2;
    double re, im;
    if (!(ls >> k1)) continue;
    if (!(ls >> k2 >> re >> im))
      throw std::invalid_argument("field file line " + std::to_string(lineno) + ": expected k1 k2 re im");
    if (std::abs(k1) > grid->cutoff1() || std::abs(k2) > grid->cutoff2())
      throw std::invalid_argument("field file line " + std::to_string(lineno) + ": mode outside the retained lattice");
    f.at(k1, k2) = cplx(re, im);
    if (k1 != 0 || k2 != 0) f.at(-k1, -k2) = cplx(re, -im);
  }
  f.enforce_hermitian();
  return f;
}

inline SpectralField load_field_coefficients(const std::string& path, const GridPtr& grid) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open field file " + path);
  return load_field_coefficients(in, grid);
}

}  // namespace ksadv
