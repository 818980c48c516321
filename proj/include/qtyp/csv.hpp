#pragma once

// Minimal RFC 4180 style writer: header row, comma separator, '.' decimal
// point regardless of locale, round-trip precision (%.17g).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qtyp {

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& h : header) field(h);
    end_row();
  }

  CsvWriter& field(double x) {
    char buf[32];
    // %.17g is locale sensitive only through the decimal point, which the
    // "C" locale (the default unless a program calls setlocale) keeps as '.'.
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return raw(buf);
  }
  CsvWriter& field(std::int64_t x) { return raw(std::to_string(x)); }
  CsvWriter& field(std::uint64_t x) { return raw(std::to_string(x)); }
  CsvWriter& field(int x) { return raw(std::to_string(x)); }
  CsvWriter& field(long long x) { return raw(std::to_string(x)); }
  CsvWriter& field(bool b) { return raw(b ? "true" : "false"); }
  CsvWriter& field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return raw(s);
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    q += '"';
    return raw(q);
  }
  CsvWriter& field(const char* s) { return field(std::string_view(s)); }
  CsvWriter& field(const std::string& s) { return field(std::string_view(s)); }

  void end_row() {
    if (in_row_ != columns_) {
      throw std::logic_error("CsvWriter: row has " + std::to_string(in_row_) + " fields, header has " +
                             std::to_string(columns_));
    }
    out_ << '\n';
    in_row_ = 0;
  }

 private:
  CsvWriter& raw(std::string_view s) {
    if (in_row_ > 0) out_ << ',';
    out_ << s;
    ++in_row_;
    return *this;
  }

  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

}  // namespace qtyp
