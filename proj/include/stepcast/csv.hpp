#pragma once

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "stepcast/common.hpp"

namespace stepcast {

// Minimal CSV support for the fixed schemas this library reads and writes.
// Fields never contain commas or quotes, so a plain split is enough.

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

/// Streams a CSV file row by row. `on_row(fields, line_no)` is called for every
/// non-empty data line; the header is validated against `expected_header`.
inline void for_each_csv_row(const std::string& path, const std::string& expected_header,
                             const std::function<void(const std::vector<std::string>&, int)>& on_row) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != expected_header)
                throw SchemaError(path + ":1: bad header '" + line + "', expected '" + expected_header + "'");
            saw_header = true;
            continue;
        }
        on_row(split_csv_line(line), line_no);
    }
    if (!saw_header && line_no > 0) throw SchemaError(path + ": missing header");
}

inline long parse_long_field(const std::string& s, const std::string& path, int line_no, const char* what) {
    if (s.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": empty " + what);
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
    if (pos != s.size()) throw ParseError(path + ":" + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

inline double parse_double_field(const std::string& s, const std::string& path, int line_no, const char* what) {
    if (s.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": empty " + what);
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
    if (pos != s.size()) throw ParseError(path + ":" + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot write " + path);
    }
    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }
    void raw_line(const std::string& line) { out_ << line << '\n'; }

  private:
    std::ofstream out_;
};

}  // namespace stepcast
