#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "thr/errors.hpp"

namespace thr {

/// Shortest decimal string that round-trips the double exactly.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, int line, int column) {
    if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError("not a number: '" + s + "'", line, column);
    return v;
}

/// A rectangular CSV table with a header row. Cells are plain strings;
/// no quoting is used anywhere in this project's formats.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw ParseError("missing column '" + name + "'", 1, 1);
    }
};

inline std::string to_string(const CsvTable& t) {
    std::ostringstream os;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (i) os << ',';
        os << t.header[i];
    }
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << row[i];
        }
        os << '\n';
    }
    return os.str();
}

inline void write_csv(const std::string& path, const CsvTable& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    f << to_string(t);
    if (!f) throw Error("write to '" + path + "' failed");
}

inline CsvTable parse_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        cells.push_back(cur);
        if (line_no == 1) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size())
                throw ParseError("expected " + std::to_string(t.header.size()) + " cells, got " +
                                     std::to_string(cells.size()),
                                 line_no, 1);
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw ParseError("empty CSV input", 1, 1);
    return t;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "' for reading");
    return parse_csv(f);
}

} // namespace thr
