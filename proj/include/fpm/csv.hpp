#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fpm/error.hpp"

namespace fpm::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        fail(ErrorKind::MissingColumn, "column '" + std::string(name) + "' not found");
    }

    bool has_column(std::string_view name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline Table parse(std::istream& in, const std::string& origin = "<stream>") {
    Table t;
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Parse, origin + ": empty CSV");
    t.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (cells.size() != t.header.size())
            fail(ErrorKind::Parse, origin + ":" + std::to_string(lineno) + ": expected " +
                                       std::to_string(t.header.size()) + " cells, got " +
                                       std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IO, "cannot open '" + path + "'");
    return parse(in, path);
}

inline std::string quote(std::string_view cell) {
    if (cell.find_first_of(",\"\n") == std::string_view::npos) return std::string(cell);
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Shortest form that parses back to the same double.
inline std::string format_exact(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string format_fixed(double v, int decimals = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline double parse_double(const std::string& s, std::string_view what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size())
        fail(ErrorKind::Parse, std::string(what) + ": not a number '" + s + "'");
    return v;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << quote(cells[i]);
    }
    out << '\n';
}

inline void write(const std::string& path, const Table& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IO, "cannot write '" + path + "'");
    write_row(out, t.header);
    for (const auto& r : t.rows) write_row(out, r);
}

} // namespace fpm::csv
