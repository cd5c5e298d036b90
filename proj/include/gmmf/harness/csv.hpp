#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "gmmf/errors.hpp"

namespace gmmf::harness {

/// Shortest decimal string that reads back to exactly the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw Error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    if (first < last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw ArgumentError(where + ": '" + s + "' is not a number");
    return v;
}

/// Rows of strings with a named header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::ptrdiff_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        }
        return -1;
    }

    /// Columns whose name starts with `prefix`, in header order.
    [[nodiscard]] std::vector<std::size_t> columns_with_prefix(const std::string& prefix) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i].rfind(prefix, 0) == 0) out.push_back(i);
        }
        return out;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open '" + path + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw ArgumentError(path + ": empty file");
    t.header = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size()) {
            throw ArgumentError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                                " fields, found " + std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

/// Minimal CSV writer: every row is joined with commas and ends in '\n'.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw Error("cannot write '" + path + "'");
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
        if (!out_) throw Error("write failed for '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

}  // namespace gmmf::harness
