#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "occlab/common.hpp"

namespace occlab {

// ============================================================================
// DELIMITED TABLES
//
// All file exchange uses header + rows, tab or comma separated. The reader
// sniffs the delimiter from the header line; writers always emit tabs.
// ============================================================================

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t n_rows() const { return rows.size(); }

    int column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require_column(const std::string& name) const {
        int idx = column_index(name);
        if (idx < 0) throw DataError("missing required column: " + name);
        return idx;
    }
};

inline char sniff_delimiter(const std::string& header) {
    std::size_t tabs = 0, commas = 0;
    for (char c : header) {
        if (c == '\t') ++tabs;
        if (c == ',') ++commas;
    }
    return tabs >= commas ? '\t' : ',';
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    Table t;
    std::string line;
    if (!std::getline(in, line)) return t;  // empty file: no columns, no rows
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const char delim = sniff_delimiter(line);
    for (auto& c : split(line, delim)) t.columns.push_back(std::string(trim(c)));
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line, delim);
        if (cells.size() != t.columns.size()) {
            throw DataError("row with " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(t.columns.size()) + " in " + path);
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

class TableWriter {
  public:
    explicit TableWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("cannot open file for writing: " + path);
    }

    TableWriter(const std::string& path, const std::vector<std::string>& cols)
        : TableWriter(path) {
        header(cols);
    }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << '\t';
            out_ << cells[i];
        }
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

// Strict scalar parsing: the whole cell must be consumed.
inline std::optional<double> parse_double(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return std::nullopt;
    double v = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return std::nullopt;
    long long v = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << content;
}

}  // namespace occlab
