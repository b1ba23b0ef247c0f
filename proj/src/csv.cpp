#include "kaneq/csv.hpp"

#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kaneq::csv {

std::string format_double(double v) {
    char buf[32];
    // Shortest representation that parses back to the same double.
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v || (std::isnan(back) && std::isnan(v))) return buf;
    }
    return buf;
}

void write(const std::string& path, const std::vector<std::string>& header, const Matrix& values) {
    if (static_cast<int>(header.size()) != values.cols)
        throw dimension_error("csv write: " + std::to_string(header.size()) + " header names for " +
                              std::to_string(values.cols) + " columns");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write csv: " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (int r = 0; r < values.rows; ++r) {
        for (int c = 0; c < values.cols; ++c) {
            if (c) out << ',';
            out << format_double(values.at(r, c));
        }
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

Table read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open csv: " + path);

    Table t;
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty csv (no header): " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
        if (!line.empty() && line.back() == ',') t.header.push_back("");
    }
    const int ncols = static_cast<int>(t.header.size());
    if (ncols == 0) throw io_error("csv header has no columns: " + path);

    std::vector<double> cells;
    int row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        int col = 0;
        const char* p = line.data();
        const char* end = p + line.size();
        while (true) {
            const char* comma = p;
            while (comma != end && *comma != ',') ++comma;
            ++col;
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(p, comma, value);
            if (ec != std::errc() || ptr != comma)
                throw io_error(path + ": row " + std::to_string(row) + ", column " +
                               std::to_string(col) + ": cannot parse '" + std::string(p, comma) +
                               "' as a number");
            if (!std::isfinite(value))
                throw io_error(path + ": row " + std::to_string(row) + ", column " +
                               std::to_string(col) + ": non-finite value");
            cells.push_back(value);
            if (comma == end) break;
            p = comma + 1;
        }
        if (col != ncols)
            throw io_error(path + ": row " + std::to_string(row) + " has " + std::to_string(col) +
                           " cells, header has " + std::to_string(ncols));
    }
    t.values.rows = row;
    t.values.cols = ncols;
    t.values.v = std::move(cells);
    return t;
}

} // namespace kaneq::csv
