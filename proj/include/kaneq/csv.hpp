#ifndef KANEQ_CSV_HPP
#define KANEQ_CSV_HPP

#include <string>
#include <vector>

#include "kaneq/common.hpp"

namespace kaneq::csv {

struct Table {
    std::vector<std::string> header;
    Matrix values;
};

// Header row + numeric cells, UTF-8, '.' decimal point. Doubles are written
// with round-trip precision so regenerated files are bit-identical.
void write(const std::string& path, const std::vector<std::string>& header, const Matrix& values);

// Parse errors name the file, row and column. Requires a header row.
Table read(const std::string& path);

std::string format_double(double v);

} // namespace kaneq::csv

#endif
