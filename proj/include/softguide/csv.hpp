#pragma once

#include <string>
#include <vector>

namespace softguide::csv {

// Fixed textual form for doubles so reruns produce identical bytes.
std::string num(double v);

std::string row(const std::vector<double>& values);
std::string header(const std::vector<std::string>& names);

void write_file(const std::string& path, const std::string& content);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> comments;  // leading "# key=value" lines
};

Table read_file(const std::string& path);

}  // namespace softguide::csv
