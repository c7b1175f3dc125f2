#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mmwmap {

/// Shortest round-trip decimal text ("%.17g"); "-inf"/"inf"/"nan" for
/// non-finite values.
std::string format_double(double v);
/// Fixed significant digits, for display-oriented outputs.
std::string format_double(double v, int significant);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);
    void close();

private:
    std::ofstream out_;
    std::filesystem::path path_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::uint64_t> row_offsets;  ///< byte offset of each row

    /// Column index by name; throws ParseError if missing.
    std::size_t column(const std::string& name) const;
    double number(std::size_t row, std::size_t col) const;
    long integer(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace mmwmap
