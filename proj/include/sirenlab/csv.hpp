#pragma once

// Minimal CSV reading/writing for the result tables. Fields never contain
// commas or quotes (ids are hex hashes, names are identifiers).

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sirenlab {

// Shortest round-trip decimal representation; "inf", "-inf", "nan" for
// non-finite values.
std::string format_double(double v);
double parse_double(const std::string& s);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    CsvWriter& field(const std::string& s);
    CsvWriter& field(double v);
    CsvWriter& field(long long v);
    CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
    CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
    void end_row();

private:
    std::ofstream out_;
    std::size_t columns_;
    std::size_t pending_ = 0;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a named column; throws IoError if absent.
    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace sirenlab
