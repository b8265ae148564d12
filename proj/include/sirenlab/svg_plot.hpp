#pragma once

// Self-contained SVG line/scatter plots for experiment outputs.

#include <filesystem>
#include <string>
#include <vector>

namespace sirenlab {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool line = true;
    bool markers = false;
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;  // base-10 axis; non-positive x values are dropped
    std::vector<Series> series;
    int width = 640;
    int height = 420;
};

// Non-finite points are skipped. Throws IoError if the file cannot be written.
void write_svg(const Plot& plot, const std::filesystem::path& path);
std::string render_svg(const Plot& plot);

}  // namespace sirenlab
