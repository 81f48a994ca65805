#pragma once

#include <string>
#include <vector>

namespace adaptlab {

struct SvgSeries {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

struct SvgChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<SvgSeries> series;
    std::vector<std::string> notes;  // extra legend lines (e.g. skipped layers)
    int width = 720;
    int height = 480;
};

// Self-contained SVG 1.1 document; output bytes depend only on the input.
std::string render_line_chart(const SvgChart& chart);

}  // namespace adaptlab
