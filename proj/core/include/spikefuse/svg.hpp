#pragma once

#include <string>
#include <vector>

namespace spikefuse {

/// One polyline on a chart.
struct Series {
    std::string label;
    std::string color;  // any SVG color string
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 720;
    int height = 440;
};

/// Writes a self-contained SVG line chart. Axes are scaled to the joint
/// data range with a small margin; a legend is drawn when any series has
/// a label. Fails on empty or mismatched series.
void write_svg_plot(const std::string& path, const PlotSpec& spec,
                    const std::vector<Series>& series);

}  // namespace spikefuse
