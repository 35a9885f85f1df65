#include "spikefuse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "spikefuse/common.hpp"

namespace spikefuse {
namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

/// Nice round tick step covering roughly `target` divisions of `span`.
double tick_step(double span, int target) {
    if (span <= 0.0) return 1.0;
    double raw = span / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double frac = raw / mag;
    double nice = frac < 1.5 ? 1.0 : frac < 3.5 ? 2.0 : frac < 7.5 ? 5.0 : 10.0;
    return nice * mag;
}

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_svg_plot(const std::string& path, const PlotSpec& spec,
                    const std::vector<Series>& series) {
    check(!series.empty(), "plot needs at least one series");
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const Series& s : series) {
        check(!s.x.empty(), "series \"", s.label, "\" is empty");
        check(s.x.size() == s.y.size(), "series \"", s.label, "\" has ", s.x.size(),
              " x values but ", s.y.size(), " y values");
        for (double v : s.x) {
            check(std::isfinite(v), "series \"", s.label, "\" has non-finite x");
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            check(std::isfinite(v), "series \"", s.label, "\" has non-finite y");
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (xmax == xmin) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    double ypad = (ymax - ymin) * 0.05;
    ymin -= ypad;
    ymax += ypad;

    const double W = spec.width, H = spec.height;
    const double left = 64, right = 16, top = 36, bottom = 46;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width
        << "\" height=\"" << spec.height << "\" viewBox=\"0 0 " << spec.width << ' '
        << spec.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
        << escape(spec.title) << "</text>\n";

    // Grid and ticks.
    double xs = tick_step(xmax - xmin, 6), ys = tick_step(ymax - ymin, 6);
    svg << "<g stroke=\"#ddd\" stroke-width=\"1\">\n";
    for (double x = std::ceil(xmin / xs) * xs; x <= xmax + 1e-9; x += xs) {
        svg << "<line x1=\"" << fmt(px(x)) << "\" y1=\"" << fmt(top) << "\" x2=\""
            << fmt(px(x)) << "\" y2=\"" << fmt(top + ph) << "\"/>\n";
    }
    for (double y = std::ceil(ymin / ys) * ys; y <= ymax + 1e-9; y += ys) {
        svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(py(y)) << "\" x2=\""
            << fmt(left + pw) << "\" y2=\"" << fmt(py(y)) << "\"/>\n";
    }
    svg << "</g>\n";
    svg << "<g fill=\"#333\">\n";
    for (double x = std::ceil(xmin / xs) * xs; x <= xmax + 1e-9; x += xs) {
        svg << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(top + ph + 16)
            << "\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
    }
    for (double y = std::ceil(ymin / ys) * ys; y <= ymax + 1e-9; y += ys) {
        svg << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(y) + 4)
            << "\" text-anchor=\"end\">" << fmt(y) << "</text>\n";
    }
    svg << "</g>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw
        << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">"
        << escape(spec.x_label) << "</text>\n";
    svg << "<text x=\"14\" y=\"" << H / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << H / 2 << ")\">"
        << escape(spec.y_label) << "</text>\n";

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    bool any_label = false;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Series& s = series[i];
        std::string color =
            s.color.empty() ? kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))] : s.color;
        svg << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (j) svg << ' ';
            svg << fmt(px(s.x[j])) << ',' << fmt(py(s.y[j]));
        }
        svg << "\"/>\n";
        if (s.x.size() <= 64) {
            for (std::size_t j = 0; j < s.x.size(); ++j) {
                svg << "<circle cx=\"" << fmt(px(s.x[j])) << "\" cy=\"" << fmt(py(s.y[j]))
                    << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
            }
        }
        if (!s.label.empty()) any_label = true;
    }
    if (any_label) {
        double lx = left + 10, ly = top + 10;
        for (std::size_t i = 0; i < series.size(); ++i) {
            const Series& s = series[i];
            if (s.label.empty()) continue;
            std::string color =
                s.color.empty() ? kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]
                                : s.color;
            svg << "<line x1=\"" << lx << "\" y1=\"" << ly + 4 << "\" x2=\"" << lx + 22
                << "\" y2=\"" << ly + 4 << "\" stroke=\"" << color
                << "\" stroke-width=\"2\"/>\n";
            svg << "<text x=\"" << lx + 28 << "\" y=\"" << ly + 8 << "\">"
                << escape(s.label) << "</text>\n";
            ly += 18;
        }
    }
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "cannot write plot file ", path);
    out << svg.str();
    check(out.good(), "write failed for plot file ", path);
}

}  // namespace spikefuse
