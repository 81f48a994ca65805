#include "adaptlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adaptlab/errors.hpp"

namespace adaptlab {

namespace {

constexpr const char* kPalette[] = {
    "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951",
    "#ff8ab7", "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0",
};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Largest "round" step (1/2/5 x 10^k) giving at most `max_ticks` intervals.
double nice_step(double span, int max_ticks) {
    const double raw = span / max_ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) return m * mag;
    return 10.0 * mag;
}

struct Range {
    double lo = 0.0, hi = 1.0;
    double span() const { return hi - lo; }
};

Range data_range(const std::vector<SvgSeries>& series, bool y_axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : series) {
        const auto& vs = y_axis ? s.ys : s.xs;
        for (double v : vs) {
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(lo <= hi)) return {0.0, 1.0};
    if (lo == hi) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace

std::string render_line_chart(const SvgChart& chart) {
    if (chart.series.empty() && chart.notes.empty())
        throw ConfigError("svg: nothing to plot");
    const int w = chart.width, h = chart.height;
    const double ml = 58, mr = 16, mt = 40, mb = 46;
    const double pw = w - ml - mr, ph = h - mt - mb;

    const Range xr = data_range(chart.series, false);
    const Range yr = data_range(chart.series, true);
    auto sx = [&](double x) { return ml + (x - xr.lo) / xr.span() * pw; };
    auto sy = [&](double y) { return mt + ph - (y - yr.lo) / yr.span() * ph; };

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           std::to_string(w) + "\" height=\"" + std::to_string(h) +
           "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
           "\">\n";
    out += "<rect width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" fill=\"#ffffff\"/>\n";
    out += "<text x=\"" + fmt(w / 2.0) +
           "\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" "
           "text-anchor=\"middle\" fill=\"#222222\">" +
           escape(chart.title) + "</text>\n";

    // Gridlines and tick labels.
    const double xstep = nice_step(xr.span(), 8);
    const double ystep = nice_step(yr.span(), 6);
    out += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#555555\">\n";
    for (double t = std::ceil(xr.lo / xstep) * xstep; t <= xr.hi + 1e-12;
         t += xstep) {
        const double px = sx(t);
        out += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(mt) + "\" x2=\"" +
               fmt(px) + "\" y2=\"" + fmt(mt + ph) +
               "\" stroke=\"#e6e6e6\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(mt + ph + 16) +
               "\" text-anchor=\"middle\">" + fmt(t + 0.0) + "</text>\n";
    }
    for (double t = std::ceil(yr.lo / ystep) * ystep; t <= yr.hi + 1e-12;
         t += ystep) {
        const double py = sy(t);
        out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(py) + "\" x2=\"" +
               fmt(ml + pw) + "\" y2=\"" + fmt(py) +
               "\" stroke=\"#e6e6e6\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(py + 4) +
               "\" text-anchor=\"end\">" + fmt(t + 0.0) + "</text>\n";
    }
    out += "</g>\n";

    // Axes.
    out += "<rect x=\"" + fmt(ml) + "\" y=\"" + fmt(mt) + "\" width=\"" +
           fmt(pw) + "\" height=\"" + fmt(ph) +
           "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
    out += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(h - 8.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\" "
           "text-anchor=\"middle\" fill=\"#333333\">" +
           escape(chart.x_label) + "</text>\n";
    out += "<text x=\"14\" y=\"" + fmt(mt + ph / 2) +
           "\" font-family=\"sans-serif\" font-size=\"12\" "
           "text-anchor=\"middle\" fill=\"#333333\" transform=\"rotate(-90 14 " +
           fmt(mt + ph / 2) + ")\">" + escape(chart.y_label) + "</text>\n";

    // Series paths; non-finite samples break the path into segments.
    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const auto& s = chart.series[si];
        if (s.xs.size() != s.ys.size())
            throw ConfigError("svg: series '" + s.label + "' has " +
                              std::to_string(s.xs.size()) + " xs vs " +
                              std::to_string(s.ys.size()) + " ys");
        const char* color = kPalette[si % kPaletteSize];
        std::string d;
        bool pen_down = false;
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) {
                pen_down = false;
                continue;
            }
            d += pen_down ? "L" : "M";
            d += fmt(sx(s.xs[i])) + " " + fmt(sy(s.ys[i])) + " ";
            pen_down = true;
        }
        if (!d.empty())
            out += "<path d=\"" + d +
                   "\" fill=\"none\" stroke-width=\"1.8\" stroke=\"" + color +
                   "\"/>\n";
    }

    // Legend, top-right inside the plot.
    const double lx = ml + pw - 170, lh = 16;
    double ly = mt + 10;
    out += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const char* color = kPalette[si % kPaletteSize];
        out += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
               fmt(lx + 18) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" +
               color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt(lx + 24) + "\" y=\"" + fmt(ly) +
               "\" fill=\"#222222\">" + escape(chart.series[si].label) +
               "</text>\n";
        ly += lh;
    }
    for (const auto& note : chart.notes) {
        out += "<text x=\"" + fmt(lx) + "\" y=\"" + fmt(ly) +
               "\" fill=\"#888888\">" + escape(note) + "</text>\n";
        ly += lh;
    }
    out += "</g>\n</svg>\n";
    return out;
}

}  // namespace adaptlab
