#include "vqclust/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace vqclust {

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
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

}  // namespace

void write_scatter_svg(const std::string& path, const std::vector<ScatterSeries>& series,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmin <= xmax)) {
        xmin = ymin = -1.0;
        xmax = ymax = 1.0;
    }
    if (xmax == xmin) {
        xmin -= 1.0;
        xmax += 1.0;
    }
    if (ymax == ymin) {
        ymin -= 1.0;
        ymax += 1.0;
    }

    const double width = 800.0, height = 600.0;
    const double left = 70.0, right = 160.0, top = 50.0, bottom = 60.0;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * plot_w; };
    auto sy = [&](double v) { return top + plot_h - (v - ymin) / (ymax - ymin) * plot_h; };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    out << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"28\" font-size=\"18\" "
           "text-anchor=\"middle\" font-family=\"sans-serif\">"
        << escape_xml(title) << "</text>\n";

    out << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(plot_w)
        << "\" height=\"" << fmt(plot_h) << "\" fill=\"none\" stroke=\"#888888\"/>\n";

    // axis extents
    out << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(height - 36) << "\" font-size=\"11\" "
           "font-family=\"sans-serif\">" << fmt(xmin) << "</text>\n";
    out << "<text x=\"" << fmt(left + plot_w) << "\" y=\"" << fmt(height - 36)
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(xmax)
        << "</text>\n";
    out << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(top + plot_h)
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(ymin)
        << "</text>\n";
    out << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(top + 10)
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << fmt(ymax)
        << "</text>\n";
    out << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 16)
        << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">"
        << escape_xml(x_label) << "</text>\n";
    out << "<text x=\"18\" y=\"" << fmt(top + plot_h / 2)
        << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 18 " << fmt(top + plot_h / 2) << ")\">"
        << escape_xml(y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            out << "<circle cx=\"" << fmt(sx(series[s].x[i])) << "\" cy=\""
                << fmt(sy(series[s].y[i])) << "\" r=\"3\" fill=\"" << color
                << "\" fill-opacity=\"0.75\"/>\n";
    }

    // legend
    double ly = top + 10.0;
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        out << "<circle cx=\"" << fmt(left + plot_w + 22) << "\" cy=\"" << fmt(ly)
            << "\" r=\"5\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << fmt(left + plot_w + 34) << "\" y=\"" << fmt(ly + 4)
            << "\" font-size=\"12\" font-family=\"sans-serif\">" << escape_xml(series[s].name)
            << "</text>\n";
        ly += 20.0;
    }
    out << "</svg>\n";
}

}  // namespace vqclust
