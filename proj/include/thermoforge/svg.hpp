#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "thermoforge/core.hpp"

namespace thermoforge {

struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
};

// Self-contained deterministic SVG line plot; no rendering dependencies.
inline std::string render_svg(const std::vector<PlotSeries>& series,
                              const std::string& title = "",
                              const std::string& xlabel = "",
                              const std::string& ylabel = "") {
    require(!series.empty(), "render_svg: at least one series required");
    for (const auto& s : series) {
        require(!s.x.empty() && s.x.size() == s.y.size(),
                "render_svg: series must be non-empty with matching x/y");
        for (std::size_t i = 0; i < s.x.size(); ++i)
            require(std::isfinite(s.x[i]) && std::isfinite(s.y[i]),
                    "render_svg: non-finite value in series '" + s.name + "'");
    }
    const int W = 800, H = 500, ml = 70, mr = 160, mt = 40, mb = 50;
    double xmin = series[0].x[0], xmax = xmin, ymin = series[0].y[0], ymax = ymin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmax == xmin) { xmax += 1.0; xmin -= 1.0; }
    if (ymax == ymin) { ymax += 1.0; ymin -= 1.0; }
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    static const char* palette[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                                    "#d35400", "#16a085", "#2c3e50", "#f39c12"};
    char buf[512];
    std::string out;
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" "
                  "fill=\"white\"/>\n",
                  W, H, W, H, W, H);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" "
                  "stroke=\"black\"/>\n",
                  ml, mt, W - ml - mr, H - mt - mb);
    out += buf;
    if (!title.empty()) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" "
                      "font-family=\"sans-serif\">%s</text>\n",
                      (ml + W - mr) / 2, title.c_str());
        out += buf;
    }
    // Min/max axis labels.
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"11\" font-family=\"sans-serif\">"
                  "%.6g</text>\n<text x=\"%d\" y=\"%d\" font-size=\"11\" "
                  "text-anchor=\"end\" font-family=\"sans-serif\">%.6g</text>\n",
                  ml, H - mb + 16, xmin, W - mr, H - mb + 16, xmax);
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-size=\"11\" text-anchor=\"end\" "
                  "font-family=\"sans-serif\">%.6g</text>\n<text x=\"%d\" y=\"%d\" "
                  "font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
                  "%.6g</text>\n",
                  ml - 6, H - mb, ymin, ml - 6, mt + 10, ymax);
    out += buf;
    if (!xlabel.empty()) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"13\" text-anchor=\"middle\" "
                      "font-family=\"sans-serif\">%s</text>\n",
                      (ml + W - mr) / 2, H - 12, xlabel.c_str());
        out += buf;
    }
    if (!ylabel.empty()) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"16\" y=\"%d\" font-size=\"13\" text-anchor=\"middle\" "
                      "font-family=\"sans-serif\" transform=\"rotate(-90 16 %d)\">%s"
                      "</text>\n",
                      (mt + H - mb) / 2, (mt + H - mb) / 2, ylabel.c_str());
        out += buf;
    }
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = palette[si % 8];
        if (s.x.size() == 1) {
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                          px(s.x[0]), py(s.y[0]), color);
            out += buf;
        } else {
            out += "<polyline fill=\"none\" stroke=\"";
            out += color;
            out += "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
                out += buf;
            }
            out += "\"/>\n";
        }
        // Legend entry.
        int ly = mt + 16 + static_cast<int>(si) * 18;
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"%s\" "
                      "stroke-width=\"2\"/>\n<text x=\"%d\" y=\"%d\" font-size=\"12\" "
                      "font-family=\"sans-serif\">%s</text>\n",
                      W - mr + 10, ly, W - mr + 34, ly, color, W - mr + 40, ly + 4,
                      s.name.c_str());
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace thermoforge
