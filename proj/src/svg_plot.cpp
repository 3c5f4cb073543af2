#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trafficdiff::svg {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  std::ostringstream out;

  Frame(double xa, double xb, double ya, double yb) : x0(xa), x1(xb), y0(ya), y1(yb) {
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    out.precision(5);
  }
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }

  void axes(const std::string& title, const std::string& xl, const std::string& yl, bool x_ticks = true) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
        << "</text>\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << py(y0) << "\" x2=\"" << kW - kRight << "\" y2=\"" << py(y0)
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << py(y0) << "\" x2=\"" << kLeft << "\" y2=\"" << kTop
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">"
        << escape(xl) << "</text>\n"
        << "<text x=\"15\" y=\"" << (kTop + kH - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
        << (kTop + kH - kBottom) / 2 << ")\">" << escape(yl) << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
      const double y = y0 + (y1 - y0) * i / 4.0;
      out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
      if (x_ticks) {
        const double x = x0 + (x1 - x0) * i / 4.0;
        out << "<text x=\"" << px(x) << "\" y=\"" << py(y0) + 16 << "\" text-anchor=\"middle\">" << x << "</text>\n";
      }
    }
  }

  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kTop + 16.0 * static_cast<double>(i);
      out << "<rect x=\"" << kW - kRight + 12 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
          << kColors[i % 10] << "\"/>\n"
          << "<text x=\"" << kW - kRight + 27 << "\" y=\"" << y + 9 << "\">" << escape(names[i]) << "</text>\n";
    }
  }

  std::string finish() {
    out << "</svg>\n";
    return out.str();
  }
};

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const Series& series) {
  double xa = 1e300, xb = -1e300, yb = 0;
  for (const auto& [_, pts] : series)
    for (const auto& [x, y] : pts) {
      xa = std::min(xa, x);
      xb = std::max(xb, x);
      yb = std::max(yb, y);
    }
  if (series.empty()) xa = 0, xb = 1;
  Frame f(xa, xb, 0, yb > 0 ? yb * 1.05 : 1);
  f.axes(title, x_label, y_label);
  std::vector<std::string> names;
  std::size_t i = 0;
  for (const auto& [name, raw] : series) {
    auto pts = raw;
    std::sort(pts.begin(), pts.end());
    f.out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << kColors[i % 10] << "\" points=\"";
    for (const auto& [x, y] : pts) f.out << f.px(x) << ',' << f.py(y) << ' ';
    f.out << "\"/>\n";
    for (const auto& [x, y] : pts)
      f.out << "<circle cx=\"" << f.px(x) << "\" cy=\"" << f.py(y) << "\" r=\"3\" fill=\"" << kColors[i % 10]
            << "\"/>\n";
    names.push_back(name);
    ++i;
  }
  f.legend(names);
  return f.finish();
}

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& labels,
                      const std::vector<double>& values) {
  const double top = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
  Frame f(0, static_cast<double>(std::max<std::size_t>(values.size(), 1)), 0, top > 0 ? top * 1.05 : 1);
  f.axes(title, "", y_label, false);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = f.px(static_cast<double>(i) + 0.15), w = f.px(0.7) - f.px(0);
    f.out << "<rect x=\"" << x << "\" y=\"" << f.py(std::max(values[i], 0.0)) << "\" width=\"" << w
          << "\" height=\"" << f.py(0) - f.py(std::max(values[i], 0.0)) << "\" fill=\"" << kColors[0] << "\"/>\n"
          << "<text x=\"" << x + w / 2 << "\" y=\"" << f.py(0) + 14 << "\" text-anchor=\"end\" transform=\"rotate(-35 "
          << x + w / 2 << ' ' << f.py(0) + 14 << ")\">" << escape(labels[i]) << "</text>\n";
  }
  return f.finish();
}

std::string histogram_overlay(const std::string& title, const std::string& x_label,
                              const std::map<std::string, std::vector<double>>& populations, int bins) {
  double lo = 1e300, hi = -1e300;
  for (const auto& [_, v] : populations)
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (lo > hi) lo = 0, hi = 1;
  if (hi <= lo) hi = lo + 1;
  std::map<std::string, std::vector<double>> binned;
  for (const auto& [name, v] : populations) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double x : v) {
      const int b = std::clamp(static_cast<int>((x - lo) / (hi - lo) * bins), 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0 / static_cast<double>(v.size());
    }
    binned[name] = std::move(h);
  }
  Series s;
  for (const auto& [name, h] : binned)
    for (std::size_t b = 0; b < h.size(); ++b)
      s[name].emplace_back(lo + (hi - lo) * (static_cast<double>(b) + 0.5) / bins, h[b]);
  return line_chart(title, x_label, "fraction", s);
}

std::string binned_overlay(const std::string& title, const std::string& x_label,
                           const std::map<std::string, std::vector<double>>& series) {
  Series s;
  for (const auto& [name, h] : series)
    for (std::size_t b = 0; b < h.size(); ++b)
      s[name].emplace_back((static_cast<double>(b) + 0.5) / static_cast<double>(h.size()), h[b]);
  return line_chart(title, x_label, "fraction", s);
}

}  // namespace trafficdiff::svg
