#include "srsim/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "srsim/errors.hpp"

namespace srsim {

namespace {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  std::vector<double> ticks;
  if (!(hi > lo)) return ticks;
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  }
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * step; t += step) {
    ticks.push_back(t);
  }
  return ticks;
}

std::string fmt(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) >= 1e4 || std::abs(v) < 1e-3)) {
    std::snprintf(buf, sizeof(buf), "%.2e", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%g", v);
  }
  return buf;
}

}  // namespace

void write_svg_plot(const std::string& path, const PlotSpec& spec,
                    const std::vector<PlotSeries>& series) {
  const int width = 720, height = 480;
  const int ml = 80, mr = 30, mt = 40, mb = 60;

  Range rx, ry;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ValidationError("plot: x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double y = s.y[i];
      if (spec.log_y && !(y > 0.0)) continue;
      rx.expand(s.x[i]);
      ry.expand(spec.log_y ? std::log10(y) : y);
    }
  }
  for (double m : spec.x_markers) rx.expand(m);
  if (!(rx.hi > rx.lo)) {
    rx.lo -= 1.0;
    rx.hi += 1.0;
  }
  if (!(ry.hi > ry.lo)) {
    ry.lo -= 1.0;
    ry.hi += 1.0;
  }
  const double pad = 0.04 * (ry.hi - ry.lo);
  ry.lo -= pad;
  ry.hi += pad;

  const auto px = [&](double x) {
    return ml + (x - rx.lo) / (rx.hi - rx.lo) * (width - ml - mr);
  };
  const auto py = [&](double y) {
    const double v = spec.log_y ? std::log10(y) : y;
    return height - mb - (v - ry.lo) / (ry.hi - ry.lo) * (height - mt - mb);
  };

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << spec.title << "</text>\n";

  // Axes.
  out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  for (double t : nice_ticks(rx.lo, rx.hi)) {
    out << "<line x1=\"" << px(t) << "\" y1=\"" << height - mb << "\" x2=\"" << px(t)
        << "\" y2=\"" << height - mb + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(t) << "\" y=\"" << height - mb + 20
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(t) << "</text>\n";
  }
  for (double t : nice_ticks(ry.lo, ry.hi)) {
    const double y = height - mb - (t - ry.lo) / (ry.hi - ry.lo) * (height - mt - mb);
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"11\">"
        << (spec.log_y ? ("1e" + fmt(t)) : fmt(t)) << "</text>\n";
  }
  out << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\" font-size=\"13\">" << spec.x_label << "</text>\n";
  out << "<text x=\"20\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 20 "
      << (mt + height - mb) / 2 << ")\">" << spec.y_label << "</text>\n";

  for (double m : spec.x_markers) {
    out << "<line x1=\"" << px(m) << "\" y1=\"" << mt << "\" x2=\"" << px(m) << "\" y2=\""
        << height - mb << "\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n";
  }

  int legend_y = mt + 8;
  for (const auto& s : series) {
    if (s.points_only) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (spec.log_y && !(s.y[i] > 0.0)) continue;
        out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
            << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
      }
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (spec.log_y && !(s.y[i] > 0.0)) continue;
        out << px(s.x[i]) << "," << py(s.y[i]) << " ";
      }
      out << "\"/>\n";
    }
    if (!s.label.empty()) {
      out << "<rect x=\"" << width - mr - 150 << "\" y=\"" << legend_y - 8
          << "\" width=\"12\" height=\"4\" fill=\"" << s.color << "\"/>\n";
      out << "<text x=\"" << width - mr - 132 << "\" y=\"" << legend_y
          << "\" font-size=\"12\">" << s.label << "</text>\n";
      legend_y += 18;
    }
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);

  // Companion CSV with the plotted numbers.
  const auto dot = path.find_last_of('.');
  const std::string csv_path = (dot == std::string::npos ? path : path.substr(0, dot)) + ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path);
  csv << "series,x,y\n";
  csv.precision(17);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string name = s.label.empty() ? "series" + std::to_string(si) : s.label;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      csv << name << "," << s.x[i] << "," << s.y[i] << "\n";
    }
  }
}

}  // namespace srsim
