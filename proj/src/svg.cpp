#include "ssccd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssccd/error.hpp"

namespace ssccd::svg {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
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

// Sequential white-to-blue ramp.
std::string ramp(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(247 - t * (247 - 8)));
  const int g = static_cast<int>(std::lround(251 - t * (251 - 48)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string heatmap(const Eigen::MatrixXd& values, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::string& title) {
  const double cell = 28.0;
  const double left = 140.0;
  const double top = 150.0;
  const double width = left + cell * static_cast<double>(values.cols()) + 20.0;
  const double height = top + cell * static_cast<double>(values.rows()) + 20.0;
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = values.data()[i];
    if (!std::isfinite(v)) continue;
    lo = any ? std::min(lo, v) : v;
    hi = any ? std::max(hi, v) : v;
    any = true;
  }
  const double span = hi > lo ? hi - lo : 1.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << num(left) << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    const double x = left + cell * (static_cast<double>(c) + 0.5);
    const std::string label = c < static_cast<Eigen::Index>(col_labels.size()) ? col_labels[c] : "";
    os << "<text transform=\"translate(" << num(x) << ',' << num(top - 6) << ") rotate(-60)\">" << escape(label)
       << "</text>\n";
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    const std::string label = r < static_cast<Eigen::Index>(row_labels.size()) ? row_labels[r] : "";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + cell * 0.65) << "\" text-anchor=\"end\">"
       << escape(label) << "</text>\n";
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      os << "<rect x=\"" << num(left + cell * static_cast<double>(c)) << "\" y=\"" << num(y) << "\" width=\""
         << num(cell) << "\" height=\"" << num(cell) << "\" fill=\"" << ramp((v - lo) / span)
         << "\"><title>" << num(v) << "</title></rect>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string line_chart(const std::vector<Series>& series, const std::string& x_label,
                       const std::string& y_label, const std::string& title) {
  const double w = 520.0;
  const double h = 360.0;
  const double left = 60.0;
  const double right = 150.0;
  const double top = 40.0;
  const double bottom = 50.0;
  double x_lo = 0.0;
  double x_hi = 1.0;
  double y_lo = 0.0;
  double y_hi = 1.0;
  for (const auto& s : series) {
    for (double v : s.x) x_hi = std::max(x_hi, v), x_lo = std::min(x_lo, v);
    for (double v : s.y) y_hi = std::max(y_hi, v), y_lo = std::min(y_lo, v);
  }
  const double pw = w - left - right;
  const double ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return top + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << num(left) << "\" y=\"20\" font-size=\"14\">" << escape(title) << "</text>\n";
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x_lo + (x_hi - x_lo) * t / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * t / 4.0;
    os << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(top + ph + 15) << "\" text-anchor=\"middle\">" << num(fx)
       << "</text>\n";
    os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(fy) + 4) << "\" text-anchor=\"end\">" << num(fy)
       << "</text>\n";
  }
  os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(h - 10) << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(15," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t p = 0; p < std::min(s.x.size(), s.y.size()); ++p) {
      os << (p ? " " : "") << num(px(s.x[p])) << ',' << num(py(s.y[p]));
    }
    os << "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(i);
    os << "<line x1=\"" << num(left + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 30)
       << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(left + pw + 35) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace ssccd::svg
