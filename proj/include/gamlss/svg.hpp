#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gamlss/diagnostics.hpp"
#include "gamlss/effects.hpp"

namespace gamlss::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool dashed = false;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

/// Round tick positions covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* kColors[] = {"#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910", "#566573"};
  return kColors[i % 6];
}

/// Plot frame mapping data coordinates into a fixed canvas.
class Frame {
 public:
  Frame(double x0, double x1, double y0, double y1, double left = 70, double top = 40, double width = 540,
        double height = 320)
      : x0_(x0), x1_(x1), y0_(y0), y1_(y1), left_(left), top_(top), w_(width), h_(height) {
    if (!(x1_ > x0_)) x1_ = x0_ + 1;
    if (!(y1_ > y0_)) y1_ = y0_ + 1;
  }
  [[nodiscard]] double X(double x) const { return left_ + (x - x0_) / (x1_ - x0_) * w_; }
  [[nodiscard]] double Y(double y) const { return top_ + h_ - (y - y0_) / (y1_ - y0_) * h_; }

  void axes(std::ostringstream& o, const std::string& xlabel, const std::string& ylabel) const {
    o << "<rect x=\"" << px(left_) << "\" y=\"" << px(top_) << "\" width=\"" << px(w_) << "\" height=\"" << px(h_)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (double t : ticks(x0_, x1_)) {
      o << "<line x1=\"" << px(X(t)) << "\" y1=\"" << px(top_ + h_) << "\" x2=\"" << px(X(t)) << "\" y2=\""
        << px(top_ + h_ + 5) << "\" stroke=\"#333\"/>\n";
      o << "<text x=\"" << px(X(t)) << "\" y=\"" << px(top_ + h_ + 18) << "\" text-anchor=\"middle\">" << num(t)
        << "</text>\n";
    }
    for (double t : ticks(y0_, y1_)) {
      o << "<line x1=\"" << px(left_ - 5) << "\" y1=\"" << px(Y(t)) << "\" x2=\"" << px(left_) << "\" y2=\""
        << px(Y(t)) << "\" stroke=\"#333\"/>\n";
      o << "<text x=\"" << px(left_ - 8) << "\" y=\"" << px(Y(t) + 4) << "\" text-anchor=\"end\">" << num(t)
        << "</text>\n";
    }
    o << "<text x=\"" << px(left_ + w_ / 2) << "\" y=\"" << px(top_ + h_ + 36) << "\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
    o << "<text x=\"16\" y=\"" << px(top_ + h_ / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << px(top_ + h_ / 2) << ")\">" << escape(ylabel) << "</text>\n";
  }

  [[nodiscard]] double right() const { return left_ + w_; }
  [[nodiscard]] double top() const { return top_; }

 private:
  double x0_, x1_, y0_, y1_, left_, top_, w_, h_;
};

inline std::string open(double width, double height, const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width) << "\" height=\"" << px(height)
    << "\" viewBox=\"0 0 " << px(width) << ' ' << px(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << px(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  return o.str();
}

inline std::pair<double, double> range(const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : v)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

}  // namespace detail

/// Lines with a legend.
inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<Series>& series) {
  std::vector<double> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  auto [x0, x1] = detail::range(xs);
  auto [y0, y1] = detail::range(ys);
  const double pad = 0.05 * (y1 - y0);
  const detail::Frame f(x0, x1, y0 - pad, y1 + pad);
  std::ostringstream o;
  o << detail::open(760, 420, title);
  f.axes(o, xlabel, ylabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    o << "<polyline fill=\"none\" stroke=\"" << detail::palette(k) << "\" stroke-width=\"1.5\""
      << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << (first ? "" : " ") << detail::px(f.X(s.x[i])) << ',' << detail::px(f.Y(s.y[i]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = f.top() + 14.0 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << detail::px(f.right() + 12) << "\" y1=\"" << detail::px(ly) << "\" x2=\""
      << detail::px(f.right() + 36) << "\" y2=\"" << detail::px(ly) << "\" stroke=\"" << detail::palette(k)
      << "\" stroke-width=\"1.5\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    o << "<text x=\"" << detail::px(f.right() + 40) << "\" y=\"" << detail::px(ly + 4) << "\">"
      << detail::escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Normal q-q plot of residuals with the identity line.
inline std::string qq_plot(const std::string& title, const std::vector<QQPoint>& points) {
  std::vector<double> all;
  for (const auto& p : points) {
    all.push_back(p.theoretical);
    all.push_back(p.sample);
  }
  auto [lo, hi] = detail::range(all);
  const detail::Frame f(lo, hi, lo, hi, 70, 40, 360, 360);
  std::ostringstream o;
  o << detail::open(480, 460, title);
  f.axes(o, "Theoretical quantiles", "Sample quantiles");
  o << "<line x1=\"" << detail::px(f.X(lo)) << "\" y1=\"" << detail::px(f.Y(lo)) << "\" x2=\"" << detail::px(f.X(hi))
    << "\" y2=\"" << detail::px(f.Y(hi)) << "\" stroke=\"#c0392b\"/>\n";
  // Thin very long samples evenly so the file stays small; the ends are kept.
  const std::size_t stride = std::max<std::size_t>(1, points.size() / 2000);
  for (std::size_t i = 0; i < points.size(); i += stride) {
    const auto& p = points[i];
    o << "<circle cx=\"" << detail::px(f.X(p.theoretical)) << "\" cy=\"" << detail::px(f.Y(p.sample))
      << "\" r=\"1.6\" fill=\"#1f4e9c\"/>\n";
  }
  if (!points.empty() && (points.size() - 1) % stride != 0) {
    const auto& p = points.back();
    o << "<circle cx=\"" << detail::px(f.X(p.theoretical)) << "\" cy=\"" << detail::px(f.Y(p.sample))
      << "\" r=\"1.6\" fill=\"#1f4e9c\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Boxplot (Tukey whiskers at 1.5 IQR) next to a histogram of the same values.
inline std::string box_histogram(const std::string& title, std::vector<double> values, double point) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }), values.end());
  std::sort(values.begin(), values.end());
  std::ostringstream o;
  o << detail::open(760, 420, title);
  if (values.size() < 2) {
    o << "<text x=\"380\" y=\"210\" text-anchor=\"middle\">fewer than two successful replicates</text>\n</svg>\n";
    return o.str();
  }
  const double q1 = type7_quantile(values, 0.25), q2 = type7_quantile(values, 0.5), q3 = type7_quantile(values, 0.75);
  const double iqr = q3 - q1;
  const double lo_fence = q1 - 1.5 * iqr, hi_fence = q3 + 1.5 * iqr;
  double wlo = q1, whi = q3;
  for (double v : values)
    if (v >= lo_fence) {
      wlo = v;
      break;
    }
  for (auto it = values.rbegin(); it != values.rend(); ++it)
    if (*it <= hi_fence) {
      whi = *it;
      break;
    }
  auto [y0, y1] = detail::range(values);
  if (std::isfinite(point)) {
    y0 = std::min(y0, point);
    y1 = std::max(y1, point);
  }
  const double pad = 0.05 * (y1 - y0);
  const detail::Frame box(0, 1, y0 - pad, y1 + pad, 70, 40, 160, 320);
  box.axes(o, "", "Replicate value");
  const double cx = box.X(0.5), hw = 40;
  o << "<rect x=\"" << detail::px(cx - hw) << "\" y=\"" << detail::px(box.Y(q3)) << "\" width=\"" << detail::px(2 * hw)
    << "\" height=\"" << detail::px(box.Y(q1) - box.Y(q3)) << "\" fill=\"#d6e4f5\" stroke=\"#1f4e9c\"/>\n";
  o << "<line x1=\"" << detail::px(cx - hw) << "\" y1=\"" << detail::px(box.Y(q2)) << "\" x2=\"" << detail::px(cx + hw)
    << "\" y2=\"" << detail::px(box.Y(q2)) << "\" stroke=\"#1f4e9c\" stroke-width=\"2\"/>\n";
  for (auto [a, b] : {std::pair{q3, whi}, std::pair{q1, wlo}})
    o << "<line x1=\"" << detail::px(cx) << "\" y1=\"" << detail::px(box.Y(a)) << "\" x2=\"" << detail::px(cx)
      << "\" y2=\"" << detail::px(box.Y(b)) << "\" stroke=\"#1f4e9c\"/>\n";
  for (double v : values)
    if (v < lo_fence || v > hi_fence)
      o << "<circle cx=\"" << detail::px(cx) << "\" cy=\"" << detail::px(box.Y(v)) << "\" r=\"2\" fill=\"none\" stroke=\"#c0392b\"/>\n";
  if (std::isfinite(point))
    o << "<line x1=\"" << detail::px(cx - hw - 10) << "\" y1=\"" << detail::px(box.Y(point)) << "\" x2=\""
      << detail::px(cx + hw + 10) << "\" y2=\"" << detail::px(box.Y(point)) << "\" stroke=\"#c0392b\" stroke-dasharray=\"4 3\"/>\n";

  const std::size_t bins = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(values.size())) + 1)), 5, 40);
  const double width = (values.back() - values.front()) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    auto b = width > 0 ? static_cast<std::size_t>((v - values.front()) / width) : 0;
    ++counts[std::min(b, bins - 1)];
  }
  const double top = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  const detail::Frame hist(values.front(), values.front() + width * static_cast<double>(bins), 0, top * 1.05, 320, 40, 400, 320);
  hist.axes(o, "Replicate value", "Count");
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = values.front() + width * static_cast<double>(b);
    o << "<rect x=\"" << detail::px(hist.X(a)) << "\" y=\"" << detail::px(hist.Y(static_cast<double>(counts[b])))
      << "\" width=\"" << detail::px(hist.X(a + width) - hist.X(a)) << "\" height=\""
      << detail::px(hist.Y(0) - hist.Y(static_cast<double>(counts[b]))) << "\" fill=\"#d6e4f5\" stroke=\"#1f4e9c\"/>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace gamlss::svg
