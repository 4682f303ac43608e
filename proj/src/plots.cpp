#include "eeb/plots.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "eeb/csv.hpp"
#include "eeb/report.hpp"

namespace eeb::plots {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v, int digits = 2) {
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.*f", digits, v);
  return buf.data();
}

std::string xml_escape(const std::string& s) {
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

// Piecewise-linear approximation of the viridis map, t in [0, 1].
std::string colour(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  if (!std::isfinite(t)) return "#cccccc";
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<char, 8> buf{};
  std::snprintf(buf.data(), buf.size(), "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf.data();
}

std::string palette(std::size_t i) {
  static constexpr std::array<const char*, 8> p{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return p[i % p.size()];
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}
  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& stroke = "none") {
    out_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
         << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#000") {
    out_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\"" << fmt(y2)
         << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    out_ << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"" << fmt(r) << "\" fill=\"" << fill
         << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11, const char* anchor = "middle",
            double rotate = 0.0) {
    out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) out_ << " transform=\"rotate(" << fmt(rotate) << ' ' << fmt(x) << ' ' << fmt(y) << ")\"";
    out_ << ">" << xml_escape(s) << "</text>\n";
  }
  void save(const std::filesystem::path& path) const {
    std::ostringstream doc;
    doc << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w_, 0) << "\" height=\"" << fmt(h_, 0)
        << "\" viewBox=\"0 0 " << fmt(w_, 0) << ' ' << fmt(h_, 0) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << out_.str() << "</svg>\n";
    write_text_file(path, doc.str());
  }

 private:
  double w_;
  double h_;
  std::ostringstream out_;
};

double cell_value(const std::string& s) {
  if (s.empty() || s == "nan") return kNaN;
  return csv::to_double(s);
}

std::size_t index_of(std::vector<std::string>& labels, const std::string& s) {
  auto it = std::find(labels.begin(), labels.end(), s);
  if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
  labels.push_back(s);
  return labels.size() - 1;
}

struct Grid {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::map<std::pair<std::size_t, std::size_t>, double> values;
};

void draw_heatmap(const Grid& g, const std::string& title, const std::filesystem::path& out) {
  const double cell = 34.0;
  const double left = 150.0;
  const double top = 50.0;
  const double bottom = 130.0;
  const double legend = 90.0;
  const double width = left + cell * static_cast<double>(g.cols.size()) + legend;
  const double height = top + cell * static_cast<double>(g.rows.size()) + bottom;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [k, v] : g.values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  Svg svg(width, height);
  svg.text(width / 2, 24, title, 14);
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    svg.text(left - 6, y + cell * 0.6, g.rows[r], 10, "end");
    for (std::size_t c = 0; c < g.cols.size(); ++c) {
      const double x = left + cell * static_cast<double>(c);
      auto it = g.values.find({r, c});
      if (it == g.values.end()) {
        svg.rect(x, y, cell, cell, "#ffffff", "#eeeeee");
        continue;
      }
      svg.rect(x, y, cell, cell, colour((it->second - lo) / span), "#ffffff");
      if (std::isfinite(it->second))
        svg.text(x + cell / 2, y + cell * 0.6, fmt(it->second), 8, "middle");
    }
  }
  const double label_y = top + cell * static_cast<double>(g.rows.size()) + 8;
  for (std::size_t c = 0; c < g.cols.size(); ++c) {
    const double x = left + cell * (static_cast<double>(c) + 0.5);
    svg.text(x, label_y, g.cols[c], 10, "end", -60.0);
  }
  if (std::isfinite(lo)) {
    const double lx = left + cell * static_cast<double>(g.cols.size()) + 20;
    for (int i = 0; i < 10; ++i) {
      const double t = 1.0 - i / 9.0;
      svg.rect(lx, top + 12.0 * i, 14, 12, colour(t));
    }
    svg.text(lx + 18, top + 10, fmt(hi), 9, "start");
    svg.text(lx + 18, top + 118, fmt(lo), 9, "start");
  }
  svg.save(out);
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
};

Axis nice_axis(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {};
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  return {std::max(0.0, lo - pad), hi + pad};
}

void draw_y_axis(Svg& svg, const Axis& axis, double x, double top, double h, const std::string& label) {
  svg.line(x, top, x, top + h);
  for (int i = 0; i <= 5; ++i) {
    const double v = axis.lo + (axis.hi - axis.lo) * i / 5.0;
    const double y = top + h - h * i / 5.0;
    svg.line(x - 4, y, x, y);
    svg.text(x - 6, y + 3, fmt(v), 9, "end");
  }
  svg.text(x - 40, top + h / 2, label, 11, "middle", -90.0);
}

}  // namespace

void heatmap_from_csv(const std::filesystem::path& csv_path, const std::string& row_col, const std::string& col_col,
                      const std::string& value_col, const std::string& title, const std::filesystem::path& out_svg) {
  const auto table = csv::read(csv_path);
  const auto ri = table.column(row_col, csv_path.string());
  const auto ci = table.column(col_col, csv_path.string());
  const auto vi = table.column(value_col, csv_path.string());
  Grid g;
  for (const auto& row : table.rows) {
    const auto r = index_of(g.rows, row[ri]);
    const auto c = index_of(g.cols, row[ci]);
    g.values[{r, c}] = cell_value(row[vi]);
  }
  draw_heatmap(g, title, out_svg);
}

std::vector<std::filesystem::path> sweep_heatmaps(const std::filesystem::path& sweep_matrix_csv,
                                                  const std::filesystem::path& out_dir) {
  const auto table = csv::read(sweep_matrix_csv);
  const auto ai = table.column("signal_a", sweep_matrix_csv.string());
  const auto bi = table.column("signal_b", sweep_matrix_csv.string());
  const auto mi = table.column("model", sweep_matrix_csv.string());
  const auto vi = table.column("rmse", sweep_matrix_csv.string());

  std::vector<std::string> models;
  for (const auto& row : table.rows) index_of(models, row[mi]);

  std::vector<std::filesystem::path> written;
  for (const auto& model : models) {
    Grid g;
    for (const auto& row : table.rows) {
      if (row[mi] != model) continue;
      index_of(g.rows, row[ai]);
      index_of(g.rows, row[bi]);
    }
    g.cols = g.rows;
    for (const auto& row : table.rows) {
      if (row[mi] != model) continue;
      const auto a = index_of(g.rows, row[ai]);
      const auto b = index_of(g.rows, row[bi]);
      const double v = cell_value(row[vi]);
      g.values[{a, b}] = v;
      g.values[{b, a}] = v;
    }
    const auto path = out_dir / ("heatmap_" + sanitize_label(model) + ".svg");
    draw_heatmap(g, "Pairwise RMSE (W/kg), " + model, path);
    written.push_back(path);
  }
  return written;
}

void boxplots_from_csv(const std::filesystem::path& csv_path, const std::string& title,
                       const std::filesystem::path& out_svg) {
  const auto table = csv::read(csv_path);
  const auto ctx = csv_path.string();
  const auto si = table.column("signals", ctx);
  const auto mi = table.column("model", ctx);
  const std::array<std::size_t, 5> qi{table.column("whisker_lo", ctx), table.column("q25", ctx),
                                      table.column("median", ctx), table.column("q75", ctx),
                                      table.column("whisker_hi", ctx)};
  const auto oi = table.column("outliers", ctx);

  struct Box {
    std::string label;
    std::string model;
    std::array<double, 5> q{};
    std::vector<double> outliers;
  };
  std::vector<Box> boxes;
  std::vector<std::string> models;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& row : table.rows) {
    Box b{row[si], row[mi], {}, {}};
    index_of(models, b.model);
    for (std::size_t k = 0; k < 5; ++k) b.q[k] = cell_value(row[qi[k]]);
    std::istringstream os(row[oi]);
    for (std::string tok; os >> tok;) b.outliers.push_back(csv::to_double(tok));
    for (double v : b.q) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : b.outliers) lo = std::min(lo, v), hi = std::max(hi, v);
    boxes.push_back(std::move(b));
  }
  const Axis axis = nice_axis(lo, hi);

  const double slot = 36.0;
  const double left = 70.0;
  const double top = 50.0;
  const double h = 300.0;
  const double width = left + slot * static_cast<double>(std::max<std::size_t>(boxes.size(), 1)) + 150.0;
  const double height = top + h + 170.0;
  const auto y_of = [&](double v) { return top + h - h * (v - axis.lo) / (axis.hi - axis.lo); };

  Svg svg(width, height);
  svg.text(width / 2, 24, title, 14);
  draw_y_axis(svg, axis, left, top, h, "RMSE (W/kg)");
  svg.line(left, top + h, left + slot * static_cast<double>(boxes.size()), top + h);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const auto col = palette(index_of(models, b.model));
    svg.line(cx, y_of(b.q[0]), cx, y_of(b.q[1]));
    svg.line(cx, y_of(b.q[3]), cx, y_of(b.q[4]));
    svg.line(cx - 6, y_of(b.q[0]), cx + 6, y_of(b.q[0]));
    svg.line(cx - 6, y_of(b.q[4]), cx + 6, y_of(b.q[4]));
    svg.rect(cx - 11, y_of(b.q[3]), 22, std::max(0.5, y_of(b.q[1]) - y_of(b.q[3])), col, "#000");
    svg.line(cx - 11, y_of(b.q[2]), cx + 11, y_of(b.q[2]), "#ffffff");
    for (double v : b.outliers) svg.circle(cx, y_of(v), 2.5, "#000");
    svg.text(cx, top + h + 10, b.label, 9, "end", -60.0);
  }
  const double lx = left + slot * static_cast<double>(boxes.size()) + 20;
  for (std::size_t m = 0; m < models.size(); ++m) {
    svg.rect(lx, top + 16.0 * m, 10, 10, palette(m));
    svg.text(lx + 14, top + 16.0 * m + 9, models[m], 10, "start");
  }
  svg.save(out_svg);
}

void per_activity_scatter(const std::filesystem::path& csv_path, const std::string& title,
                          const std::filesystem::path& out_svg) {
  const auto table = csv::read(csv_path);
  const auto ctx = csv_path.string();
  const auto si = table.column("signals", ctx);
  const auto mi = table.column("model", ctx);
  const auto ai = table.column("activity", ctx);
  const auto ci = table.column("condition", ctx);
  const auto ti = table.column("transition", ctx);
  const auto vi = table.column("rmse", ctx);

  std::vector<std::string> series;
  std::vector<std::string> conditions;
  struct Point {
    std::size_t series;
    std::size_t x;
    double y;
  };
  std::vector<Point> points;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& row : table.rows) {
    const std::string cond = row[ti] == "1" ? "transition" : row[ai] + " " + row[ci];
    const double y = cell_value(row[vi]);
    const auto s = index_of(series, row[si] + " / " + row[mi]);
    const auto x = index_of(conditions, cond);
    if (!std::isfinite(y)) continue;
    points.push_back({s, x, y});
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  const Axis axis = nice_axis(lo, hi);

  const double slot = 26.0;
  const double left = 70.0;
  const double top = 50.0;
  const double h = 300.0;
  const double plot_w = slot * static_cast<double>(std::max<std::size_t>(conditions.size(), 1));
  const double width = left + plot_w + 240.0;
  const double height = top + h + 150.0;
  const auto y_of = [&](double v) { return top + h - h * (v - axis.lo) / (axis.hi - axis.lo); };

  Svg svg(width, height);
  svg.text(width / 2, 24, title, 14);
  draw_y_axis(svg, axis, left, top, h, "RMSE (W/kg)");
  svg.line(left, top + h, left + plot_w, top + h);
  for (std::size_t x = 0; x < conditions.size(); ++x)
    svg.text(left + slot * (static_cast<double>(x) + 0.5), top + h + 10, conditions[x], 9, "end", -60.0);
  const double jitter = series.size() > 1 ? 12.0 / static_cast<double>(series.size() - 1) : 0.0;
  for (const auto& p : points) {
    const double cx = left + slot * (static_cast<double>(p.x) + 0.5) - 6.0 * (series.size() > 1) +
                      jitter * static_cast<double>(p.series);
    svg.circle(cx, y_of(p.y), 3.0, palette(p.series));
  }
  const double lx = left + plot_w + 20;
  for (std::size_t s = 0; s < series.size(); ++s) {
    svg.circle(lx + 5, top + 16.0 * s + 5, 4, palette(s));
    svg.text(lx + 14, top + 16.0 * s + 9, series[s], 10, "start");
  }
  svg.save(out_svg);
}

}  // namespace eeb::plots
