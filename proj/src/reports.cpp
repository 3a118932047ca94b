#include "tlal/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace tlal::reports {

namespace {

struct Bounds {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
};

Bounds data_bounds(const std::vector<Series>& series) {
  Bounds b;
  b.xmin = b.ymin = std::numeric_limits<double>::infinity();
  b.xmax = b.ymax = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (double v : s.x) {
      b.xmin = std::min(b.xmin, v);
      b.xmax = std::max(b.xmax, v);
    }
    for (double v : s.y) {
      b.ymin = std::min(b.ymin, v);
      b.ymax = std::max(b.ymax, v);
    }
  }
  if (!std::isfinite(b.xmin)) b = {0, 1, 0, 1};
  if (b.xmax == b.xmin) b.xmax = b.xmin + 1;
  if (b.ymax == b.ymin) b.ymax = b.ymin + 1;
  // breathing room on y
  double pad = 0.05 * (b.ymax - b.ymin);
  b.ymin -= pad;
  b.ymax += pad;
  return b;
}

std::string fmt(double v) {
  char buf[32];
  if (std::abs(v) >= 1000 || v == std::floor(v))
    std::snprintf(buf, sizeof(buf), "%.0f", v);
  else
    std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// rgb from "#rrggbb"
void parse_color(const std::string& c, unsigned char rgb[3]) {
  unsigned r = 31, g = 119, b = 180;
  if (c.size() == 7 && c[0] == '#') std::sscanf(c.c_str() + 1, "%02x%02x%02x", &r, &g, &b);
  rgb[0] = static_cast<unsigned char>(r);
  rgb[1] = static_cast<unsigned char>(g);
  rgb[2] = static_cast<unsigned char>(b);
}

struct Canvas {
  std::size_t w, h;
  std::vector<unsigned char> px;  // rgb
  Canvas(std::size_t w_, std::size_t h_) : w(w_), h(h_), px(3 * w_ * h_, 255) {}
  void set(long x, long y, const unsigned char rgb[3]) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
    auto* p = &px[3 * (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x))];
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }
  void line(double x0, double y0, double x1, double y1, const unsigned char rgb[3]) {
    double dx = x1 - x0, dy = y1 - y0;
    int steps = static_cast<int>(std::max(std::abs(dx), std::abs(dy))) + 1;
    for (int i = 0; i <= steps; ++i) {
      double t = static_cast<double>(i) / steps;
      set(std::lround(x0 + t * dx), std::lround(y0 + t * dy), rgb);
    }
  }
  void rect(double x0, double y0, double x1, double y1, const unsigned char rgb[3]) {
    for (long y = std::lround(std::min(y0, y1)); y <= std::lround(std::max(y0, y1)); ++y)
      for (long x = std::lround(std::min(x0, x1)); x <= std::lround(std::max(x0, x1)); ++x)
        set(x, y, rgb);
  }
  void write_ppm(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot write " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  }
};

}  // namespace

void write_chart(const ChartSpec& spec, const std::string& path_base) {
  const double W = static_cast<double>(spec.width), H = static_cast<double>(spec.height);
  const double ml = 70, mr = 20, mt = 40, mb = 50;  // margins
  Bounds b = data_bounds(spec.series);
  auto sx = [&](double x) { return ml + (x - b.xmin) / (b.xmax - b.xmin) * (W - ml - mr); };
  auto sy = [&](double y) { return H - mb - (y - b.ymin) / (b.ymax - b.ymin) * (H - mt - mb); };

  const int n_ticks = 5;
  std::vector<std::pair<double, double>> xticks, yticks;  // value, pixel
  for (int i = 0; i <= n_ticks; ++i) {
    double xv = b.xmin + (b.xmax - b.xmin) * i / n_ticks;
    double yv = b.ymin + (b.ymax - b.ymin) * i / n_ticks;
    xticks.emplace_back(xv, sx(xv));
    yticks.emplace_back(yv, sy(yv));
  }

  // ---- SVG ----
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
      << spec.height << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << spec.title << "</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  for (auto& [v, px] : xticks)
    svg << "<line x1=\"" << px << "\" y1=\"" << H - mb << "\" x2=\"" << px << "\" y2=\""
        << H - mb + 5 << "\" stroke=\"black\"/><text x=\"" << px << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(v) << "</text>\n";
  for (auto& [v, py] : yticks)
    svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py << "\" x2=\"" << ml << "\" y2=\"" << py
        << "\" stroke=\"black\"/><text x=\"" << ml - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(v) << "</text>\n";
  svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << spec.x_label << "</text>\n"
      << "<text x=\"16\" y=\"" << (mt + H - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (mt + H - mb) / 2 << ")\">" << spec.y_label << "</text>\n";

  const double bar_group_w = spec.series.empty() || spec.series[0].x.size() < 2
                                 ? (W - ml - mr) * 0.5
                                 : (sx(spec.series[0].x[1]) - sx(spec.series[0].x[0])) * 0.7;
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    if (spec.bars) {
      double bw = bar_group_w / static_cast<double>(spec.series.size());
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        double cx = sx(s.x[i]) - bar_group_w / 2 + bw * (static_cast<double>(si) + 0.5);
        double y0 = sy(std::max(b.ymin, 0.0)), y1 = sy(s.y[i]);
        svg << "<rect x=\"" << cx - bw * 0.4 << "\" y=\"" << std::min(y0, y1) << "\" width=\""
            << bw * 0.8 << "\" height=\"" << std::abs(y0 - y1) << "\" fill=\"" << s.color
            << "\"/>\n";
      }
    } else {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
      if (s.dashed) svg << " stroke-dasharray=\"6,4\"";
      svg << " points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
      svg << "\"/>\n";
    }
    // legend entry
    double ly = mt + 6 + 16 * static_cast<double>(si);
    svg << "<rect x=\"" << W - mr - 110 << "\" y=\"" << ly << "\" width=\"12\" height=\"4\" fill=\""
        << s.color << "\"/><text x=\"" << W - mr - 94 << "\" y=\"" << ly + 6
        << "\" font-size=\"11\">" << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  {
    std::ofstream f(path_base + ".svg");
    if (!f) fail(ErrorCode::io, "cannot write " + path_base + ".svg");
    f << svg.str();
  }

  // ---- PPM raster fallback ----
  Canvas cv(spec.width, spec.height);
  const unsigned char black[3] = {0, 0, 0};
  cv.line(ml, H - mb, W - mr, H - mb, black);
  cv.line(ml, mt, ml, H - mb, black);
  for (auto& [v, px] : xticks) cv.line(px, H - mb, px, H - mb + 5, black);
  for (auto& [v, py] : yticks) cv.line(ml - 5, py, ml, py, black);
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    unsigned char rgb[3];
    parse_color(s.color, rgb);
    if (spec.bars) {
      double bw = bar_group_w / static_cast<double>(spec.series.size());
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        double cx = sx(s.x[i]) - bar_group_w / 2 + bw * (static_cast<double>(si) + 0.5);
        cv.rect(cx - bw * 0.4, sy(std::max(b.ymin, 0.0)), cx + bw * 0.4, sy(s.y[i]), rgb);
      }
    } else {
      for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
        cv.line(sx(s.x[i]), sy(s.y[i]), sx(s.x[i + 1]), sy(s.y[i + 1]), rgb);
    }
  }
  cv.write_ppm(path_base + ".ppm");
}

void uncertainty_distribution_plots(const uncertainty::UncertaintyRanking& ranking,
                                    const std::string& out_dir) {
  if (ranking.records.empty())
    fail(ErrorCode::report, "uncertainty distribution plots need a non-empty ranking");

  // unsorted: pool (id) order; sorted: rank order
  std::vector<uncertainty::UncertaintyRecord> by_id = ranking.records;
  std::sort(by_id.begin(), by_id.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });

  ChartSpec unsorted;
  unsorted.title = "Uncertainty distribution (pool order)";
  unsorted.x_label = "sample index";
  unsorted.y_label = "uncertainty score";
  Series s1{"score", {}, {}, "#1f77b4", false};
  for (std::size_t i = 0; i < by_id.size(); ++i) {
    s1.x.push_back(static_cast<double>(i));
    s1.y.push_back(by_id[i].score);
  }
  unsorted.series = {s1};
  write_chart(unsorted, out_dir + "/uncertainty_unsorted");

  ChartSpec sorted_spec;
  sorted_spec.title = "Uncertainty distribution (sorted)";
  sorted_spec.x_label = "rank";
  sorted_spec.y_label = "uncertainty score";
  Series s2{"score", {}, {}, "#d62728", false};
  for (const auto& r : ranking.records) {
    s2.x.push_back(static_cast<double>(r.rank));
    s2.y.push_back(r.score);
  }
  sorted_spec.series = {s2};
  write_chart(sorted_spec, out_dir + "/uncertainty_sorted");
}

void write_summary_table(const std::vector<eval::AggregateResult>& aggregates,
                         const std::string& path_base) {
  std::ofstream txt(path_base + ".txt");
  std::ofstream csv(path_base + ".csv");
  if (!txt || !csv) fail(ErrorCode::io, "cannot write summary table at " + path_base);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %-10s %-6s %-10s %-22s", "strategy", "fraction",
                "runs", "mean_auc", "95% CI");
  txt << buf << "\n" << std::string(66, '-') << "\n";
  csv << "strategy,sample_fraction,n_runs,mean_auc,ci_low,ci_high\n";
  for (const auto& a : aggregates) {
    std::snprintf(buf, sizeof(buf), "%-14s %-10.3f %-6zu %-10.4f [%.4f, %.4f]",
                  a.strategy.c_str(), a.sample_fraction, a.n_runs, a.mean_auc, a.ci_low,
                  a.ci_high);
    txt << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%zu,%.10f,%.10f,%.10f", a.strategy.c_str(),
                  a.sample_fraction, a.n_runs, a.mean_auc, a.ci_low, a.ci_high);
    csv << buf << "\n";
  }
}

std::vector<std::size_t> sample_count_row(std::size_t pool_size,
                                          const std::vector<double>& fractions) {
  std::vector<std::size_t> row;
  for (double f : fractions) {
    if (f <= 0.0 || f > 1.0) fail(ErrorCode::domain, "sample fraction out of (0,1]");
    row.push_back(round_half_up(f * static_cast<double>(pool_size)));
  }
  return row;
}

void write_sample_count_table(std::size_t pool_size, const std::string& path_base) {
  std::vector<double> fractions;
  for (int i = 1; i <= 8; ++i) fractions.push_back(i * 0.1);
  auto row = sample_count_row(pool_size, fractions);
  std::ofstream txt(path_base + ".txt");
  std::ofstream csv(path_base + ".csv");
  if (!txt || !csv) fail(ErrorCode::io, "cannot write sample count table at " + path_base);
  txt << "pool size: " << pool_size << "\n";
  txt << "fraction ";
  for (double f : fractions) txt << " " << fmt(f * 100) << "%";
  txt << "\nsamples  ";
  for (auto n : row) txt << " " << n;
  txt << "\n";
  csv << "fraction,samples\n";
  for (std::size_t i = 0; i < row.size(); ++i)
    csv << fmt(fractions[i]) << "," << row[i] << "\n";
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void comparison_chart(const std::vector<eval::AggregateResult>& aggregates,
                      const std::string& path_base) {
  if (aggregates.empty()) fail(ErrorCode::report, "comparison chart needs aggregates");
  ChartSpec spec;
  spec.title = "Strategy comparison (mean test AUC)";
  spec.x_label = "strategy";
  spec.y_label = "AUC";
  spec.bars = true;
  for (std::size_t i = 0; i < aggregates.size(); ++i) {
    char lbl[96];
    std::snprintf(lbl, sizeof(lbl), "%s %.0f%%", aggregates[i].strategy.c_str(),
                  aggregates[i].sample_fraction * 100);
    Series s{lbl, {static_cast<double>(i)}, {aggregates[i].mean_auc},
             kPalette[i % 6], false};
    spec.series.push_back(std::move(s));
  }
  write_chart(spec, path_base);
}

void sweep_chart(const std::vector<eval::AggregateResult>& aggregates, double baseline_auc,
                 bool have_baseline, const std::string& path_base) {
  if (aggregates.empty()) fail(ErrorCode::report, "sweep chart needs aggregates");
  std::map<std::string, Series> by_strategy;
  double xmin = 1e9, xmax = -1e9;
  for (const auto& a : aggregates) {
    auto& s = by_strategy[a.strategy];
    s.label = a.strategy;
    s.x.push_back(a.sample_fraction * 100);
    s.y.push_back(a.mean_auc);
    xmin = std::min(xmin, a.sample_fraction * 100);
    xmax = std::max(xmax, a.sample_fraction * 100);
  }
  ChartSpec spec;
  spec.title = "Test AUC vs sample size";
  spec.x_label = "sample size (% of pool)";
  spec.y_label = "mean AUC";
  std::size_t ci = 0;
  for (auto& [name, s] : by_strategy) {
    s.color = kPalette[ci++ % 6];
    spec.series.push_back(s);
  }
  if (have_baseline) {
    Series base{"full data", {xmin, xmax}, {baseline_auc, baseline_auc}, "#333333", true};
    spec.series.push_back(std::move(base));
  }
  write_chart(spec, path_base);
}

void range_chart(const std::vector<std::pair<std::string, double>>& window_aucs,
                 const std::string& path_base) {
  if (window_aucs.empty()) fail(ErrorCode::report, "range chart needs window results");
  ChartSpec spec;
  spec.title = "AUC by uncertainty range";
  spec.x_label = "uncertainty window";
  spec.y_label = "AUC";
  spec.bars = true;
  for (std::size_t i = 0; i < window_aucs.size(); ++i) {
    Series s{window_aucs[i].first,
             {static_cast<double>(i)},
             {window_aucs[i].second},
             kPalette[i % 6],
             false};
    spec.series.push_back(std::move(s));
  }
  write_chart(spec, path_base);
}

}  // namespace tlal::reports
