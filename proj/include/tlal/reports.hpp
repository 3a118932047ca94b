#pragma once

#include <string>
#include <vector>

#include "tlal/common.hpp"
#include "tlal/evaluation.hpp"
#include "tlal/uncertainty.hpp"

namespace tlal::reports {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool bars = false;  // bar chart instead of lines
  std::size_t width = 640;
  std::size_t height = 420;
};

// Writes <path_base>.svg (vector) and <path_base>.ppm (raster fallback).
void write_chart(const ChartSpec& spec, const std::string& path_base);

// Uncertainty-distribution plots: scores in pool order and rank order.
void uncertainty_distribution_plots(const uncertainty::UncertaintyRanking& ranking,
                                    const std::string& out_dir);

// Aligned-text + CSV table of aggregates (strategy, mean AUC, CI).
void write_summary_table(const std::vector<eval::AggregateResult>& aggregates,
                         const std::string& path_base);

// Sample-count table: fraction -> sample-count row for a pool size.
std::vector<std::size_t> sample_count_row(std::size_t pool_size,
                                          const std::vector<double>& fractions);
void write_sample_count_table(std::size_t pool_size, const std::string& path_base);

// Strategy-comparison bar chart (mean AUC with CI per strategy).
void comparison_chart(const std::vector<eval::AggregateResult>& aggregates,
                      const std::string& path_base);

// Sample-size curves with optional full-data baseline reference line.
void sweep_chart(const std::vector<eval::AggregateResult>& aggregates,
                 double baseline_auc, bool have_baseline, const std::string& path_base);

// Range-sweep AUC chart: one bar per uncertainty window.
void range_chart(const std::vector<std::pair<std::string, double>>& window_aucs,
                 const std::string& path_base);

}  // namespace tlal::reports
