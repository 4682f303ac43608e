#pragma once

#include <filesystem>
#include <string>
#include <vector>

// Static SVG figures. Every function reads its data back from a CSV written by
// the report layer, so a figure never shows a value absent from its CSV.
namespace eeb::plots {

// Heatmap of `value_col` over distinct `row_col` x `col_col` labels (first-seen order).
void heatmap_from_csv(const std::filesystem::path& csv_path, const std::string& row_col, const std::string& col_col,
                      const std::string& value_col, const std::string& title, const std::filesystem::path& out_svg);

// One symmetric signal x signal heatmap per model from sweep_matrix.csv.
// Returns the written files.
std::vector<std::filesystem::path> sweep_heatmaps(const std::filesystem::path& sweep_matrix_csv,
                                                  const std::filesystem::path& out_dir);

// Box-and-whisker chart from boxplot.csv rows (one box per row, labelled signals/model).
void boxplots_from_csv(const std::filesystem::path& csv_path, const std::string& title,
                       const std::filesystem::path& out_svg);

// Per-condition RMSE scatter from per_activity.csv rows; one series per signals/model.
void per_activity_scatter(const std::filesystem::path& csv_path, const std::string& title,
                          const std::filesystem::path& out_svg);

}  // namespace eeb::plots
