#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgpl::pipe {

inline constexpr std::array<const char*, 12> kMetricsColumns = {
    "stage", "iter",  "seconds",   "mean_reward", "r_align",   "r_video",
    "r_image", "r_motion", "kl", "clip_frac", "grad_norm", "validity"};

inline constexpr const char* kMetricsHeader =
    "stage,iter,seconds,mean_reward,r_align,r_video,r_image,r_motion,kl,clip_frac,grad_norm,validity";

// Unset fields are written as empty cells.
struct MetricsRow {
  std::string stage;
  std::size_t iter = 0;
  double seconds = 0.0;
  std::optional<double> mean_reward;
  std::optional<double> r_align;
  std::optional<double> r_video;
  std::optional<double> r_image;
  std::optional<double> r_motion;
  std::optional<double> kl;
  std::optional<double> clip_frac;
  std::optional<double> grad_norm;
  std::optional<double> validity;
};

std::string format_row(const MetricsRow& row);

// Truncates the file and writes the header. Rows must keep a stage's
// iterations non-decreasing; a regression throws std::logic_error.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRow& row);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::string last_stage_;
  std::size_t last_iter_ = 0;
  bool any_ = false;
};

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct MetricsTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // Per column: true for labels, false for numbers, empty when no cell is set.
  std::vector<std::optional<bool>> text;
};

// Plain comma-separated text without quoting. Throws CsvError naming the
// offending line when a row's width differs from the header's or a column
// mixes labels and numbers.
MetricsTable parse_csv(const std::string& text);

// One panel per non-label column, plotted against "iter" (or the row index
// when there is no such column). Columns with no numeric cell get a <text>
// note instead of a polyline. Output depends on the input text only.
std::string metrics_svg(const MetricsTable& table, const std::string& title = "metrics");
void plot_metrics(const std::string& csv_path, const std::string& svg_path);

}  // namespace fgpl::pipe
