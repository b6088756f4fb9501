#pragma once

// Confusion-matrix scoring: global accuracy, class-average accuracy (mean
// per-class recall), mean IoU and per-class IoU. Counts stay integral until
// a report is taken.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fogsight/dataio.hpp"
#include "fogsight/error.hpp"

namespace fogsight::metrics {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = data::kNumClasses);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t col_sum(std::size_t c) const;
  std::span<const std::uint64_t> counts() const { return counts_; }

  // Ground-truth kIgnore pixels are skipped. Throws DimensionError on a size
  // mismatch and ParameterError on ids outside [0, classes).
  void accumulate(std::span<const std::uint8_t> gt, std::span<const std::uint8_t> pred);
  void accumulate(const data::LabelMap& gt, const data::LabelMap& pred);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

// What happens to classes that never occur in ground truth or prediction.
enum class AbsentPolicy {
  exclude,  // left out of the class average and the mean IoU
  zero,     // counted as 0
};

AbsentPolicy parse_absent_policy(const std::string& name);
std::string to_string(AbsentPolicy policy);

struct ClassScore {
  std::uint64_t intersection = 0;  // diagonal
  std::uint64_t gt_pixels = 0;     // row sum
  std::uint64_t union_pixels = 0;  // row + col - diagonal
  // Empty when undefined (union, respectively gt_pixels, is zero).
  std::optional<double> iou;
  std::optional<double> recall;
};

struct MetricReport {
  double global_acc = 0.0;
  double class_avg_acc = 0.0;
  double mean_iou = 0.0;
  std::vector<ClassScore> per_class;
  std::uint64_t scored_pixels = 0;
  AbsentPolicy absent = AbsentPolicy::exclude;
};

// Throws StateError when the matrix is empty.
MetricReport report(const ConfusionMatrix& cm, AbsentPolicy absent = AbsentPolicy::exclude);

// Marker printed for undefined classes (an em dash).
inline constexpr const char* kUndefinedMarker = "\xE2\x80\x94";

// Percentage with one decimal, rounded half up on the exact count ratio.
std::string format_percent(std::uint64_t numerator, std::uint64_t denominator);
std::string format_percent(double fraction);

struct TableRow {
  std::string name;
  std::string iou;  // "58.3" or the undefined marker
};

// One row per class, in class order. The standard 19 class names are used
// when the report has 19 classes, otherwise "class<i>".
std::vector<TableRow> per_class_table(const MetricReport& report);

// Aligned plain text: summary lines followed by the per-class table.
std::string format_text(const MetricReport& report);
// Header "metric,value", then global_acc, class_avg_acc, mean_iou,
// scored_pixels and iou.<class> rows. Undefined values are left empty.
std::string format_csv(const MetricReport& report);

}  // namespace fogsight::metrics
