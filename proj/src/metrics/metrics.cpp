#include "fogsight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "fogsight/error.hpp"

namespace fogsight::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
  if (classes == 0 || classes >= data::kIgnore) {
    throw ParameterError("confusion matrix needs between 1 and 254 classes");
  }
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < k_; ++j) t += at(c, j);
  return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += at(i, c);
  return t;
}

void ConfusionMatrix::accumulate(std::span<const std::uint8_t> gt, std::span<const std::uint8_t> pred) {
  if (gt.size() != pred.size()) {
    throw DimensionError("accumulate: " + std::to_string(gt.size()) + " ground-truth pixels vs " +
                         std::to_string(pred.size()) + " predicted");
  }
  // Validate first so a bad map leaves the matrix untouched.
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == data::kIgnore) continue;
    if (gt[i] >= k_) throw ParameterError("accumulate: ground-truth id " + std::to_string(gt[i]) + " out of range");
    if (pred[i] >= k_) throw ParameterError("accumulate: predicted id " + std::to_string(pred[i]) + " out of range");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] != data::kIgnore) ++counts_[gt[i] * k_ + pred[i]];
  }
}

void ConfusionMatrix::accumulate(const data::LabelMap& gt, const data::LabelMap& pred) {
  if (gt.width != pred.width || gt.height != pred.height) {
    throw DimensionError("accumulate: label maps are " + std::to_string(gt.width) + "x" +
                         std::to_string(gt.height) + " and " + std::to_string(pred.width) + "x" +
                         std::to_string(pred.height));
  }
  accumulate(std::span<const std::uint8_t>(gt.ids), std::span<const std::uint8_t>(pred.ids));
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw DimensionError("cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

AbsentPolicy parse_absent_policy(const std::string& name) {
  if (name == "exclude") return AbsentPolicy::exclude;
  if (name == "zero") return AbsentPolicy::zero;
  throw ConfigError("unknown metrics.absent '" + name + "' (expected exclude or zero)");
}

std::string to_string(AbsentPolicy policy) { return policy == AbsentPolicy::zero ? "zero" : "exclude"; }

MetricReport report(const ConfusionMatrix& cm, AbsentPolicy absent) {
  MetricReport r;
  r.absent = absent;
  r.scored_pixels = cm.total();
  if (r.scored_pixels == 0) throw StateError("metric report is undefined: no pixels were scored");
  const std::size_t k = cm.classes();
  std::uint64_t trace = 0;
  double iou_sum = 0.0, recall_sum = 0.0;
  std::size_t iou_n = 0, recall_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassScore s;
    s.intersection = cm.at(c, c);
    s.gt_pixels = cm.row_sum(c);
    s.union_pixels = s.gt_pixels + cm.col_sum(c) - s.intersection;
    trace += s.intersection;
    if (s.union_pixels > 0) s.iou = static_cast<double>(s.intersection) / static_cast<double>(s.union_pixels);
    if (s.gt_pixels > 0) s.recall = static_cast<double>(s.intersection) / static_cast<double>(s.gt_pixels);
    if (s.iou || absent == AbsentPolicy::zero) {
      iou_sum += s.iou.value_or(0.0);
      ++iou_n;
    }
    if (s.recall || absent == AbsentPolicy::zero) {
      recall_sum += s.recall.value_or(0.0);
      ++recall_n;
    }
    r.per_class.push_back(s);
  }
  r.global_acc = static_cast<double>(trace) / static_cast<double>(r.scored_pixels);
  r.mean_iou = iou_sum / static_cast<double>(iou_n);
  r.class_avg_acc = recall_sum / static_cast<double>(recall_n);
  return r;
}

std::string format_percent(std::uint64_t numerator, std::uint64_t denominator) {
  if (denominator == 0) return kUndefinedMarker;
  // tenths of a percent, half up: floor((1000 n + d/2) / d) done without fractions.
  const unsigned __int128 tenths =
      (static_cast<unsigned __int128>(numerator) * 2000 + denominator) / (2 * static_cast<unsigned __int128>(denominator));
  const auto t = static_cast<std::uint64_t>(tenths);
  return std::to_string(t / 10) + "." + std::to_string(t % 10);
}

std::string format_percent(double fraction) {
  // Nudge by a relative epsilon so values such as 0.5833 -> 58.33 are not
  // pushed below a .x5 boundary by binary representation error.
  const double scaled = fraction * 1000.0;
  const auto t = static_cast<std::int64_t>(std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, std::abs(scaled))));
  std::ostringstream out;
  out << t / 10 << "." << std::abs(t % 10);
  return out.str();
}

namespace {

std::string class_label(const MetricReport& r, std::size_t c) {
  if (r.per_class.size() == data::kNumClasses) return data::class_names()[c];
  return "class" + std::to_string(c);
}

}  // namespace

std::vector<TableRow> per_class_table(const MetricReport& r) {
  std::vector<TableRow> rows;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    rows.push_back({class_label(r, c), format_percent(s.intersection, s.union_pixels)});
  }
  return rows;
}

std::string format_text(const MetricReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "global_acc     " << r.global_acc << "\n";
  out << "class_avg_acc  " << r.class_avg_acc << "\n";
  out << "mean_iou       " << r.mean_iou << "\n";
  out << "scored_pixels  " << r.scored_pixels << "\n";
  out << "absent         " << to_string(r.absent) << "\n\n";
  const auto rows = per_class_table(r);
  std::size_t width = 5;
  for (const auto& row : rows) width = std::max(width, row.name.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "class" << "IoU %\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << row.name << row.iou << "\n";
  }
  return out.str();
}

std::string format_csv(const MetricReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "metric,value\n";
  out << "global_acc," << r.global_acc << "\n";
  out << "class_avg_acc," << r.class_avg_acc << "\n";
  out << "mean_iou," << r.mean_iou << "\n";
  out << "scored_pixels," << r.scored_pixels << "\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    out << "iou." << class_label(r, c) << ",";
    if (r.per_class[c].iou) out << *r.per_class[c].iou;
    out << "\n";
  }
  return out.str();
}

}  // namespace fogsight::metrics
