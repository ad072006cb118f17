#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace clg {

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double acc_all = 0;
  std::array<double, 3> acc_type{};           // causal, temporal, descriptive
  std::array<std::size_t, 3> count_type{};    // samples per type
  std::array<std::size_t, 3> correct_type{};  // correct answers per type
  double l_d = 0, l_g = 0, l_n = 0, l_kl = 0, l_qa = 0, total = 0;
  double wall_seconds = 0;
};

class MetricsLog {
 public:
  // Rows must arrive in nondecreasing epoch order, one per (epoch, split).
  void append(const MetricsRow& row);
  const std::vector<MetricsRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t size() const noexcept { return rows_.size(); }

  std::string to_jsonl() const;
  static MetricsLog from_jsonl(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static MetricsLog load(const std::filesystem::path& path);

 private:
  std::vector<MetricsRow> rows_;
};

// Fills acc_all and acc_type from the per-type counts.
void finalize_accuracy(MetricsRow& row);

inline constexpr const char* kCsvHeader =
    "epoch,split,acc_all,acc_causal,acc_temporal,acc_descriptive,l_d,l_g,l_n,l_kl,l_qa,total";

std::string metrics_csv(const MetricsLog& log);
// Line chart of every loss column against epoch, one panel per split.
std::string metrics_svg(const MetricsLog& log);

enum class ReportFormat { Csv, Svg };
// Writes metrics.csv and/or losses.svg into out_dir.
std::vector<std::filesystem::path> emit_report(const MetricsLog& log, const std::filesystem::path& out_dir,
                                               const std::vector<ReportFormat>& formats);
std::vector<ReportFormat> parse_formats(const std::string& list);

}  // namespace clg
