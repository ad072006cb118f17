#include "clg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "clg/errors.hpp"
#include "json.hpp"

namespace clg {
namespace {

using json = nlohmann::json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Shortest text that reads back to the same double.
std::string num(double v) {
  for (int prec = 6; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return fmt("%.17g", v);
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << s;
  if (!out) throw IoError("short write to " + p.string());
}

constexpr std::array<const char*, 6> kLossNames = {"l_d", "l_g", "l_n", "l_kl", "l_qa", "total"};
constexpr std::array<const char*, 6> kLossColors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#111111"};

std::array<double, 6> losses(const MetricsRow& r) { return {r.l_d, r.l_g, r.l_n, r.l_kl, r.l_qa, r.total}; }

}  // namespace

void finalize_accuracy(MetricsRow& row) {
  std::size_t n = 0, c = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    n += row.count_type[t];
    c += row.correct_type[t];
    row.acc_type[t] = row.count_type[t] ? static_cast<double>(row.correct_type[t]) / row.count_type[t] : 0.0;
  }
  row.acc_all = n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
}

void MetricsLog::append(const MetricsRow& row) {
  if (!(row.acc_all >= 0.0 && row.acc_all <= 1.0)) throw ContractError("metrics row accuracy outside [0,1]");
  for (double a : row.acc_type) {
    if (!(a >= 0.0 && a <= 1.0)) throw ContractError("metrics row accuracy outside [0,1]");
  }
  if (!rows_.empty()) {
    const auto& last = rows_.back();
    if (row.epoch < last.epoch || (row.epoch == last.epoch && row.split == last.split)) {
      throw ContractError("metrics rows must be epoch-ordered");
    }
  }
  rows_.push_back(row);
}

std::string MetricsLog::to_jsonl() const {
  std::string out;
  for (const auto& r : rows_) {
    json j{{"epoch", r.epoch},
           {"split", r.split},
           {"acc_all", r.acc_all},
           {"acc_type", r.acc_type},
           {"count_type", r.count_type},
           {"correct_type", r.correct_type},
           {"l_d", r.l_d},
           {"l_g", r.l_g},
           {"l_n", r.l_n},
           {"l_kl", r.l_kl},
           {"l_qa", r.l_qa},
           {"total", r.total},
           {"wall_seconds", r.wall_seconds}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

MetricsLog MetricsLog::from_jsonl(const std::string& text) {
  MetricsLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      MetricsRow r;
      r.epoch = j.at("epoch").get<std::size_t>();
      r.split = j.at("split").get<std::string>();
      r.acc_all = j.at("acc_all").get<double>();
      r.acc_type = j.at("acc_type").get<std::array<double, 3>>();
      r.count_type = j.at("count_type").get<std::array<std::size_t, 3>>();
      r.correct_type = j.at("correct_type").get<std::array<std::size_t, 3>>();
      r.l_d = j.at("l_d").get<double>();
      r.l_g = j.at("l_g").get<double>();
      r.l_n = j.at("l_n").get<double>();
      r.l_kl = j.at("l_kl").get<double>();
      r.l_qa = j.at("l_qa").get<double>();
      r.total = j.at("total").get<double>();
      r.wall_seconds = j.value("wall_seconds", 0.0);
      log.append(r);
    } catch (const json::exception& e) {
      throw FormatError("metrics log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

void MetricsLog::save(const std::filesystem::path& path) const { write_text(path, to_jsonl()); }

MetricsLog MetricsLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

std::string metrics_csv(const MetricsLog& log) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : log.rows()) {
    out += std::to_string(r.epoch) + ',' + r.split + ',' + num(r.acc_all);
    for (double a : r.acc_type) out += ',' + num(a);
    for (double l : losses(r)) out += ',' + num(l);
    out += '\n';
  }
  return out;
}

std::string metrics_svg(const MetricsLog& log) {
  constexpr double W = 640, H = 300, left = 60, right = 130, top = 30, bottom = 40;
  std::vector<std::string> splits;
  for (const auto& r : log.rows()) {
    if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) splits.push_back(r.split);
  }
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H * splits.size()
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t p = 0; p < splits.size(); ++p) {
    std::vector<const MetricsRow*> rows;
    for (const auto& r : log.rows()) {
      if (r.split == splits[p]) rows.push_back(&r);
    }
    double xmin = rows.front()->epoch, xmax = rows.back()->epoch;
    double ymin = 0, ymax = 0;
    for (const auto* r : rows) {
      for (double v : losses(*r)) {
        if (std::isfinite(v)) {
          ymin = std::min(ymin, v);
          ymax = std::max(ymax, v);
        }
      }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double oy = H * p;
    auto X = [&](double e) { return left + (e - xmin) / (xmax - xmin) * (W - left - right); };
    auto Y = [&](double v) { return oy + top + (ymax - v) / (ymax - ymin) * (H - top - bottom); };
    s << "<text x=\"" << left << "\" y=\"" << fmt("%.1f", oy + 18) << "\">" << splits[p] << " losses</text>\n";
    s << "<rect x=\"" << left << "\" y=\"" << fmt("%.1f", oy + top) << "\" width=\"" << W - left - right
      << "\" height=\"" << H - top - bottom << "\" fill=\"none\" stroke=\"#888\"/>\n";
    s << "<text x=\"" << left - 5 << "\" y=\"" << fmt("%.1f", Y(ymax) + 4) << "\" text-anchor=\"end\">"
      << fmt("%.3g", ymax) << "</text>\n";
    s << "<text x=\"" << left - 5 << "\" y=\"" << fmt("%.1f", Y(ymin) + 4) << "\" text-anchor=\"end\">"
      << fmt("%.3g", ymin) << "</text>\n";
    s << "<text x=\"" << fmt("%.1f", X(xmin)) << "\" y=\"" << fmt("%.1f", oy + H - bottom + 15)
      << "\" text-anchor=\"middle\">" << fmt("%.0f", xmin) << "</text>\n";
    s << "<text x=\"" << fmt("%.1f", X(xmax)) << "\" y=\"" << fmt("%.1f", oy + H - bottom + 15)
      << "\" text-anchor=\"middle\">" << fmt("%.0f", xmax) << "</text>\n";
    s << "<text x=\"" << fmt("%.1f", (X(xmin) + X(xmax)) / 2) << "\" y=\"" << fmt("%.1f", oy + H - 8)
      << "\" text-anchor=\"middle\">epoch</text>\n";
    for (std::size_t k = 0; k < kLossNames.size(); ++k) {
      s << "<polyline fill=\"none\" stroke=\"" << kLossColors[k] << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double v = losses(*rows[i])[k];
        if (i) s << ' ';
        s << fmt("%.2f", X(rows[i]->epoch)) << ',' << fmt("%.2f", Y(std::isfinite(v) ? v : ymax));
      }
      s << "\"/>\n";
      const double ly = oy + top + 14 * k + 8;
      s << "<line x1=\"" << W - right + 10 << "\" y1=\"" << fmt("%.1f", ly) << "\" x2=\"" << W - right + 30
        << "\" y2=\"" << fmt("%.1f", ly) << "\" stroke=\"" << kLossColors[k] << "\" stroke-width=\"2\"/>\n";
      s << "<text x=\"" << W - right + 35 << "\" y=\"" << fmt("%.1f", ly + 4) << "\">" << kLossNames[k]
        << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> emit_report(const MetricsLog& log, const std::filesystem::path& out_dir,
                                               const std::vector<ReportFormat>& formats) {
  if (log.empty()) throw ContractError("emit_report: empty metrics log");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create report directory " + out_dir.string());
  }
  std::vector<std::filesystem::path> written;
  for (auto f : formats) {
    const auto path = out_dir / (f == ReportFormat::Csv ? "metrics.csv" : "losses.svg");
    write_text(path, f == ReportFormat::Csv ? metrics_csv(log) : metrics_svg(log));
    written.push_back(path);
  }
  return written;
}

std::vector<ReportFormat> parse_formats(const std::string& list) {
  std::vector<ReportFormat> out;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "csv") out.push_back(ReportFormat::Csv);
    else if (item == "svg") out.push_back(ReportFormat::Svg);
    else if (!item.empty()) throw ContractError("unknown report format '" + item + "'");
  }
  if (out.empty()) throw ContractError("no report format given");
  return out;
}

}  // namespace clg
