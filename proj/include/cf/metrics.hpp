#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cf/errors.hpp"

namespace cf {

// One evaluated epoch. disc_loss and cf_penalty are 0 for runs where the
// regularizer is off or idle.
struct MetricsRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double disc_loss = 0.0;
  double cf_penalty = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,train_loss,train_top1,val_loss,val_top1,val_top5,disc_loss,cf_penalty";

inline const std::vector<std::string>& metrics_field_names() {
  static const std::vector<std::string> names{"train_loss", "train_top1", "val_loss",
                                              "val_top1",   "val_top5",   "disc_loss",
                                              "cf_penalty"};
  return names;
}

inline double metrics_field(const MetricsRecord& r, std::string_view name) {
  if (name == "train_loss") return r.train_loss;
  if (name == "train_top1") return r.train_top1;
  if (name == "val_loss") return r.val_loss;
  if (name == "val_top1") return r.val_top1;
  if (name == "val_top5") return r.val_top5;
  if (name == "disc_loss") return r.disc_loss;
  if (name == "cf_penalty") return r.cf_penalty;
  throw ConfigError("unknown metrics field " + std::string(name));
}

// Fixed 6-decimal formatting; the one number format used in emitted CSVs, so
// identical runs serialize to identical bytes.
inline std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const MetricsRecord& r : records) {
    out += std::to_string(r.epoch);
    for (const std::string& f : metrics_field_names()) {
      out += ',';
      out += format_fixed(metrics_field(r, f));
    }
    out += '\n';
  }
  return out;
}

// Writes via a temp file in the same directory, then renames into place, so a
// torn run never leaves a half-written artifact at the final path.
inline void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out << content;
    if (!out.good()) throw ConfigError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw ConfigError("cannot move " + tmp + " to " + path);
  }
}

inline std::vector<MetricsRecord> parse_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw ConfigError(path + ": unexpected metrics header");
  }
  std::vector<MetricsRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed value " + cell);
      }
    }
    if (vals.size() != 8) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 8 columns");
    }
    MetricsRecord r;
    r.epoch = static_cast<std::size_t>(vals[0]);
    r.train_loss = vals[1];
    r.train_top1 = vals[2];
    r.val_loss = vals[3];
    r.val_top1 = vals[4];
    r.val_top5 = vals[5];
    r.disc_loss = vals[6];
    r.cf_penalty = vals[7];
    out.push_back(r);
  }
  return out;
}

// Mean of the final min(k, size) values.
inline double avg_last_k(const std::vector<double>& series, std::size_t k) {
  if (series.empty()) throw ContractError("avg_last_k on empty series");
  if (k == 0) throw ContractError("avg_last_k needs k >= 1");
  const std::size_t take = std::min(k, series.size());
  double acc = 0.0;
  for (std::size_t i = series.size() - take; i < series.size(); ++i) acc += series[i];
  return acc / static_cast<double>(take);
}

inline double avg_last_k(const std::vector<MetricsRecord>& records, std::size_t k,
                         std::string_view field) {
  std::vector<double> series;
  series.reserve(records.size());
  for (const MetricsRecord& r : records) series.push_back(metrics_field(r, field));
  return avg_last_k(series, k);
}

}  // namespace cf
