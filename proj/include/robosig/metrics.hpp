#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "robosig/error.hpp"

namespace robosig {

inline constexpr const char* kMetricsHeader =
    "run_id,phase,step,split,bit_accuracy,psnr_db,loss_m,loss_i,loss_total,config_hash";

// One measurement row.
struct EvalRecord {
  std::string run_id;
  std::string phase;
  long step = 0;
  std::string split = "eval";  // "train" or "eval"
  double bit_accuracy = 0.0;
  double psnr_db = 0.0;
  std::optional<double> loss_m;
  std::optional<double> loss_i;
  std::optional<double> loss_total;
  std::string config_hash;

  bool operator==(const EvalRecord&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::optional<double> parse_optional(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return std::stod(field);
}

inline void check_field(const std::string& value, const char* what) {
  require(value.find_first_of(",\n\r") == std::string::npos,
          std::string("metrics field '") + what + "' may not contain commas or newlines: " + value);
}

}  // namespace detail

inline void validate_record(const EvalRecord& r) {
  require(r.split == "train" || r.split == "eval", "record split must be train or eval");
  require(r.bit_accuracy >= 0.0 && r.bit_accuracy <= 1.0, "bit_accuracy must be within [0, 1]");
  require(!(r.psnr_db > 99.0), "psnr_db must be <= 99");
  detail::check_field(r.run_id, "run_id");
  detail::check_field(r.phase, "phase");
  detail::check_field(r.config_hash, "config_hash");
}

inline std::string to_csv_row(const EvalRecord& r) {
  validate_record(r);
  std::ostringstream oss;
  oss << r.run_id << ',' << r.phase << ',' << r.step << ',' << r.split << ','
      << detail::format_double(r.bit_accuracy) << ',' << detail::format_double(r.psnr_db) << ','
      << detail::format_optional(r.loss_m) << ',' << detail::format_optional(r.loss_i) << ','
      << detail::format_optional(r.loss_total) << ',' << r.config_hash;
  return oss.str();
}

inline EvalRecord parse_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream iss(line);
  while (std::getline(iss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  if (fields.size() != 10) throw IoError("metrics row has " + std::to_string(fields.size()) + " fields: " + line);
  try {
    EvalRecord r;
    r.run_id = fields[0];
    r.phase = fields[1];
    r.step = std::stol(fields[2]);
    r.split = fields[3];
    r.bit_accuracy = std::stod(fields[4]);
    r.psnr_db = std::stod(fields[5]);
    r.loss_m = detail::parse_optional(fields[6]);
    r.loss_i = detail::parse_optional(fields[7]);
    r.loss_total = detail::parse_optional(fields[8]);
    r.config_hash = fields[9];
    return r;
  } catch (const std::logic_error& e) {
    throw IoError("malformed metrics row '" + line + "': " + e.what());
  }
}

// Appends records to a CSV file, writing the header only for a new file.
// Existing rows are never rewritten. Writes are serialised per sink.
class MetricsSink {
 public:
  explicit MetricsSink(std::filesystem::path path) : path_(std::move(path)) {}

  const std::filesystem::path& path() const noexcept { return path_; }

  void append(const EvalRecord& record) {
    const std::string row = to_csv_row(record);
    std::lock_guard lock(mutex_);
    ensure_header();
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to metrics file " + path_.string());
    out << row << '\n';
    if (!out) throw IoError("failed appending to " + path_.string());
  }

  void append(const std::vector<EvalRecord>& records) {
    for (const auto& r : records) append(r);
  }

 private:
  void ensure_header() {
    std::error_code ec;
    if (std::filesystem::exists(path_, ec) && std::filesystem::file_size(path_, ec) > 0) {
      std::ifstream in(path_);
      std::string first;
      std::getline(in, first);
      if (first != kMetricsHeader) throw IoError("unexpected metrics header in " + path_.string());
      return;
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw IoError("cannot create metrics file " + path_.string());
    out << kMetricsHeader << '\n';
  }

  std::filesystem::path path_;
  std::mutex mutex_;
};

inline std::vector<EvalRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw IoError("unexpected metrics header in " + path.string());
  std::vector<EvalRecord> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_csv_row(line));
  return rows;
}

}  // namespace robosig
