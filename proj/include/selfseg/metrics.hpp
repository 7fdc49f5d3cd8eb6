#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfseg/image.hpp"
#include "selfseg/sample.hpp"
#include "selfseg/student.hpp"

namespace selfseg {

// DSC = 2|X n Y| / (|X| + |Y|). Two empty masks count as perfect agreement
// (the 0/0 case); empty vs non-empty is 0 by the formula.
inline double dsc(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("mask dimension mismatch");
  std::size_t inter = 0, ca = 0, cb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    ca += a.data[i];
    cb += b.data[i];
    inter += static_cast<std::size_t>(a.data[i]) & b.data[i];
  }
  if (ca + cb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

// Mean DSC of predictions against ground truth over a test set.
inline double evaluate(const StudentParams& params, const std::vector<LabeledSample>& test_set) {
  if (test_set.empty()) throw std::invalid_argument("test set is empty");
  double sum = 0.0;
  for (const auto& sample : test_set)
    sum += dsc(predict(params, sample.image).mask, sample.mask);
  return sum / static_cast<double>(test_set.size());
}

enum class Strategy { top_dsc, unet_only, labeled_only };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::top_dsc: return "top_dsc";
    case Strategy::unet_only: return "unet_only";
    case Strategy::labeled_only: return "labeled_only";
  }
  throw std::invalid_argument("unknown strategy");
}

// One row per curriculum iteration, mirroring one experiment-table cell.
struct IterationReport {
  int iteration = 1;
  Strategy strategy = Strategy::top_dsc;
  std::vector<std::string> selected_ids;
  std::vector<double> proxy_scores;  // raw-vs-refined DSC per selected sample
  double test_dsc = 0.0;

  void validate() const {
    if (iteration < 1) throw std::invalid_argument("iteration must be >= 1");
    if (selected_ids.size() != proxy_scores.size())
      throw std::invalid_argument("selected_ids/proxy_scores length mismatch");
    if (test_dsc < 0.0 || test_dsc > 1.0) throw std::invalid_argument("test_dsc out of [0,1]");
  }
};

namespace detail {

inline std::string format6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ';';
    out += ids[i];
  }
  return out;
}

inline std::string join_scores(const std::vector<double>& scores) {
  std::string out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i) out += ';';
    out += format6(scores[i]);
  }
  return out;
}

}  // namespace detail

// CSV with one row per report; list fields are ';'-joined, reals printed to
// six decimals.
inline void write_report(const std::vector<IterationReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "iteration,strategy,test_dsc,selected_ids,proxy_scores\n";
  for (const auto& r : reports) {
    r.validate();
    out << r.iteration << ',' << strategy_name(r.strategy) << ',' << detail::format6(r.test_dsc)
        << ',' << detail::join_ids(r.selected_ids) << ',' << detail::join_scores(r.proxy_scores)
        << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

// JSON-lines mirror of the CSV: one report object per line.
inline void write_report_jsonl(const std::vector<IterationReport>& reports,
                               const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  for (const auto& r : reports) {
    r.validate();
    nlohmann::json j;
    j["iteration"] = r.iteration;
    j["strategy"] = strategy_name(r.strategy);
    j["test_dsc"] = r.test_dsc;
    j["selected_ids"] = r.selected_ids;
    j["proxy_scores"] = r.proxy_scores;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace selfseg
