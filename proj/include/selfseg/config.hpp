#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfseg/curriculum.hpp"
#include "selfseg/phantom.hpp"

namespace selfseg {

// Flat key=value run configuration covering every tunable default. Unknown
// keys and out-of-bound values are rejected before any computation.
struct RunConfig {
  StudentArch arch;
  CrfParams crf;
  TrainConfig train;
  int n_per_iter = 10;
  int iterations = 6;
  CurriculumConfig::RetrainMode retrain_mode = CurriculumConfig::RetrainMode::fine_tune;
  PhantomConfig phantom;

  CurriculumConfig curriculum() const {
    CurriculumConfig cfg;
    cfg.n_per_iter = n_per_iter;
    cfg.iterations = iterations;
    cfg.arch = arch;
    cfg.crf = crf;
    cfg.train = train;
    cfg.retrain_mode = retrain_mode;
    return cfg;
  }

  void validate() const {
    arch.validate();
    crf.validate();
    train.validate();
    phantom.validate();
    if (n_per_iter < 1) throw std::invalid_argument("curriculum.n_per_iter must be >= 1");
    if (iterations < 1) throw std::invalid_argument("curriculum.iterations must be >= 1");
  }
};

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) return buf;
  }
  return buf;
}

struct ConfigEntry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline long long parse_ll(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + key + ": expected an integer, got '" + value + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: " + key + ": expected a number, got '" + value + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::runtime_error("config: " + key + ": expected true/false, got '" + value + "'");
}

template <typename Acc>
ConfigEntry entry_d(const std::string& key, Acc acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) { *acc(c) = parse_double(key, v); },
          [acc](const RunConfig& c) { return format_double(*acc(const_cast<RunConfig&>(c))); }};
}

template <typename Acc>
ConfigEntry entry_i(const std::string& key, Acc acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) {
            *acc(c) = static_cast<int>(parse_ll(key, v));
          },
          [acc](const RunConfig& c) {
            return std::to_string(*acc(const_cast<RunConfig&>(c)));
          }};
}

template <typename Acc>
ConfigEntry entry_u64(const std::string& key, Acc acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) {
            try {
              std::size_t used = 0;
              *acc(c) = std::stoull(v, &used);
              if (used != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
              throw std::runtime_error("config: " + key + ": expected an unsigned integer");
            }
          },
          [acc](const RunConfig& c) {
            return std::to_string(*acc(const_cast<RunConfig&>(c)));
          }};
}

template <typename Acc>
ConfigEntry entry_b(const std::string& key, Acc acc) {
  return {key,
          [key, acc](RunConfig& c, const std::string& v) { *acc(c) = parse_bool(key, v); },
          [acc](const RunConfig& c) {
            return *acc(const_cast<RunConfig&>(c)) ? "true" : "false";
          }};
}

inline const std::vector<ConfigEntry>& config_entries() {
  static const std::vector<ConfigEntry> entries = [] {
    std::vector<ConfigEntry> e;
    e.push_back(entry_i("arch.input_size", [](RunConfig& c) { return &c.arch.input_size; }));
    e.push_back(entry_i("arch.c1", [](RunConfig& c) { return &c.arch.c1; }));
    e.push_back(entry_i("arch.c2", [](RunConfig& c) { return &c.arch.c2; }));
    e.push_back(entry_i("arch.c3", [](RunConfig& c) { return &c.arch.c3; }));

    e.push_back(entry_d("crf.bilateral_weight", [](RunConfig& c) { return &c.crf.bilateral.weight; }));
    e.push_back(entry_d("crf.bilateral_sxy",
                        [](RunConfig& c) { return &c.crf.bilateral.spatial_stddev; }));
    e.push_back({"crf.bilateral_schan",
                 [](RunConfig& c, const std::string& v) {
                   c.crf.bilateral.channel_stddev = parse_double("crf.bilateral_schan", v);
                 },
                 [](const RunConfig& c) {
                   return format_double(c.crf.bilateral.channel_stddev.value_or(0.0));
                 }});
    e.push_back(entry_d("crf.spatial_weight", [](RunConfig& c) { return &c.crf.spatial.weight; }));
    e.push_back(entry_d("crf.spatial_sxy",
                        [](RunConfig& c) { return &c.crf.spatial.spatial_stddev; }));
    e.push_back(entry_d("crf.compat", [](RunConfig& c) { return &c.crf.compat; }));
    e.push_back(entry_i("crf.steps", [](RunConfig& c) { return &c.crf.steps; }));
    e.push_back(entry_d("crf.unary_clamp", [](RunConfig& c) { return &c.crf.unary_clamp; }));

    e.push_back(entry_d("train.learning_rate", [](RunConfig& c) { return &c.train.learning_rate; }));
    e.push_back(entry_d("train.momentum", [](RunConfig& c) { return &c.train.momentum; }));
    e.push_back(entry_i("train.epochs", [](RunConfig& c) { return &c.train.epochs; }));
    e.push_back(entry_i("train.batch_size", [](RunConfig& c) { return &c.train.batch_size; }));
    e.push_back(entry_d("train.dice_smooth", [](RunConfig& c) { return &c.train.dice_smooth; }));
    e.push_back(entry_u64("train.seed", [](RunConfig& c) { return &c.train.seed; }));
    e.push_back(entry_b("train.augment_online", [](RunConfig& c) { return &c.train.augment_online; }));

    e.push_back(entry_d("augment.max_rotation_deg",
                        [](RunConfig& c) { return &c.train.augment.max_rotation_deg; }));
    e.push_back(entry_d("augment.shift_frac", [](RunConfig& c) { return &c.train.augment.shift_frac; }));
    e.push_back(entry_d("augment.zoom_frac", [](RunConfig& c) { return &c.train.augment.zoom_frac; }));
    e.push_back(entry_d("augment.shear_frac", [](RunConfig& c) { return &c.train.augment.shear_frac; }));
    e.push_back(entry_d("augment.hflip_prob", [](RunConfig& c) { return &c.train.augment.hflip_prob; }));

    e.push_back(entry_i("curriculum.n_per_iter", [](RunConfig& c) { return &c.n_per_iter; }));
    e.push_back(entry_i("curriculum.iterations", [](RunConfig& c) { return &c.iterations; }));
    e.push_back({"curriculum.retrain_mode",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "fine_tune")
                     c.retrain_mode = CurriculumConfig::RetrainMode::fine_tune;
                   else if (v == "from_scratch")
                     c.retrain_mode = CurriculumConfig::RetrainMode::from_scratch;
                   else
                     throw std::runtime_error(
                         "config: curriculum.retrain_mode: expected fine_tune or from_scratch");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.retrain_mode == CurriculumConfig::RetrainMode::fine_tune
                                          ? "fine_tune"
                                          : "from_scratch");
                 }});

    e.push_back(entry_i("phantom.image_size", [](RunConfig& c) { return &c.phantom.image_size; }));
    e.push_back(entry_i("phantom.fingers", [](RunConfig& c) { return &c.phantom.fingers; }));
    e.push_back(entry_i("phantom.phalanges_per_finger",
                        [](RunConfig& c) { return &c.phantom.phalanges_per_finger; }));
    e.push_back(entry_d("phantom.noise_std", [](RunConfig& c) { return &c.phantom.noise_std; }));
    e.push_back(entry_d("phantom.artifact_prob", [](RunConfig& c) { return &c.phantom.artifact_prob; }));
    e.push_back(entry_d("phantom.bone_lo", [](RunConfig& c) { return &c.phantom.bone_lo; }));
    e.push_back(entry_d("phantom.bone_hi", [](RunConfig& c) { return &c.phantom.bone_hi; }));
    e.push_back(entry_d("phantom.tissue_lo", [](RunConfig& c) { return &c.phantom.tissue_lo; }));
    e.push_back(entry_d("phantom.tissue_hi", [](RunConfig& c) { return &c.phantom.tissue_hi; }));
    e.push_back(entry_d("phantom.background_lo",
                        [](RunConfig& c) { return &c.phantom.background_lo; }));
    e.push_back(entry_d("phantom.background_hi",
                        [](RunConfig& c) { return &c.phantom.background_hi; }));
    return e;
  }();
  return entries;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// One `key = value` assignment per line; '#' starts a comment. Every key must
// be known; values must parse and satisfy their bounds.
inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected 'key = value'");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    bool known = false;
    for (const auto& entry : detail::config_entries()) {
      if (entry.key == key) {
        entry.set(cfg, value);
        known = true;
        break;
      }
    }
    if (!known) throw std::runtime_error("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": no such file or cannot be opened");
  return parse_config(in);
}

// Every effective value, defaults included; parse(serialize(cfg)) == cfg.
inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& entry : detail::config_entries()) {
    const std::string prefix = entry.key.substr(0, entry.key.find('.'));
    if (prefix != section) {
      if (!section.empty()) out << '\n';
      section = prefix;
    }
    out << entry.key << " = " << entry.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace selfseg
