#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selfseg/densecrf.hpp"
#include "selfseg/metrics.hpp"
#include "selfseg/rng.hpp"
#include "selfseg/sample.hpp"
#include "selfseg/student.hpp"

namespace selfseg {

// Every sample lives in exactly one of labeled/unlabeled/pseudo; validation
// and test are fixed. pool_truth optionally carries ground truth for
// unlabeled samples, used only by the fully supervised baseline.
struct SamplePool {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  std::vector<PseudoSample> pseudo;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
  std::map<std::string, BinaryMask> pool_truth;

  void validate() const {
    std::set<std::string> ids;
    auto add = [&](const std::string& id) {
      if (!ids.insert(id).second) throw std::invalid_argument("duplicate sample id: " + id);
    };
    for (const auto& s : labeled) add(s.id);
    for (const auto& s : unlabeled) add(s.id);
    for (const auto& s : pseudo) {
      add(s.id);
      require_same_shape(s.image, s.mask);
    }
    for (const auto& s : validation) add(s.id);
    for (const auto& s : test) add(s.id);
  }
};

struct CurriculumConfig {
  int n_per_iter = 10;
  int iterations = 6;
  StudentArch arch;
  CrfParams crf;
  TrainConfig train;
  enum class RetrainMode { fine_tune, from_scratch };
  RetrainMode retrain_mode = RetrainMode::fine_tune;

  void validate() const {
    if (n_per_iter < 1) throw std::invalid_argument("n_per_iter must be >= 1");
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    arch.validate();
    crf.validate();
    train.validate();
  }
};

struct ScoreResult {
  BinaryMask raw;
  BinaryMask refined;
  double proxy = 0.0;  // dsc(raw, refined): high = teacher barely changed anything
};

// Difficulty proxy for one unlabeled sample: predict, refine, compare.
inline ScoreResult score_sample(const StudentParams& params, const CrfParams& crf,
                                const GrayImage& img) {
  Prediction pred = predict(params, img);
  RefineResult ref = refine(pred.probs, img, crf);
  const double proxy = dsc(pred.mask, ref.mask);
  return {std::move(pred.mask), std::move(ref.mask), proxy};
}

// The n easiest ids: highest proxy first, ties broken by ascending id.
inline std::vector<std::string> select_top(std::vector<std::pair<std::string, double>> scored,
                                           int n) {
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t take = std::min<std::size_t>(n, scored.size());
  std::vector<std::string> ids;
  ids.reserve(take);
  for (std::size_t i = 0; i < take; ++i) ids.push_back(scored[i].first);
  return ids;
}

struct LoopResult {
  StudentParams params;
  std::vector<IterationReport> reports;
  SamplePool pool;  // final state
};

// Called after every completed iteration; used by tests to watch pool state.
using PoolObserver = std::function<void(const SamplePool&, int iteration)>;

namespace detail {

inline constexpr std::uint64_t kTrainStream = 0x747261696e313233ULL;
inline constexpr std::uint64_t kSelectStream = 0x73656c6563743132ULL;

inline std::vector<std::pair<GrayImage, BinaryMask>> training_pairs(const SamplePool& pool) {
  std::vector<std::pair<GrayImage, BinaryMask>> data;
  data.reserve(pool.labeled.size() + pool.pseudo.size());
  for (const auto& s : pool.labeled) data.emplace_back(s.image, s.mask);
  for (const auto& s : pool.pseudo) data.emplace_back(s.image, s.mask);
  return data;
}

inline StudentParams retrain(StudentParams params, const SamplePool& pool,
                             const CurriculumConfig& cfg, int iteration) {
  TrainConfig tcfg = cfg.train;
  tcfg.seed = mix_seed(cfg.train.seed, kTrainStream, static_cast<std::uint64_t>(iteration));
  if (cfg.retrain_mode == CurriculumConfig::RetrainMode::from_scratch)
    params = init_params(cfg.arch, cfg.train.seed);
  return train(std::move(params), training_pairs(pool), tcfg).params;
}

inline void check_loop_feasible(const SamplePool& pool, const CurriculumConfig& cfg) {
  cfg.validate();
  pool.validate();
  if (pool.test.empty()) throw std::invalid_argument("pool has no test samples");
  if (pool.labeled.empty()) throw std::invalid_argument("pool has no labeled samples");
  const std::size_t needed =
      static_cast<std::size_t>(cfg.n_per_iter) * static_cast<std::size_t>(cfg.iterations - 1);
  if (needed > pool.unlabeled.size())
    throw std::invalid_argument("infeasible config: n_per_iter x (iterations-1) exceeds pool");
}

inline void move_to_pseudo(SamplePool& pool, const std::string& id, BinaryMask mask,
                           int iteration) {
  auto it = std::find_if(pool.unlabeled.begin(), pool.unlabeled.end(),
                         [&](const UnlabeledSample& s) { return s.id == id; });
  if (it == pool.unlabeled.end()) throw std::logic_error("selected id not in pool: " + id);
  pool.pseudo.push_back({it->id, std::move(it->image), std::move(mask), iteration});
  pool.unlabeled.erase(it);
}

}  // namespace detail

// The self-taught curriculum: iteration 1 trains on labeled data only; every
// later iteration scores the remaining unlabeled samples, promotes the
// n_per_iter easiest with their refined masks as frozen pseudo-labels, and
// retrains on labeled + pseudo. Test DSC is recorded after each retraining.
inline LoopResult self_taught_loop(SamplePool pool, const CurriculumConfig& cfg,
                                   const PoolObserver& observer = {}) {
  detail::check_loop_feasible(pool, cfg);

  StudentParams params = init_params(cfg.arch, cfg.train.seed);
  std::vector<IterationReport> reports;

  params = detail::retrain(std::move(params), pool, cfg, 1);
  reports.push_back({1, Strategy::top_dsc, {}, {}, evaluate(params, pool.test)});
  if (observer) observer(pool, 1);

  for (int iter = 2; iter <= cfg.iterations; ++iter) {
    std::vector<std::pair<std::string, double>> scored;
    std::map<std::string, BinaryMask> refined;
    scored.reserve(pool.unlabeled.size());
    for (const auto& s : pool.unlabeled) {
      ScoreResult r = score_sample(params, cfg.crf, s.image);
      scored.emplace_back(s.id, r.proxy);
      refined.emplace(s.id, std::move(r.refined));
    }

    const std::vector<std::string> selected = select_top(scored, cfg.n_per_iter);
    std::vector<double> proxies;
    proxies.reserve(selected.size());
    std::map<std::string, double> proxy_of(scored.begin(), scored.end());
    for (const auto& id : selected) {
      proxies.push_back(proxy_of.at(id));
      detail::move_to_pseudo(pool, id, std::move(refined.at(id)), iter);
    }

    params = detail::retrain(std::move(params), pool, cfg, iter);
    reports.push_back({iter, Strategy::top_dsc, selected, proxies, evaluate(params, pool.test)});
    if (observer) observer(pool, iter);
  }
  return {std::move(params), std::move(reports), std::move(pool)};
}

// U-Net-only baseline: same schedule, but selection is a uniform draw and the
// pseudo-labels are the student's raw masks (no CRF). Each selected sample's
// pseudo-label equals the raw prediction, so its proxy score is exactly 1.
inline LoopResult baseline_random_loop(SamplePool pool, const CurriculumConfig& cfg,
                                       std::uint64_t seed, const PoolObserver& observer = {}) {
  detail::check_loop_feasible(pool, cfg);

  StudentParams params = init_params(cfg.arch, cfg.train.seed);
  std::vector<IterationReport> reports;

  params = detail::retrain(std::move(params), pool, cfg, 1);
  reports.push_back({1, Strategy::unet_only, {}, {}, evaluate(params, pool.test)});
  if (observer) observer(pool, 1);

  for (int iter = 2; iter <= cfg.iterations; ++iter) {
    std::vector<std::string> ids;
    ids.reserve(pool.unlabeled.size());
    for (const auto& s : pool.unlabeled) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    Rng rng(mix_seed(seed, detail::kSelectStream, static_cast<std::uint64_t>(iter)));
    rng.shuffle(ids);
    ids.resize(std::min<std::size_t>(cfg.n_per_iter, ids.size()));

    std::vector<double> proxies(ids.size(), 1.0);
    for (const auto& id : ids) {
      auto it = std::find_if(pool.unlabeled.begin(), pool.unlabeled.end(),
                             [&](const UnlabeledSample& s) { return s.id == id; });
      BinaryMask raw = predict(params, it->image).mask;
      detail::move_to_pseudo(pool, id, std::move(raw), iter);
    }

    params = detail::retrain(std::move(params), pool, cfg, iter);
    reports.push_back({iter, Strategy::unet_only, ids, proxies, evaluate(params, pool.test)});
    if (observer) observer(pool, iter);
  }
  return {std::move(params), std::move(reports), std::move(pool)};
}

// Supervised baselines: the small labeled set alone (use_full = false) or
// labeled plus the pool samples with their out-of-band ground truth.
inline LoopResult baseline_labeled_only(SamplePool pool, const CurriculumConfig& cfg,
                                        bool use_full) {
  cfg.validate();
  pool.validate();
  if (pool.test.empty()) throw std::invalid_argument("pool has no test samples");
  if (pool.labeled.empty()) throw std::invalid_argument("pool has no labeled samples");

  SamplePool train_pool = pool;
  if (use_full) {
    for (auto& s : train_pool.unlabeled) {
      auto it = train_pool.pool_truth.find(s.id);
      if (it == train_pool.pool_truth.end())
        throw std::invalid_argument("missing ground truth for pool sample: " + s.id);
      train_pool.labeled.push_back({s.id, std::move(s.image), it->second});
    }
    train_pool.unlabeled.clear();
  }

  StudentParams params = init_params(cfg.arch, cfg.train.seed);
  params = detail::retrain(std::move(params), train_pool, cfg, 1);
  std::vector<IterationReport> reports;
  reports.push_back({1, Strategy::labeled_only, {}, {}, evaluate(params, pool.test)});
  return {std::move(params), std::move(reports), std::move(pool)};
}

}  // namespace selfseg
