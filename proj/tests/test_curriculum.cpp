#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "selfseg/curriculum.hpp"
#include "selfseg/rng.hpp"

using namespace selfseg;

namespace {

GrayImage random_image(int side, Rng& rng) {
  GrayImage img(side, side);
  for (double& v : img.data) v = static_cast<double>(rng.below(256)) / 255.0;
  return img;
}

BinaryMask blob_mask(int side, int r0, int c0, int extent) {
  BinaryMask mask(side, side);
  for (int r = r0; r < std::min(side, r0 + extent); ++r)
    for (int c = c0; c < std::min(side, c0 + extent); ++c) mask.at(r, c) = 1;
  return mask;
}

// Tiny pool + config so loop tests run in milliseconds.
SamplePool tiny_pool(int labeled, int unlabeled, int test, Rng& rng) {
  SamplePool pool;
  for (int i = 0; i < labeled; ++i)
    pool.labeled.push_back({"tr_" + std::to_string(i), random_image(8, rng), blob_mask(8, 2, 2, 4)});
  for (int i = 0; i < unlabeled; ++i)
    pool.unlabeled.push_back({"po_" + std::to_string(i), random_image(8, rng)});
  for (int i = 0; i < test; ++i)
    pool.test.push_back({"te_" + std::to_string(i), random_image(8, rng), blob_mask(8, 2, 2, 4)});
  return pool;
}

CurriculumConfig tiny_config() {
  CurriculumConfig cfg;
  cfg.arch = StudentArch{8, 2, 3, 4};
  cfg.n_per_iter = 2;
  cfg.iterations = 3;
  cfg.crf.steps = 2;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 2;
  cfg.train.augment_online = false;
  cfg.train.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("select_top: boundary cases and tie-breaking") {
  REQUIRE(select_top({}, 0).empty());
  REQUIRE(select_top({{"a", 0.5}}, 0).empty());

  std::vector<std::pair<std::string, double>> scored{{"c", 0.9}, {"a", 0.9}, {"b", 0.95}};
  REQUIRE(select_top(scored, 10) == std::vector<std::string>{"b", "a", "c"});
  REQUIRE(select_top(scored, 2) == std::vector<std::string>{"b", "a"});
}

TEST_CASE("select_top: output depends only on the (id, proxy) multiset") {
  Rng rng(1);
  std::vector<std::pair<std::string, double>> scored;
  for (int i = 0; i < 20; ++i)
    scored.emplace_back("id_" + std::to_string(i), rng.uniform(0.0, 1.0) < 0.3 ? 0.5 : rng.uniform01());
  auto expected = select_top(scored, 7);

  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(scored);
    REQUIRE(select_top(scored, 7) == expected);
  }
  // proxies non-increasing along the selection
  std::map<std::string, double> proxy(scored.begin(), scored.end());
  for (std::size_t i = 1; i < expected.size(); ++i)
    REQUIRE(proxy[expected[i - 1]] >= proxy[expected[i]]);
}

TEST_CASE("score_sample: zero kernel weights make the teacher an identity") {
  Rng rng(2);
  StudentArch arch{8, 2, 3, 4};
  StudentParams params = init_params(arch, 3);
  // lift the head bias so no pixel sits exactly on the 0.5 threshold, where
  // predict (>= foreground) and argmax (tie to background) diverge by design
  params.bias(detail::kHead)[0] = 0.3;
  CrfParams crf;
  crf.bilateral.weight = 0.0;
  crf.spatial.weight = 0.0;
  GrayImage img = random_image(8, rng);
  ScoreResult result = score_sample(params, crf, img);
  REQUIRE(result.proxy == 1.0);
  REQUIRE(result.raw.data == result.refined.data);
}

TEST_CASE("self_taught_loop: iterations=1 equals plain train plus evaluate") {
  Rng rng(3);
  SamplePool pool = tiny_pool(3, 2, 2, rng);
  CurriculumConfig cfg = tiny_config();
  cfg.iterations = 1;
  LoopResult result = self_taught_loop(pool, cfg);
  REQUIRE(result.reports.size() == 1);
  REQUIRE(result.pool.unlabeled.size() == 2);
  REQUIRE(result.pool.pseudo.empty());

  LoopResult baseline = baseline_labeled_only(pool, cfg, false);
  REQUIRE(result.params.flat == baseline.params.flat);
  REQUIRE(result.reports[0].test_dsc == baseline.reports[0].test_dsc);
}

TEST_CASE("self_taught_loop: n_per_iter = pool size promotes everything in one round") {
  Rng rng(4);
  SamplePool pool = tiny_pool(2, 3, 1, rng);
  CurriculumConfig cfg = tiny_config();
  cfg.n_per_iter = 3;
  cfg.iterations = 2;
  LoopResult result = self_taught_loop(pool, cfg);
  REQUIRE(result.pool.unlabeled.empty());
  REQUIRE(result.pool.pseudo.size() == 3);
  REQUIRE(result.reports.size() == 2);
  REQUIRE(result.reports[1].selected_ids.size() == 3);
}

TEST_CASE("self_taught_loop: pool is conserved and ids stay disjoint") {
  Rng rng(5);
  SamplePool pool = tiny_pool(3, 4, 2, rng);
  CurriculumConfig cfg = tiny_config();
  cfg.n_per_iter = 2;
  cfg.iterations = 3;
  const std::size_t total = pool.labeled.size() + pool.unlabeled.size() + pool.pseudo.size();
  int called = 0;
  LoopResult result = self_taught_loop(pool, cfg, [&](const SamplePool& p, int iter) {
    ++called;
    REQUIRE(p.labeled.size() + p.unlabeled.size() + p.pseudo.size() == total);
    std::set<std::string> ids;
    for (const auto& s : p.labeled) REQUIRE(ids.insert(s.id).second);
    for (const auto& s : p.unlabeled) REQUIRE(ids.insert(s.id).second);
    for (const auto& s : p.pseudo) {
      REQUIRE(ids.insert(s.id).second);
      REQUIRE(s.origin_iteration >= 2);
      REQUIRE(s.origin_iteration <= iter);
    }
  });
  REQUIRE(called == 3);
  REQUIRE(result.pool.pseudo.size() == 4);
  REQUIRE(result.pool.unlabeled.empty());
}

TEST_CASE("self_taught_loop: infeasible configurations are rejected up front") {
  Rng rng(6);
  SamplePool pool = tiny_pool(2, 3, 1, rng);
  CurriculumConfig cfg = tiny_config();
  cfg.n_per_iter = 2;
  cfg.iterations = 4;  // needs 6 > 3 available
  REQUIRE_THROWS_AS(self_taught_loop(pool, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(baseline_random_loop(pool, cfg, 0), std::invalid_argument);
}

TEST_CASE("self_taught_loop: reports are deterministic per seed") {
  Rng rng(7);
  SamplePool pool = tiny_pool(3, 4, 2, rng);
  CurriculumConfig cfg = tiny_config();
  LoopResult a = self_taught_loop(pool, cfg);
  LoopResult b = self_taught_loop(pool, cfg);
  REQUIRE(a.params.flat == b.params.flat);
  REQUIRE(a.reports.size() == b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    REQUIRE(a.reports[i].test_dsc == b.reports[i].test_dsc);
    REQUIRE(a.reports[i].selected_ids == b.reports[i].selected_ids);
    REQUIRE(a.reports[i].proxy_scores == b.reports[i].proxy_scores);
  }
}

TEST_CASE("baseline_random_loop: deterministic selections, raw-mask pseudo-labels") {
  Rng rng(8);
  SamplePool pool = tiny_pool(3, 4, 2, rng);
  CurriculumConfig cfg = tiny_config();
  LoopResult a = baseline_random_loop(pool, cfg, 99);
  LoopResult b = baseline_random_loop(pool, cfg, 99);
  REQUIRE(a.reports.size() == 3);
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    REQUIRE(a.reports[i].strategy == Strategy::unet_only);
    REQUIRE(a.reports[i].selected_ids == b.reports[i].selected_ids);
    for (double p : a.reports[i].proxy_scores) REQUIRE(p == 1.0);
  }
  // a pool of exactly n_per_iter is promoted wholesale regardless of seed
  SamplePool small = tiny_pool(2, 2, 1, rng);
  CurriculumConfig cfg2 = tiny_config();
  cfg2.n_per_iter = 2;
  cfg2.iterations = 2;
  LoopResult full1 = baseline_random_loop(small, cfg2, 1);
  LoopResult full2 = baseline_random_loop(small, cfg2, 12345);
  auto sorted_ids = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  REQUIRE(sorted_ids(full1.reports[1].selected_ids) == sorted_ids(full2.reports[1].selected_ids));
}

TEST_CASE("baseline_labeled_only: use_full consumes pool truth, errors when absent") {
  Rng rng(9);
  SamplePool pool = tiny_pool(2, 2, 1, rng);
  CurriculumConfig cfg = tiny_config();

  REQUIRE_THROWS_AS(baseline_labeled_only(pool, cfg, true), std::invalid_argument);

  for (const auto& s : pool.unlabeled) pool.pool_truth.emplace(s.id, blob_mask(8, 1, 1, 3));
  LoopResult full = baseline_labeled_only(pool, cfg, true);
  REQUIRE(full.reports.size() == 1);
  REQUIRE(full.reports[0].strategy == Strategy::labeled_only);

  // with an empty extra set, use_full equals use_full=false
  SamplePool no_pool = tiny_pool(2, 0, 1, rng);
  LoopResult a = baseline_labeled_only(no_pool, cfg, true);
  LoopResult b = baseline_labeled_only(no_pool, cfg, false);
  REQUIRE(a.params.flat == b.params.flat);
  REQUIRE(a.reports[0].test_dsc == b.reports[0].test_dsc);
}

TEST_CASE("SamplePool: duplicate ids are rejected") {
  Rng rng(10);
  SamplePool pool = tiny_pool(2, 2, 1, rng);
  pool.unlabeled.push_back({"tr_0", random_image(8, rng)});
  REQUIRE_THROWS_AS(pool.validate(), std::invalid_argument);
}
