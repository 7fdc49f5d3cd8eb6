// selfseg: phantom-hand segmentation with a self-taught student/teacher loop.
//
// Subcommands:
//   phantom    generate a synthetic dataset with exact ground truth
//   train      supervised baseline training (labeled split, optionally + pool)
//   selftrain  the curriculum loop (top_dsc) or its random baseline (unet_only)
//   refine     run the dense-CRF teacher on one image
//   eval       mean test DSC of a checkpoint against a manifest

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selfseg/config.hpp"
#include "selfseg/curriculum.hpp"
#include "selfseg/manifest.hpp"
#include "selfseg/metrics.hpp"
#include "selfseg/phantom.hpp"
#include "selfseg/student.hpp"

namespace {

namespace fs = std::filesystem;
using namespace selfseg;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

DatasetCounts parse_counts(const std::string& text) {
  DatasetCounts counts;
  int values[4];
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d,%d%c", &values[0], &values[1], &values[2], &values[3],
                  &extra) != 4)
    throw usage_error("--counts expects four comma-separated integers, e.g. 89,20,50,50");
  counts.labeled = values[0];
  counts.validation = values[1];
  counts.test = values[2];
  counts.pool = values[3];
  return counts;
}

int cmd_phantom(const std::string& out_dir, std::uint64_t seed, const std::string& config_path,
                const std::string& counts_text) {
  RunConfig cfg = config_or_default(config_path);
  DatasetCounts counts;
  if (!counts_text.empty()) counts = parse_counts(counts_text);
  const fs::path manifest = generate_dataset(cfg.phantom, seed, counts, out_dir);
  std::cout << manifest.string() << '\n';
  return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& out_ckpt,
              bool use_pool_labels, const std::string& config_path,
              const std::string& report_path, bool jsonl) {
  RunConfig cfg = config_or_default(config_path);
  const Manifest manifest = load_manifest(manifest_path);
  SamplePool pool = load_pool(manifest, use_pool_labels);

  LoopResult result = baseline_labeled_only(std::move(pool), cfg.curriculum(), use_pool_labels);
  save_checkpoint(result.params, out_ckpt);

  const std::string report = report_path.empty() ? out_ckpt + ".report.csv" : report_path;
  write_report(result.reports, report);
  if (jsonl) write_report_jsonl(result.reports, report + ".jsonl");
  std::cout << "test_dsc " << detail::format6(result.reports.back().test_dsc) << '\n';
  return 0;
}

int cmd_selftrain(const std::string& manifest_path, const std::string& out_dir,
                  const std::string& strategy, int n_override, int iters_override,
                  long long seed_override, const std::string& config_path, bool jsonl) {
  RunConfig cfg = config_or_default(config_path);
  if (n_override > 0) cfg.n_per_iter = n_override;
  if (iters_override > 0) cfg.iterations = iters_override;
  if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);
  cfg.validate();

  const Manifest manifest = load_manifest(manifest_path);
  SamplePool pool = load_pool(manifest, /*with_pool_truth=*/false);
  fs::create_directories(out_dir);

  LoopResult result;
  if (strategy == "top_dsc")
    result = self_taught_loop(std::move(pool), cfg.curriculum());
  else
    result = baseline_random_loop(std::move(pool), cfg.curriculum(), cfg.train.seed);

  const fs::path dir(out_dir);
  write_report(result.reports, (dir / "reports.csv").string());
  if (jsonl) write_report_jsonl(result.reports, (dir / "reports.jsonl").string());
  save_checkpoint(result.params, (dir / "final.ckpt").string());
  for (const auto& r : result.reports)
    std::cout << "iteration " << r.iteration << " " << strategy_name(r.strategy) << " test_dsc "
              << detail::format6(r.test_dsc) << '\n';
  return 0;
}

int cmd_refine(const std::string& image_path, const std::string& probs_path,
               const std::string& out_path, const std::string& config_path) {
  RunConfig cfg = config_or_default(config_path);
  const GrayImage img = load_image(image_path);

  ProbMap probs;
  if (is_checkpoint_file(probs_path)) {
    const StudentParams params = load_checkpoint(probs_path);
    if (img.height != params.arch.input_size || img.width != params.arch.input_size)
      throw std::runtime_error("image size does not match the checkpoint architecture");
    probs = predict(params, img).probs;
  } else {
    const GrayImage p = load_image(probs_path);
    if (p.height != img.height || p.width != img.width)
      throw std::runtime_error("probability map size does not match the image");
    probs = ProbMap(p.height, p.width, 2);
    for (int i = 0; i < p.pixels(); ++i) {
      probs.data[2 * i] = 1.0 - p.data[i];
      probs.data[2 * i + 1] = p.data[i];
    }
  }

  const RefineResult result = refine(probs, img, cfg.crf);
  save_mask(result.mask, out_path);
  return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& ckpt_path) {
  const Manifest manifest = load_manifest(manifest_path);
  const SamplePool pool = load_pool(manifest, /*with_pool_truth=*/false);
  if (pool.test.empty()) throw std::runtime_error("manifest has no test samples");
  const StudentParams params = load_checkpoint(ckpt_path);
  std::cout << detail::format6(evaluate(params, pool.test)) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-taught phantom-hand segmentation pipeline"};
  app.require_subcommand(1);

  std::string out_dir, seed_text, config_path, counts_text;
  std::uint64_t seed = 0;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic dataset");
  phantom->add_option("--out", out_dir, "Output directory")->required();
  phantom->add_option("--seed", seed, "Base RNG seed");
  phantom->add_option("--config", config_path, "Config file (key = value lines)");
  phantom->add_option("--counts", counts_text, "labeled,val,test,pool (default 89,20,50,50)");

  std::string manifest_path, ckpt_path, report_path;
  bool use_pool_labels = false, jsonl = false;
  auto* train = app.add_subcommand("train", "Supervised baseline training");
  train->add_option("--manifest", manifest_path, "Dataset manifest (TSV)")->required();
  train->add_option("--out", ckpt_path, "Output checkpoint path")->required();
  train->add_flag("--use-pool-labels", use_pool_labels,
                  "Also train on pool samples with their ground-truth masks");
  train->add_option("--config", config_path, "Config file");
  train->add_option("--report", report_path, "Report CSV path (default <out>.report.csv)");
  train->add_flag("--jsonl", jsonl, "Also write a JSON-lines report");

  std::string strategy = "top_dsc";
  int n_override = 0, iters_override = 0;
  long long seed_override = -1;
  auto* selftrain = app.add_subcommand("selftrain", "Run the self-taught curriculum loop");
  selftrain->add_option("--manifest", manifest_path, "Dataset manifest (TSV)")->required();
  selftrain->add_option("--out", out_dir, "Output directory")->required();
  selftrain->add_option("--strategy", strategy, "Pseudo-label selection strategy")
      ->check(CLI::IsMember({"top_dsc", "unet_only"}));
  selftrain->add_option("--n", n_override, "Samples promoted per iteration");
  selftrain->add_option("--iters", iters_override, "Number of iterations");
  selftrain->add_option("--seed", seed_override, "Run seed (overrides train.seed)");
  selftrain->add_option("--config", config_path, "Config file");
  selftrain->add_flag("--jsonl", jsonl, "Also write a JSON-lines report");

  std::string image_path, probs_path, mask_out;
  auto* refine_cmd = app.add_subcommand("refine", "Refine one prediction with the CRF teacher");
  refine_cmd->add_option("--image", image_path, "Input image (PGM)")->required();
  refine_cmd->add_option("--probs", probs_path, "Checkpoint or probability-map image")
      ->required();
  refine_cmd->add_option("--out", mask_out, "Output mask path")->required();
  refine_cmd->add_option("--config", config_path, "Config file");

  auto* eval_cmd = app.add_subcommand("eval", "Print mean test DSC of a checkpoint");
  eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest (TSV)")->required();
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (app.got_subcommand(phantom)) return cmd_phantom(out_dir, seed, config_path, counts_text);
    if (app.got_subcommand(train))
      return cmd_train(manifest_path, ckpt_path, use_pool_labels, config_path, report_path,
                       jsonl);
    if (app.got_subcommand(selftrain))
      return cmd_selftrain(manifest_path, out_dir, strategy, n_override, iters_override,
                           seed_override, config_path, jsonl);
    if (app.got_subcommand(refine_cmd))
      return cmd_refine(image_path, probs_path, mask_out, config_path);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(manifest_path, ckpt_path);
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
