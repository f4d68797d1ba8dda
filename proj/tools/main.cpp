#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "otobias/error.hpp"

namespace {

using namespace otobias;
using namespace otobias::cli;

template <class Enum, class Parse>
CLI::Option* add_enum(CLI::App* app, const std::string& name, Enum& target, Parse parse, const std::string& help) {
  return app->add_option_function<std::string>(
      name,
      [&target, parse, name](const std::string& text) {
        const auto v = parse(text);
        if (!v) throw CLI::ValidationError(name, "unrecognised value \"" + text + "\"");
        target = *v;
      },
      help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"otobias: dataset-bias auditing for otoscopy image collections"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "otobias 0.1.0");

  const std::uint64_t env_seed = default_seed();

  ScanOptions scan;
  auto* scan_cmd = app.add_subcommand("scan", "Build a manifest from a folder-per-subtype image tree");
  scan_cmd->add_option("dir", scan.dir, "Root directory")->required();
  scan_cmd->add_option("--out", scan.out_manifest, "Output manifest CSV")->required();
  scan_cmd->add_option("--source", scan.source, "Dataset name (default: directory name)");

  EclipseOptions eclipse;
  auto* eclipse_cmd = app.add_subcommand("eclipse", "Write center-masked copies of every image");
  eclipse_cmd->add_option("--manifest", eclipse.manifest, "Input manifest")->required();
  eclipse_cmd->add_option("--extents", eclipse.extents, "Eclipse extents in [0, 1]")->required()->delimiter(',');
  eclipse_cmd->add_option("--out", eclipse.out, "Output directory")->required();
  eclipse_cmd->add_option("--jobs", eclipse.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  ProbeOptions probe;
  probe.seed = env_seed;
  std::vector<std::string> feature_sets;
  double probe_fraction = 0.0;
  auto* probe_cmd = app.add_subcommand("probe", "Fit HSV logistic probes and cross-dataset AUCs");
  probe_cmd->add_option("--manifest", probe.manifests, "Input manifests (repeatable)")->required();
  probe_cmd->add_option("--feature-set", feature_sets, "hsv6 | sat-std (repeatable; default both)");
  probe_cmd->add_option("--out", probe.out, "Output directory")->required();
  auto* probe_frac_opt = probe_cmd->add_option("--test-fraction,--auto-split", probe_fraction, "Holdout fraction for manifests without a split");
  probe_cmd->add_option("--seed", probe.seed, "Random seed")->capture_default_str();
  probe_cmd->add_option("--jobs", probe.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  DedupOptions dedup;
  dedup.seed = env_seed;
  double alpha = 0.0;
  double dedup_fraction = 0.0;
  std::string split_path;
  auto* dedup_cmd = app.add_subcommand("dedup", "Cluster near duplicates and audit train/test leakage");
  dedup_cmd->add_option("--manifest", dedup.manifest, "Input manifest")->required();
  dedup_cmd->add_option("--embeddings", dedup.embeddings, "Embeddings CSV or JSONL")->required();
  auto* alpha_opt = dedup_cmd->add_option("--alpha", alpha, "Cosine-distance threshold");
  auto* sweep_opt = dedup_cmd->add_option("--alpha-sweep", dedup.alphas, "Ascending thresholds")->delimiter(',');
  alpha_opt->excludes(sweep_opt);
  auto* split_opt = dedup_cmd->add_option("--split", split_path, "Split CSV (id,split)");
  auto* dedup_frac_opt = dedup_cmd->add_option("--test-fraction", dedup_fraction, "Holdout fraction when no split is given");
  dedup_cmd->add_option("--leakage-budget", dedup.leakage_budget, "Maximum tolerated leakage fraction")->capture_default_str();
  dedup_cmd->add_option("--min-cluster-size", dedup.min_cluster_size, "Smallest reported cluster")->capture_default_str();
  dedup_cmd->add_option("--style-min-size", dedup.style_min_size, "Smallest cluster in the style report")->capture_default_str();
  dedup_cmd->add_option("--purity", dedup.purity_threshold, "Label purity that flags a style cluster")->capture_default_str();
  dedup_cmd->add_option("--seed", dedup.seed, "Random seed")->capture_default_str();
  dedup_cmd->add_option("--jobs", dedup.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  dedup_cmd->add_option("--out", dedup.out, "Output directory")->required();

  EvalOptions eval;
  double eval_extent = 0.0;
  std::string tags_path;
  auto* eval_cmd = app.add_subcommand("eval", "AUC with DeLong intervals, overall and per subset");
  eval_cmd->add_option("--scores", eval.scores, "Scores CSV (id,score,label)")->required();
  auto* tags_opt = eval_cmd->add_option("--tags", tags_path, "Subset tags CSV (id,subset_tag)");
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_option("--train-source", eval.train_source, "Training dataset name");
  eval_cmd->add_option("--model-name", eval.model_name, "Model name");
  eval_cmd->add_option("--target", eval.target, "Evaluation dataset name");
  auto* extent_opt = eval_cmd->add_option("--eclipse-extent", eval_extent, "Eclipse extent of the inputs");

  SplitOptions split;
  split.seed = env_seed;
  auto* split_cmd = app.add_subcommand("split", "Write a reproducible train/val/test assignment");
  split_cmd->add_option("--manifest", split.manifest, "Input manifest")->required();
  add_enum(split_cmd, "--method", split.method,
           [](const std::string& s) -> std::optional<SplitMethod> {
             if (s == "holdout") return SplitMethod::stratified_holdout;
             if (s == "kfold") return SplitMethod::stratified_kfold;
             if (s == "patient") return SplitMethod::patient_grouped;
             return parse_split_method(s);
           },
           "predefined | holdout | kfold | patient");
  split_cmd->add_option("--test-fraction", split.test_fraction, "Test fraction")->capture_default_str();
  split_cmd->add_option("--k", split.k, "Folds for kfold")->capture_default_str()->check(CLI::PositiveNumber);
  split_cmd->add_option("--seed", split.seed, "Random seed")->capture_default_str();
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*scan_cmd) return run_scan(scan, std::cout);
    if (*eclipse_cmd) return run_eclipse(eclipse, std::cout);
    if (*probe_cmd) {
      if (!feature_sets.empty()) {
        probe.feature_sets.clear();
        for (const auto& name : feature_sets) {
          const auto set = parse_feature_set(name);
          if (!set) throw ValidationError("unknown feature set \"" + name + "\" (expected hsv6 or sat-std)");
          probe.feature_sets.push_back(*set);
        }
      }
      if (*probe_frac_opt) probe.test_fraction = probe_fraction;
      return run_probe(probe, std::cout);
    }
    if (*dedup_cmd) {
      if (*alpha_opt) dedup.alphas = {alpha};
      if (*split_opt) dedup.split = split_path;
      if (*dedup_frac_opt) dedup.test_fraction = dedup_fraction;
      return run_dedup(dedup, std::cout);
    }
    if (*eval_cmd) {
      if (*tags_opt) eval.tags = tags_path;
      if (*extent_opt) eval.eclipse_extent = eval_extent;
      return run_eval(eval, std::cout);
    }
    if (*split_cmd) return run_split(split, std::cout);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitValidation;
}
