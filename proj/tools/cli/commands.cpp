#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "otobias/csv.hpp"
#include "otobias/dedup.hpp"
#include "otobias/error.hpp"
#include "otobias/image_io.hpp"
#include "otobias/imageops.hpp"
#include "otobias/metrics.hpp"
#include "otobias/parallel.hpp"
#include "otobias/report.hpp"

namespace otobias::cli {

using nlohmann::json;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("OTOBIAS_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
  }
  return 0;
}

std::string extent_suffix(double extent) {
  std::string s = fmt::format("{}", extent);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return "_e" + s;
}

namespace {

// Reports carry this one volatile field; everything else is a function of
// the inputs and flags.
std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

json report_header(std::string_view command, json config) {
  return json{{"tool", "otobias"}, {"command", command}, {"generated_at", timestamp()}, {"config", std::move(config)}};
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_image_file(const fs::path& p) {
  const auto ext = lower(p.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(fmt::format("cannot create directory {}", dir.string()));
}

std::string paths_json_string(const fs::path& p) { return p.generic_string(); }

void print_class_summary(const DatasetManifest& m, std::ostream& log) {
  log << fmt::format("{:<18}{:>8}\n", "subtype", "images");
  for (const auto& [subtype, n] : m.class_counts()) log << fmt::format("{:<18}{:>8}\n", to_string(subtype), n);
  log << fmt::format("{:<18}{:>8}\n{:<18}{:>8}\n{:<18}{:>8}\n", "normal", m.count(Label::normal), "abnormal",
                     m.count(Label::abnormal), "total", m.size());
}

json class_counts_json(const DatasetManifest& m) {
  json counts = json::object();
  for (const auto& [subtype, n] : m.class_counts()) counts[std::string(to_string(subtype))] = n;
  return counts;
}

// Split for a manifest: the records' own split column when complete, else a
// stratified holdout when a fraction is given.
SplitAssignment resolve_split(const DatasetManifest& manifest, std::optional<double> test_fraction,
                              std::uint64_t seed) {
  const auto recs = manifest.records();
  const bool complete = std::all_of(recs.begin(), recs.end(), [](const ImageRecord& r) { return r.split.has_value(); });
  if (complete) return predefined_split(manifest);
  if (test_fraction) return stratified_holdout(manifest, *test_fraction, seed);
  throw ValidationError(fmt::format(
      "manifest \"{}\" has records without a split; pass --test-fraction to split it automatically", manifest.name()));
}

json split_json(const SplitAssignment& s) {
  return json{{"method", std::string(to_string(s.method()))},
              {"seed", s.seed()},
              {"parameters", s.parameters()},
              {"train", s.count(SplitPart::train)},
              {"val", s.count(SplitPart::val)},
              {"test", s.count(SplitPart::test)}};
}

std::string fixed(double v, int digits = 6) { return fmt::format("{:.{}f}", v, digits); }

}  // namespace

// ---------------------------------------------------------------------------
// scan

int run_scan(const ScanOptions& options, std::ostream& log) {
  std::error_code ec;
  if (!fs::is_directory(options.dir, ec)) throw IoError(fmt::format("{} is not a directory", options.dir.string()));

  std::vector<fs::path> folders;
  for (const auto& entry : fs::directory_iterator(options.dir)) {
    if (entry.is_directory()) folders.push_back(entry.path());
  }
  std::sort(folders.begin(), folders.end());

  std::string source = options.source;
  if (source.empty()) source = fs::absolute(options.dir).lexically_normal().filename().string();
  if (source.empty()) source = "dataset";

  std::vector<ImageRecord> records;
  for (const auto& folder : folders) {
    const auto subtype = parse_subtype(folder.filename().string());
    if (!subtype) {
      log << fmt::format("warning: skipping folder \"{}\" (not a known subtype)\n", folder.filename().string());
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(folder)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      ImageRecord r;
      const fs::path rel = f.lexically_relative(options.dir);
      fs::path id = rel;
      id.replace_extension();
      r.id = id.generic_string();
      r.path = fs::absolute(f).lexically_normal();
      r.subtype = *subtype;
      r.source = source;
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) throw ValidationError(fmt::format("no images found under {}", options.dir.string()));

  const DatasetManifest manifest(source, std::move(records));
  if (options.out_manifest.has_parent_path()) ensure_dir(options.out_manifest.parent_path());
  write_manifest_csv(manifest, options.out_manifest);
  log << fmt::format("wrote {} records to {}\n", manifest.size(), options.out_manifest.string());
  print_class_summary(manifest, log);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eclipse

int run_eclipse(const EclipseOptions& options, std::ostream& log) {
  if (options.extents.empty()) throw ValidationError("at least one eclipse extent is required");
  for (double e : options.extents) {
    if (!(e >= 0.0 && e <= 1.0)) throw ValidationError(fmt::format("eclipse extent {} is outside [0, 1]", e));
  }
  const DatasetManifest manifest = load_manifest(options.manifest);
  const fs::path root = fs::absolute(options.manifest).parent_path().lexically_normal();
  ensure_dir(options.out);

  // Output location of each record relative to its tree, same for all extents.
  std::vector<fs::path> relative(manifest.size());
  std::set<std::string> taken;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.records()[i];
    fs::path rel = fs::absolute(r.path).lexically_normal().lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") rel = fs::path(std::string(to_string(r.subtype))) / r.path.filename();
    rel.replace_extension(".png");
    if (!taken.insert(rel.generic_string()).second) {
      std::string safe = r.id;
      std::replace_if(safe.begin(), safe.end(), [](char c) { return c == '/' || c == '\\'; }, '_');
      rel.replace_filename(rel.stem().string() + "__" + safe + ".png");
      taken.insert(rel.generic_string());
    }
    relative[i] = rel;
  }

  json trees = json::array();
  for (double extent : options.extents) {
    const fs::path tree = options.out / (manifest.name() + extent_suffix(extent));
    ensure_dir(tree);
    std::vector<std::string> errors(manifest.size());
    parallel_for(manifest.size(), options.jobs, [&](std::size_t i) {
      const auto& r = manifest.records()[i];
      try {
        const ImageBuffer image = decode_image(r.path);
        const fs::path dest = tree / relative[i];
        std::error_code ec;
        fs::create_directories(dest.parent_path(), ec);
        write_png(eclipse_mask(image, MaskSpec{extent, std::nullopt}), dest);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    });

    std::vector<ImageRecord> kept;
    json failures = json::array();
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      if (!errors[i].empty()) {
        log << fmt::format("warning: {}\n", errors[i]);
        failures.push_back({{"id", manifest.records()[i].id}, {"error", errors[i]}});
        continue;
      }
      ImageRecord r = manifest.records()[i];
      r.path = fs::absolute(tree / relative[i]).lexically_normal();
      kept.push_back(std::move(r));
    }
    write_manifest_csv(DatasetManifest(manifest.name(), std::move(kept)), tree / "manifest.csv");
    log << fmt::format("extent {}: {} images written to {} ({} failed)\n", extent, manifest.size() - failures.size(),
                       tree.string(), failures.size());
    trees.push_back({{"eclipse_extent", extent},
                     {"directory", tree.filename().generic_string()},
                     {"written", manifest.size() - failures.size()},
                     {"failures", failures}});
  }

  json report = report_header("eclipse", {{"manifest", paths_json_string(options.manifest)},
                                          {"extents", options.extents},
                                          {"out", paths_json_string(options.out)},
                                          {"jobs", options.jobs}});
  report["dataset"] = manifest.name();
  report["class_counts"] = class_counts_json(manifest);
  report["trees"] = trees;
  write_json_file(options.out / "eclipse_report.json", report);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// probe

namespace {

struct ExtractedDataset {
  ProbeDataset probe;
  std::vector<HsvFeatures> features;
  std::vector<Label> labels;
  SplitAssignment split;
  json skipped = json::array();
};

ExtractedDataset extract(const DatasetManifest& manifest, const SplitAssignment& split, int jobs, std::ostream& log) {
  std::vector<std::optional<HsvFeatures>> found(manifest.size());
  std::vector<std::string> errors(manifest.size());
  parallel_for(manifest.size(), jobs, [&](std::size_t i) {
    const auto& r = manifest.records()[i];
    try {
      found[i] = hsv_features(decode_image(r.path), r.id);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  ExtractedDataset out;
  out.split = split;
  std::vector<SplitPart> parts;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.records()[i];
    if (!found[i]) {
      log << fmt::format("warning: {}\n", errors[i]);
      out.skipped.push_back({{"id", r.id}, {"error", errors[i]}});
      continue;
    }
    out.features.push_back(std::move(*found[i]));
    out.labels.push_back(r.label());
    parts.push_back(*split.part(r.id));
  }
  out.probe.name = manifest.name();
  out.probe.features = make_feature_matrix(out.features, out.labels);
  out.probe.parts = std::move(parts);
  return out;
}

void write_features_csv(const ExtractedDataset& d, const fs::path& path) {
  std::ostringstream out;
  csv::write_row(out, {"id", "hue_mean", "hue_std", "sat_mean", "sat_std", "val_mean", "val_std", "label"});
  for (std::size_t i = 0; i < d.features.size(); ++i) {
    const auto& f = d.features[i];
    std::vector<std::string> row = {f.id};
    for (double v : f.values()) row.push_back(fmt::format("{}", v));
    row.push_back(std::string(to_string(d.labels[i])));
    csv::write_row(out, row);
  }
  write_text_file(path, out.str());
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

}  // namespace

int run_probe(const ProbeOptions& options, std::ostream& log) {
  if (options.manifests.empty()) throw ValidationError("at least one --manifest is required");
  if (options.feature_sets.empty()) throw ValidationError("at least one feature set is required");
  ensure_dir(options.out);

  std::vector<ExtractedDataset> datasets;
  std::set<std::string> names;
  for (const auto& path : options.manifests) {
    const DatasetManifest manifest = load_manifest(path);
    manifest.require_both_classes();
    if (!names.insert(manifest.name()).second) {
      throw ValidationError(fmt::format("two manifests share the dataset name \"{}\"", manifest.name()));
    }
    const SplitAssignment split = resolve_split(manifest, options.test_fraction, options.seed);
    log << fmt::format("{}: extracting HSV features from {} images\n", manifest.name(), manifest.size());
    datasets.push_back(extract(manifest, split, options.jobs, log));
    write_features_csv(datasets.back(), options.out / fmt::format("features_{}.csv", safe_name(manifest.name())));
  }

  std::vector<ProbeDataset> inputs;
  for (const auto& d : datasets) inputs.push_back(d.probe);

  json matrices = json::array();
  std::ostringstream coef_csv;
  csv::write_row(coef_csv, {"train_source", "feature_set", "variable", "beta", "std_error", "odds_ratio", "ci_low",
                            "ci_high", "p_value"});
  std::ostringstream table_csv;
  {
    std::vector<std::string> header = {"train_source", "feature_set", "internal"};
    for (const auto& d : inputs) header.push_back(d.name);
    csv::write_row(table_csv, header);
  }

  for (FeatureSet set : options.feature_sets) {
    const ProbeMatrix m = probe_matrix(inputs, set, options.jobs);
    matrices.push_back(m);
    for (const auto& row : m.rows) {
      for (const auto& c : row.coefficients) {
        csv::write_row(coef_csv, {row.train_source, std::string(to_string(set)), c.variable, fixed(c.beta, 8),
                                  fixed(c.std_error, 8), fixed(c.odds_ratio), fixed(c.ci_low), fixed(c.ci_high),
                                  fmt::format("{:.6g}", c.p_value)});
      }
      std::vector<std::string> line = {row.train_source, std::string(to_string(set))};
      std::string internal = "N/A";
      std::vector<std::string> external;
      for (const auto& cell : row.cells) {
        const std::string text = cell.result ? format_auc(*cell.result) : "N/A";
        if (cell.internal) {
          internal = text;
          external.push_back("N/A");
        } else {
          external.push_back(text);
        }
      }
      line.push_back(internal);
      line.insert(line.end(), external.begin(), external.end());
      csv::write_row(table_csv, line);
      if (!row.error.empty()) log << fmt::format("warning: {} ({}): {}\n", row.train_source, to_string(set), row.error);
    }
  }

  json config{{"manifests", json::array()},
              {"feature_sets", json::array()},
              {"out", paths_json_string(options.out)},
              {"test_fraction", options.test_fraction ? json(*options.test_fraction) : json(nullptr)},
              {"seed", options.seed},
              {"jobs", options.jobs}};
  for (const auto& p : options.manifests) config["manifests"].push_back(paths_json_string(p));
  for (FeatureSet s : options.feature_sets) config["feature_sets"].push_back(std::string(to_string(s)));

  json report = report_header("probe", config);
  json ds = json::array();
  for (const auto& d : datasets) {
    ds.push_back({{"name", d.probe.name},
                  {"images", d.features.size()},
                  {"split", split_json(d.split)},
                  {"skipped", d.skipped}});
  }
  report["datasets"] = ds;
  report["matrices"] = matrices;
  write_json_file(options.out / "probe_report.json", report);
  write_text_file(options.out / "coefficients.csv", coef_csv.str());
  write_text_file(options.out / "probe_table.csv", table_csv.str());
  log << fmt::format("wrote probe report for {} dataset(s) to {}\n", datasets.size(), options.out.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// dedup

int run_dedup(const DedupOptions& options, std::ostream& log) {
  if (options.alphas.empty()) throw ValidationError("--alpha or --alpha-sweep is required (there is no default threshold)");
  if (!(options.leakage_budget >= 0.0 && options.leakage_budget <= 1.0)) {
    throw ValidationError(fmt::format("leakage budget {} is outside [0, 1]", options.leakage_budget));
  }
  for (std::size_t i = 0; i < options.alphas.size(); ++i) {
    ClusterConfig{options.alphas[i], Linkage::connected_components, options.min_cluster_size}.validate();
    if (i && options.alphas[i] < options.alphas[i - 1]) throw ValidationError("--alpha-sweep values must be ascending");
  }

  // Clustering works on embeddings only, so image files need not exist.
  const DatasetManifest manifest = load_manifest(options.manifest, {.check_paths = false});
  const SplitAssignment split =
      options.split ? read_split(*options.split) : resolve_split(manifest, options.test_fraction, options.seed);
  split.check_covers(manifest);

  const EmbeddingSet embeddings = load_embeddings(options.embeddings, {.normalize = true, .manifest = &manifest});
  std::vector<std::string> missing;
  for (const auto& r : manifest.records()) {
    if (!embeddings.index_of(r.id)) missing.push_back(r.id);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 50; ++i) list += (i ? ", " : "") + missing[i];
    throw ValidationError(fmt::format("missing embeddings for {} id(s): {}", missing.size(), list));
  }

  const auto sweep = alpha_sweep(embeddings, options.alphas, split, manifest, options.min_cluster_size, nullptr, options.jobs);

  json reports = json::array();
  json styles = json::array();
  for (const auto& point : sweep) {
    json r = point.report;
    r["alpha"] = point.alpha;
    reports.push_back(std::move(r));
    const auto style = style_label_report(point.report.sets, manifest, options.purity_threshold, options.style_min_size);
    json clusters = json::array();
    for (const auto& s : style) {
      json c = s;
      c["members"] = point.report.sets[s.cluster_index];
      clusters.push_back(std::move(c));
    }
    styles.push_back({{"alpha", point.alpha}, {"clusters", clusters}});
  }

  // The gate and the subset tags use the smallest alpha: the strictest
  // near-duplicate definition in the sweep.
  const SweepPoint& gate_point = sweep.front();
  const double leakage = gate_point.report.leakage.leakage_fraction();
  const bool passed = leakage <= options.leakage_budget;

  json config{{"manifest", paths_json_string(options.manifest)},
              {"embeddings", paths_json_string(options.embeddings)},
              {"alphas", options.alphas},
              {"split", options.split ? json(paths_json_string(*options.split)) : json(nullptr)},
              {"test_fraction", options.test_fraction ? json(*options.test_fraction) : json(nullptr)},
              {"leakage_budget", options.leakage_budget},
              {"min_cluster_size", options.min_cluster_size},
              {"style_min_size", options.style_min_size},
              {"purity_threshold", options.purity_threshold},
              {"seed", options.seed},
              {"jobs", options.jobs},
              {"out", paths_json_string(options.out)}};

  ensure_dir(options.out);
  json report = report_header("dedup", config);
  report["dataset"] = manifest.name();
  report["split"] = split_json(split);
  report["reports"] = reports;
  report["gate"] = {{"alpha", gate_point.alpha},
                    {"leakage_fraction", leakage},
                    {"leakage_budget", options.leakage_budget},
                    {"passed", passed}};
  write_json_file(options.out / "cluster_report.json", report);

  json style_report = report_header("dedup", config);
  style_report["dataset"] = manifest.name();
  style_report["sweep"] = styles;
  write_json_file(options.out / "style_report.json", style_report);

  std::ostringstream tags;
  csv::write_row(tags, {"id", "subset_tag"});
  const std::set<std::string> with(gate_point.report.test_ids_with_dup.begin(), gate_point.report.test_ids_with_dup.end());
  for (const auto& id : split.ids_in(SplitPart::test)) {
    csv::write_row(tags, {id, std::string(to_string(with.count(id) ? SubsetTag::with_near_dup : SubsetTag::without_near_dup))});
  }
  write_text_file(options.out / "subset_tags.csv", tags.str());

  const auto& lk = gate_point.report.leakage;
  log << fmt::format("alpha {}: {} sets, {} redundant images, {}/{} test images with a near duplicate in training\n",
                     gate_point.alpha, gate_point.report.set_count, gate_point.report.redundant_count,
                     lk.test_with_dup_count, lk.test_set_size);
  if (!passed) {
    log << fmt::format("leakage gate FAILED: {:.4f} of test images exceed the budget {:.4f}\n", leakage, options.leakage_budget);
    return kExitGate;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

namespace {

std::vector<ScoredSample> read_scores(const fs::path& path) {
  const csv::Table t = csv::read_file(path);
  const auto id = t.column("id");
  const auto score = t.column("score");
  const auto label = t.column("label");
  if (!id || !score || !label) throw ValidationError(fmt::format("{}: header must contain id,score,label", path.string()));
  std::vector<ScoredSample> out;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    ScoredSample s;
    s.id = row.fields[*id];
    if (!seen.insert(s.id).second) throw ValidationError(fmt::format("{}: duplicate id \"{}\"", path.string(), s.id));
    try {
      std::size_t used = 0;
      s.score = std::stod(row.fields[*score], &used);
      if (used != row.fields[*score].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("{}: row {}: bad score \"{}\"", path.string(), row.line, row.fields[*score]));
    }
    if (!std::isfinite(s.score)) throw ValidationError(fmt::format("{}: row {}: non-finite score", path.string(), row.line));
    const auto l = parse_label(row.fields[*label]);
    if (!l) throw ValidationError(fmt::format("{}: row {}: bad label \"{}\"", path.string(), row.line, row.fields[*label]));
    s.label = *l == Label::abnormal ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

json auc_cell(std::span<const ScoredSample> samples) {
  try {
    return json(delong_ci(samples));
  } catch (const ValidationError& e) {
    return json{{"auc", nullptr}, {"ci_low", nullptr}, {"ci_high", nullptr}, {"display", "N/A"},
                {"n", samples.size()}, {"error", e.what()}};
  }
}

}  // namespace

int run_eval(const EvalOptions& options, std::ostream& log) {
  std::vector<ScoredSample> samples = read_scores(options.scores);
  if (samples.empty()) throw ValidationError(fmt::format("{}: no scores", options.scores.string()));

  if (options.tags) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
    const csv::Table t = csv::read_file(*options.tags);
    const auto id = t.column("id");
    const auto tag = t.column("subset_tag");
    if (!id || !tag) throw ValidationError(fmt::format("{}: header must be id,subset_tag", options.tags->string()));
    std::vector<std::string> unknown;
    for (const auto& row : t.rows) {
      const auto it = index.find(row.fields[*id]);
      if (it == index.end()) {
        unknown.push_back(row.fields[*id]);
        continue;
      }
      const auto parsed = parse_subset_tag(row.fields[*tag]);
      if (!parsed) throw ValidationError(fmt::format("{}: row {}: unknown subset tag \"{}\"", options.tags->string(), row.line, row.fields[*tag]));
      samples[it->second].subset_tag = *parsed;
    }
    if (!unknown.empty()) {
      std::string list;
      for (std::size_t i = 0; i < unknown.size() && i < 50; ++i) list += (i ? ", " : "") + unknown[i];
      throw ValidationError(fmt::format("tags reference ids absent from the scores: {}", list));
    }
  }

  json config{{"scores", paths_json_string(options.scores)},
              {"tags", options.tags ? json(paths_json_string(*options.tags)) : json(nullptr)},
              {"train_source", options.train_source},
              {"model_name", options.model_name},
              {"target", options.target},
              {"eclipse_extent", options.eclipse_extent ? json(*options.eclipse_extent) : json(nullptr)},
              {"out", paths_json_string(options.out)}};
  json report = report_header("eval", config);
  const json overall = auc_cell(samples);
  report["overall"] = overall;
  log << fmt::format("overall AUC: {} (n = {})\n", overall.value("display", "N/A"), samples.size());

  const std::string extent = options.eclipse_extent ? fmt::format("{}", *options.eclipse_extent) : "";
  std::ostringstream metrics;
  csv::write_row(metrics, {"train_source", "eclipse_extent", "model_name", "target", "auc", "ci_low", "ci_high", "n"});
  auto num = [](const json& j, const char* key) { return j[key].is_null() ? std::string("N/A") : fmt::format("{}", j[key].get<double>()); };
  csv::write_row(metrics, {options.train_source, extent, options.model_name, options.target, num(overall, "auc"),
                           num(overall, "ci_low"), num(overall, "ci_high"), std::to_string(samples.size())});

  if (options.tags) {
    std::vector<ScoredSample> with, without;
    for (const auto& s : samples) {
      if (s.subset_tag == SubsetTag::with_near_dup) with.push_back(s);
      if (s.subset_tag == SubsetTag::without_near_dup) without.push_back(s);
    }
    json with_cell = auc_cell(with);
    json without_cell = auc_cell(without);
    with_cell["n"] = with.size();
    without_cell["n"] = without.size();
    json p = nullptr;
    if (!with_cell["auc"].is_null() && !without_cell["auc"].is_null()) {
      p = compare_auc_unpaired(delong_ci(with), delong_ci(without));
    }
    report["subsets"] = {{"with_near_dup", with_cell},
                         {"without_near_dup", without_cell},
                         {"alternative", "with_near_dup > without_near_dup"},
                         {"one_sided_p", p}};

    std::ostringstream subsets;
    csv::write_row(subsets, {"train_source", "eclipse_extent", "model_name", "internal_auc", "with_near_dup_auc",
                             "without_near_dup_auc", "one_sided_p"});
    csv::write_row(subsets, {options.train_source, extent, options.model_name, overall.value("display", "N/A"),
                             with_cell.value("display", "N/A"), without_cell.value("display", "N/A"),
                             p.is_null() ? std::string("N/A") : fmt::format("{:.6g}", p.get<double>())});
    ensure_dir(options.out);
    write_text_file(options.out / "subsets.csv", subsets.str());
    log << fmt::format("with near-dup: {}, without: {}, one-sided p = {}\n", with_cell.value("display", "N/A"),
                       without_cell.value("display", "N/A"), p.is_null() ? std::string("N/A") : fmt::format("{:.4g}", p.get<double>()));
  }

  ensure_dir(options.out);
  write_json_file(options.out / "metrics_report.json", report);
  write_text_file(options.out / "metrics.csv", metrics.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// split

int run_split(const SplitOptions& options, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(options.manifest, {.check_paths = false});
  ensure_dir(options.out);
  std::vector<std::pair<std::string, SplitAssignment>> outputs;
  switch (options.method) {
    case SplitMethod::predefined:
      outputs.emplace_back("split", predefined_split(manifest));
      break;
    case SplitMethod::stratified_holdout:
      outputs.emplace_back("split", stratified_holdout(manifest, options.test_fraction, options.seed));
      break;
    case SplitMethod::patient_grouped:
      outputs.emplace_back("split", patient_grouped_split(manifest, options.test_fraction, options.seed));
      break;
    case SplitMethod::stratified_kfold: {
      auto folds = stratified_kfold(manifest, options.k, options.seed);
      for (std::size_t f = 0; f < folds.size(); ++f) outputs.emplace_back(fmt::format("fold_{}", f), std::move(folds[f]));
      break;
    }
  }
  for (const auto& [stem, split] : outputs) {
    write_split(split, options.out / (stem + ".csv"));
    log << fmt::format("{}: {} train, {} val, {} test\n", stem, split.count(SplitPart::train), split.count(SplitPart::val),
                       split.count(SplitPart::test));
  }
  return kExitOk;
}

}  // namespace otobias::cli
