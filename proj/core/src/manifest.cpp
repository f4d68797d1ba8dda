#include "otobias/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "otobias/csv.hpp"
#include "otobias/error.hpp"
#include "otobias/rng.hpp"

namespace otobias {

namespace fs = std::filesystem;

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

constexpr std::array<std::string_view, 7> kSubtypeNames = {
    "Normal", "AOM", "COM", "Cerumen", "Effusion", "Myringosclerosis", "Tympanosclerosis"};
constexpr std::array<std::string_view, 3> kPartNames = {"train", "val", "test"};
constexpr std::array<std::string_view, 4> kMethodNames = {
    "predefined", "stratified_holdout", "stratified_kfold", "patient_grouped"};

template <class Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<std::string_view, N>& names, std::string_view text) {
  for (std::size_t i = 0; i < N; ++i) {
    if (iequals(names[i], text)) return static_cast<Enum>(i);
  }
  return std::nullopt;
}

std::string join(const std::vector<std::string>& items, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < items.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  if (items.size() > limit) out += fmt::format(", ... ({} total)", items.size());
  return out;
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::normal ? "normal" : "abnormal"; }
std::string_view to_string(Subtype subtype) { return kSubtypeNames[static_cast<std::size_t>(subtype)]; }
std::string_view to_string(SplitPart part) { return kPartNames[static_cast<std::size_t>(part)]; }
std::string_view to_string(SplitMethod method) { return kMethodNames[static_cast<std::size_t>(method)]; }

std::optional<Label> parse_label(std::string_view text) {
  if (iequals(text, "normal") || text == "0") return Label::normal;
  if (iequals(text, "abnormal") || text == "1") return Label::abnormal;
  return std::nullopt;
}
std::optional<Subtype> parse_subtype(std::string_view text) { return lookup<Subtype>(kSubtypeNames, text); }
std::optional<SplitPart> parse_split_part(std::string_view text) { return lookup<SplitPart>(kPartNames, text); }
std::optional<SplitMethod> parse_split_method(std::string_view text) {
  return lookup<SplitMethod>(kMethodNames, text);
}

// ---------------------------------------------------------------------------
// DatasetManifest

DatasetManifest::DatasetManifest(std::string name, std::vector<ImageRecord> records)
    : name_(std::move(name)), records_(std::move(records)) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.id.empty()) throw ValidationError(fmt::format("record {} has an empty id", i + 1));
    if (!index_.emplace(r.id, i).second) {
      throw ValidationError(fmt::format("duplicate id \"{}\"", r.id));
    }
    ++class_counts_[r.subtype];
  }
}

std::size_t DatasetManifest::count(Label label) const {
  std::size_t n = 0;
  for (const auto& [subtype, c] : class_counts_) {
    if (label_of(subtype) == label) n += c;
  }
  return n;
}

const ImageRecord* DatasetManifest::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

void DatasetManifest::require_both_classes() const {
  if (count(Label::normal) == 0 || count(Label::abnormal) == 0) {
    throw ValidationError(fmt::format("manifest \"{}\" needs both normal and abnormal records ({} normal, {} abnormal)",
                                      name_, count(Label::normal), count(Label::abnormal)));
  }
}

// ---------------------------------------------------------------------------
// Loading

namespace {

struct RawRecord {
  std::size_t line = 0;
  std::string id;
  std::string path;
  std::string subtype;
  std::string label;
  std::string patient_id;
  std::string split;
  std::string source;
};

ImageRecord to_record(const RawRecord& raw, const fs::path& base) {
  auto fail = [&](const std::string& what) {
    return ValidationError(fmt::format("row {}: {}", raw.line, what));
  };
  if (raw.id.empty()) throw fail("missing id");
  if (raw.path.empty()) throw fail(fmt::format("missing path for id \"{}\"", raw.id));

  ImageRecord rec;
  rec.id = raw.id;
  const fs::path p(raw.path);
  rec.path = (p.is_absolute() ? p : base / p).lexically_normal();

  const auto subtype = parse_subtype(raw.subtype);
  if (!subtype) throw fail(fmt::format("unknown subtype \"{}\" for id \"{}\"", raw.subtype, raw.id));
  rec.subtype = *subtype;

  if (!raw.label.empty()) {
    const auto label = parse_label(raw.label);
    if (!label) throw fail(fmt::format("unknown label \"{}\" for id \"{}\"", raw.label, raw.id));
    if (*label != label_of(rec.subtype)) {
      throw fail(fmt::format("label \"{}\" contradicts subtype {} for id \"{}\"", raw.label,
                             to_string(rec.subtype), raw.id));
    }
  }
  if (!raw.patient_id.empty()) rec.patient_id = raw.patient_id;
  if (!raw.split.empty()) {
    rec.split = parse_split_part(raw.split);
    if (!rec.split) throw fail(fmt::format("unknown split \"{}\" for id \"{}\"", raw.split, raw.id));
  }
  rec.source = raw.source;
  return rec;
}

std::vector<RawRecord> read_csv_records(const fs::path& path) {
  const csv::Table table = csv::read_file(path);
  if (table.header.empty()) throw ValidationError(fmt::format("{}: empty manifest", path.string()));
  const auto id = table.column("id");
  const auto file = table.column("path");
  const auto subtype = table.column("subtype");
  if (!id || !file || !subtype) {
    throw ValidationError(fmt::format("{}: header must contain id, path and subtype columns", path.string()));
  }
  const auto label = table.column("label");
  const auto patient = table.column("patient_id");
  const auto split = table.column("split");
  const auto source = table.column("source");

  std::vector<RawRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    auto get = [&](std::optional<std::size_t> col) { return col ? row.fields[*col] : std::string(); };
    out.push_back({row.line, get(id), get(file), get(subtype), get(label), get(patient), get(split),
                   get(source)});
  }
  return out;
}

std::vector<RawRecord> read_jsonl_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::vector<RawRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(fmt::format("row {}: malformed JSON ({})", line, e.what()));
    }
    if (!obj.is_object()) throw ValidationError(fmt::format("row {}: expected a JSON object", line));
    auto get = [&](const char* key) -> std::string {
      const auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) return {};
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number_integer()) return std::to_string(it->get<long long>());
      throw ValidationError(fmt::format("row {}: field \"{}\" must be a string", line, key));
    };
    out.push_back({line, get("id"), get("path"), get("subtype"), get("label"), get("patient_id"),
                   get("split"), get("source")});
  }
  if (in.bad()) throw IoError(fmt::format("cannot read {}", path.string()));
  return out;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path, const ManifestLoadOptions& options) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(fmt::format("cannot read manifest {}", path.string()));

  const auto ext = path.extension().string();
  const bool jsonl = iequals(ext, ".jsonl") || iequals(ext, ".ndjson");
  const std::vector<RawRecord> raw = jsonl ? read_jsonl_records(path) : read_csv_records(path);

  const fs::path base = path.parent_path();
  std::vector<ImageRecord> records;
  records.reserve(raw.size());
  for (const auto& r : raw) records.push_back(to_record(r, base));

  if (options.check_paths) {
    std::vector<std::string> missing;
    for (const auto& r : records) {
      std::ifstream probe(r.path, std::ios::binary);
      if (!fs::is_regular_file(r.path, ec) || !probe) missing.push_back(r.id);
    }
    if (!missing.empty()) {
      throw ValidationError(fmt::format("{}: unreadable image paths for ids: {}", path.string(), join(missing)));
    }
  }

  std::string name = path.stem().string();
  if (!records.empty() && !records.front().source.empty() &&
      std::all_of(records.begin(), records.end(),
                  [&](const ImageRecord& r) { return r.source == records.front().source; })) {
    name = records.front().source;
  }
  return DatasetManifest(std::move(name), std::move(records));
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  const fs::path base = fs::absolute(path).parent_path();
  csv::write_row(out, {"id", "path", "subtype", "patient_id", "split", "source"});
  for (const auto& r : manifest.records()) {
    const fs::path rel = fs::absolute(r.path).lexically_proximate(base);
    csv::write_row(out, {r.id, rel.generic_string(), std::string(to_string(r.subtype)),
                         r.patient_id.value_or(""),
                         r.split ? std::string(to_string(*r.split)) : std::string(), r.source});
  }
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
}

// ---------------------------------------------------------------------------
// SplitAssignment

SplitAssignment::SplitAssignment(std::map<std::string, SplitPart> parts, std::uint64_t seed,
                                 SplitMethod method, nlohmann::json parameters)
    : parts_(std::move(parts)), seed_(seed), method_(method), parameters_(std::move(parameters)) {}

std::optional<SplitPart> SplitAssignment::part(std::string_view id) const {
  const auto it = parts_.find(std::string(id));
  if (it == parts_.end()) return std::nullopt;
  return it->second;
}

std::size_t SplitAssignment::count(SplitPart part) const {
  return static_cast<std::size_t>(
      std::count_if(parts_.begin(), parts_.end(), [&](const auto& kv) { return kv.second == part; }));
}

std::vector<std::string> SplitAssignment::ids_in(SplitPart part) const {
  std::vector<std::string> out;
  for (const auto& [id, p] : parts_) {
    if (p == part) out.push_back(id);
  }
  return out;
}

void SplitAssignment::check_covers(const DatasetManifest& manifest) const {
  std::vector<std::string> missing;
  for (const auto& r : manifest.records()) {
    if (!parts_.count(r.id)) missing.push_back(r.id);
  }
  if (!missing.empty()) throw ValidationError("split does not assign ids: " + join(missing));
  std::vector<std::string> foreign;
  for (const auto& [id, p] : parts_) {
    if (!manifest.find(id)) foreign.push_back(id);
  }
  if (!foreign.empty()) throw ValidationError("split assigns ids not in the manifest: " + join(foreign));
}

// ---------------------------------------------------------------------------
// Split operations

std::vector<std::size_t> largest_remainder(std::span<const std::size_t> sizes, double fraction) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(total) * fraction));

  std::vector<std::size_t> counts(sizes.size());
  std::vector<double> remainders(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double exact = static_cast<double>(sizes[i]) * fraction;
    counts[i] = std::min(sizes[i], static_cast<std::size_t>(std::floor(exact)));
    remainders[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < target && k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (counts[i] < sizes[i]) {
      ++counts[i];
      ++assigned;
    }
  }
  return counts;
}

SplitAssignment predefined_split(const DatasetManifest& manifest) {
  std::map<std::string, SplitPart> parts;
  std::vector<std::string> missing;
  for (const auto& r : manifest.records()) {
    if (r.split) {
      parts.emplace(r.id, *r.split);
    } else {
      missing.push_back(r.id);
    }
  }
  if (!missing.empty()) throw ValidationError("records without a split value: " + join(missing));
  return SplitAssignment(std::move(parts), 0, SplitMethod::predefined);
}

namespace {

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) throw ValidationError(fmt::format("test fraction {} is not in (0, 1)", f));
}

// Record ids of each binary class in manifest order: [normal, abnormal].
std::array<std::vector<std::string>, 2> ids_by_label(const DatasetManifest& manifest) {
  std::array<std::vector<std::string>, 2> out;
  for (const auto& r : manifest.records()) out[static_cast<std::size_t>(r.label())].push_back(r.id);
  return out;
}

}  // namespace

SplitAssignment stratified_holdout(const DatasetManifest& manifest, double test_fraction,
                                   std::uint64_t seed) {
  check_fraction(test_fraction);
  auto classes = ids_by_label(manifest);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].size() < 2) {
      throw ValidationError(fmt::format("class {} has {} record(s); at least 2 are needed to stratify",
                                        to_string(static_cast<Label>(c)), classes[c].size()));
    }
  }
  const std::array<std::size_t, 2> sizes = {classes[0].size(), classes[1].size()};
  const auto test_counts = largest_remainder(sizes, test_fraction);

  Rng rng(seed);
  std::map<std::string, SplitPart> parts;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    rng.shuffle(std::span(classes[c]));
    for (std::size_t i = 0; i < classes[c].size(); ++i) {
      parts.emplace(classes[c][i], i < test_counts[c] ? SplitPart::test : SplitPart::train);
    }
  }
  return SplitAssignment(std::move(parts), seed, SplitMethod::stratified_holdout,
                         {{"test_fraction", test_fraction}});
}

std::vector<SplitAssignment> stratified_kfold(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError(fmt::format("k = {} folds; at least 2 are needed", k));
  auto classes = ids_by_label(manifest);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].size() < static_cast<std::size_t>(k)) {
      throw ValidationError(fmt::format("k = {} exceeds the {} class size of {}", k,
                                        to_string(static_cast<Label>(c)), classes[c].size()));
    }
  }

  Rng rng(seed);
  std::map<std::string, int> fold_of;
  // The fold cursor carries over between classes so overall fold sizes
  // also stay within one of each other.
  std::size_t cursor = 0;
  for (auto& ids : classes) {
    rng.shuffle(std::span(ids));
    for (const auto& id : ids) {
      fold_of.emplace(id, static_cast<int>(cursor % static_cast<std::size_t>(k)));
      ++cursor;
    }
  }

  std::vector<SplitAssignment> folds;
  folds.reserve(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::map<std::string, SplitPart> parts;
    for (const auto& [id, fold] : fold_of) parts.emplace(id, fold == f ? SplitPart::test : SplitPart::train);
    folds.emplace_back(std::move(parts), seed, SplitMethod::stratified_kfold,
                       nlohmann::json{{"k", k}, {"fold", f}});
  }
  return folds;
}

SplitAssignment patient_grouped_split(const DatasetManifest& manifest, double test_fraction,
                                      std::uint64_t seed) {
  check_fraction(test_fraction);
  std::vector<std::string> missing;
  std::map<std::string, std::vector<std::string>> by_patient;
  for (const auto& r : manifest.records()) {
    if (!r.patient_id) {
      missing.push_back(r.id);
    } else {
      by_patient[*r.patient_id].push_back(r.id);
    }
  }
  if (!missing.empty()) throw ValidationError("records without patient_id: " + join(missing));

  std::vector<std::string> patients;
  patients.reserve(by_patient.size());
  for (const auto& kv : by_patient) patients.push_back(kv.first);
  Rng rng(seed);
  rng.shuffle(std::span(patients));

  // Greedy: take a patient whenever doing so moves the test image count
  // closer to the target.
  const double target = test_fraction * static_cast<double>(manifest.size());
  double taken = 0.0;
  std::set<std::string> test_patients;
  for (const auto& p : patients) {
    const double with = taken + static_cast<double>(by_patient[p].size());
    if (std::abs(with - target) < std::abs(taken - target)) {
      taken = with;
      test_patients.insert(p);
    }
  }

  std::map<std::string, SplitPart> parts;
  for (const auto& [patient, ids] : by_patient) {
    const SplitPart part = test_patients.count(patient) ? SplitPart::test : SplitPart::train;
    for (const auto& id : ids) parts.emplace(id, part);
  }
  return SplitAssignment(std::move(parts), seed, SplitMethod::patient_grouped,
                         {{"test_fraction", test_fraction}});
}

// ---------------------------------------------------------------------------
// Serialization

void write_split(const SplitAssignment& split, const fs::path& csv_path) {
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", csv_path.string()));
    csv::write_row(out, {"id", "split"});
    for (const auto& [id, part] : split.parts()) csv::write_row(out, {id, std::string(to_string(part))});
    if (!out) throw IoError(fmt::format("cannot write {}", csv_path.string()));
  }
  fs::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  std::ofstream out(sidecar, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", sidecar.string()));
  const nlohmann::json meta = {{"seed", split.seed()},
                               {"method", std::string(to_string(split.method()))},
                               {"parameters", split.parameters()}};
  out << meta.dump(2) << '\n';
}

SplitAssignment read_split(const fs::path& csv_path) {
  const csv::Table table = csv::read_file(csv_path);
  const auto id = table.column("id");
  const auto part = table.column("split");
  if (!id || !part) throw ValidationError(fmt::format("{}: header must be id,split", csv_path.string()));
  std::map<std::string, SplitPart> parts;
  for (const auto& row : table.rows) {
    const auto p = parse_split_part(row.fields[*part]);
    if (!p) throw ValidationError(fmt::format("{}: row {}: unknown split \"{}\"", csv_path.string(), row.line, row.fields[*part]));
    if (!parts.emplace(row.fields[*id], *p).second) {
      throw ValidationError(fmt::format("{}: duplicate id \"{}\"", csv_path.string(), row.fields[*id]));
    }
  }

  std::uint64_t seed = 0;
  SplitMethod method = SplitMethod::predefined;
  nlohmann::json params = nlohmann::json::object();
  fs::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (std::ifstream in(sidecar); in) {
    try {
      const auto meta = nlohmann::json::parse(in);
      seed = meta.value("seed", std::uint64_t{0});
      if (const auto m = parse_split_method(meta.value("method", std::string("predefined")))) method = *m;
      params = meta.value("parameters", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("{}: {}", sidecar.string(), e.what()));
    }
  }
  return SplitAssignment(std::move(parts), seed, method, std::move(params));
}

}  // namespace otobias
