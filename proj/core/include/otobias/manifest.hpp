#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace otobias {

enum class Label : std::uint8_t { normal = 0, abnormal = 1 };

// Diagnostic subtypes of the otoscopy datasets. Everything except Normal
// binarizes to Label::abnormal.
enum class Subtype : std::uint8_t {
  Normal,
  AOM,
  COM,
  Cerumen,
  Effusion,
  Myringosclerosis,
  Tympanosclerosis,
};

inline constexpr std::array<Subtype, 7> kAllSubtypes = {
    Subtype::Normal,   Subtype::AOM,
    Subtype::COM,      Subtype::Cerumen,
    Subtype::Effusion, Subtype::Myringosclerosis,
    Subtype::Tympanosclerosis,
};

enum class SplitPart : std::uint8_t { train, val, test };

enum class SplitMethod : std::uint8_t {
  predefined,
  stratified_holdout,
  stratified_kfold,
  patient_grouped,
};

constexpr Label label_of(Subtype subtype) {
  return subtype == Subtype::Normal ? Label::normal : Label::abnormal;
}

std::string_view to_string(Label label);
std::string_view to_string(Subtype subtype);
std::string_view to_string(SplitPart part);
std::string_view to_string(SplitMethod method);

// Case-insensitive; returns nullopt for unknown names.
std::optional<Label> parse_label(std::string_view text);
std::optional<Subtype> parse_subtype(std::string_view text);
std::optional<SplitPart> parse_split_part(std::string_view text);
std::optional<SplitMethod> parse_split_method(std::string_view text);

struct ImageRecord {
  std::string id;
  std::filesystem::path path;
  Subtype subtype = Subtype::Normal;
  std::optional<std::string> patient_id;
  std::optional<SplitPart> split;
  std::string source;

  Label label() const { return label_of(subtype); }
};

// An ordered, immutable list of image records with unique ids.
class DatasetManifest {
 public:
  // Throws ValidationError naming the first duplicated id.
  DatasetManifest(std::string name, std::vector<ImageRecord> records);

  const std::string& name() const { return name_; }
  std::span<const ImageRecord> records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const std::map<Subtype, std::size_t>& class_counts() const { return class_counts_; }

  std::size_t count(Label label) const;
  const ImageRecord* find(std::string_view id) const;

  // Throws ValidationError unless both binary classes are present.
  void require_both_classes() const;

 private:
  std::string name_;
  std::vector<ImageRecord> records_;
  std::map<Subtype, std::size_t> class_counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ManifestLoadOptions {
  // Verify that every image path exists and is a readable regular file.
  bool check_paths = true;
};

// Loads a manifest from CSV (header `id,path,subtype,patient_id,split,source`,
// optional `label` column cross-checked against the subtype) or JSON lines
// (`.jsonl` / `.ndjson`, one object per record with the same keys).
// Relative image paths resolve against the manifest's directory. The
// manifest name is the shared `source` value when all records agree, else
// the file stem.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              const ManifestLoadOptions& options = {});

// Writes the CSV form. Image paths are written relative to the output
// file's directory when possible.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);

class SplitAssignment {
 public:
  SplitAssignment() = default;
  SplitAssignment(std::map<std::string, SplitPart> parts, std::uint64_t seed,
                  SplitMethod method, nlohmann::json parameters = nlohmann::json::object());

  const std::map<std::string, SplitPart>& parts() const { return parts_; }
  std::optional<SplitPart> part(std::string_view id) const;
  std::uint64_t seed() const { return seed_; }
  SplitMethod method() const { return method_; }
  const nlohmann::json& parameters() const { return parameters_; }

  std::size_t count(SplitPart part) const;
  // Ids assigned to `part`, in lexicographic order.
  std::vector<std::string> ids_in(SplitPart part) const;

  // Throws ValidationError unless every manifest id is assigned and no
  // foreign ids are present.
  void check_covers(const DatasetManifest& manifest) const;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;

 private:
  std::map<std::string, SplitPart> parts_;
  std::uint64_t seed_ = 0;
  SplitMethod method_ = SplitMethod::predefined;
  nlohmann::json parameters_ = nlohmann::json::object();
};

// Per-part target counts for `sizes` at `fraction`: floor of each share,
// then the remaining units (up to round(total * fraction)) go to the largest
// fractional remainders, ties to the lower index.
std::vector<std::size_t> largest_remainder(std::span<const std::size_t> sizes, double fraction);

// Uses the records' own `split` column. Throws if any record lacks one.
SplitAssignment predefined_split(const DatasetManifest& manifest);

// Stratified by binary label; test counts per class from largest_remainder.
SplitAssignment stratified_holdout(const DatasetManifest& manifest, double test_fraction,
                                   std::uint64_t seed);

// k assignments; in assignment i, fold i is `test` and the rest `train`.
std::vector<SplitAssignment> stratified_kfold(const DatasetManifest& manifest, int k,
                                              std::uint64_t seed);

// Whole patients go to one side; the achieved test image count is within
// one patient's image count of test_fraction * N.
SplitAssignment patient_grouped_split(const DatasetManifest& manifest, double test_fraction,
                                      std::uint64_t seed);

// Writes `id,split` to csv_path plus a JSON sidecar (same stem, `.json`)
// holding {seed, method, parameters}.
void write_split(const SplitAssignment& split, const std::filesystem::path& csv_path);

// Reads a split CSV and its sidecar, if present (method defaults to
// predefined, seed to 0 without one).
SplitAssignment read_split(const std::filesystem::path& csv_path);

}  // namespace otobias
