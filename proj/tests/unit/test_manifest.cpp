#include <gtest/gtest.h>

#include <map>
#include <set>

#include "otobias/csv.hpp"
#include "otobias/error.hpp"
#include "otobias/manifest.hpp"
#include "otobias/rng.hpp"
#include "support/support.hpp"

using namespace otobias;
namespace fs = std::filesystem;
using otobias::test::TempDir;
using otobias::test::write_file;

namespace {

std::size_t test_count(const SplitAssignment& s, const DatasetManifest& m, Label label) {
  std::size_t n = 0;
  for (const auto& r : m.records()) {
    if (r.label() == label && s.part(r.id) == SplitPart::test) ++n;
  }
  return n;
}

DatasetManifest with_patients(std::vector<std::pair<std::string, Subtype>> rows) {
  std::vector<ImageRecord> recs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ImageRecord r;
    r.id = "img" + std::to_string(i);
    r.path = "x.png";
    r.subtype = rows[i].second;
    if (!rows[i].first.empty()) r.patient_id = rows[i].first;
    r.source = "p";
    recs.push_back(r);
  }
  return DatasetManifest("p", std::move(recs));
}

}  // namespace

TEST(Labels, BinarizationCoversAllSubtypes) {
  for (Subtype s : kAllSubtypes) {
    EXPECT_EQ(label_of(s), s == Subtype::Normal ? Label::normal : Label::abnormal) << to_string(s);
    EXPECT_EQ(parse_subtype(to_string(s)), s);
  }
  EXPECT_EQ(parse_subtype("effusion"), Subtype::Effusion);
  EXPECT_FALSE(parse_subtype("Unknown"));
}

TEST(LoadManifest, TwoRowsBinarize) {
  TempDir dir;
  write_file(dir / "a.png", "x");
  write_file(dir / "b.png", "x");
  write_file(dir / "m.csv",
             "id,path,subtype,patient_id,split,source\n"
             "a,a.png,Normal,,,demo\n"
             "b,b.png,Effusion,,,demo\n");
  const auto m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.name(), "demo");
  EXPECT_EQ(m.class_counts().at(Subtype::Normal), 1u);
  EXPECT_EQ(m.class_counts().at(Subtype::Effusion), 1u);
  EXPECT_EQ(m.records()[0].label(), Label::normal);
  EXPECT_EQ(m.records()[1].label(), Label::abnormal);
  EXPECT_EQ(m.records()[0].path, (dir / "a.png").lexically_normal());
}

TEST(LoadManifest, EightHundredEightyRowCounts) {
  TempDir dir;
  write_file(dir / "img.png", "x");
  std::string text = "id,path,subtype,patient_id,split,source\n";
  const Subtype types[] = {Subtype::Normal, Subtype::COM, Subtype::Cerumen, Subtype::Myringosclerosis};
  int k = 0;
  for (Subtype t : types) {
    for (int i = 0; i < 220; ++i) text += "c" + std::to_string(k++) + ",img.png," + std::string(to_string(t)) + ",,,site_a\n";
  }
  write_file(dir / "site_a.csv", text);
  const auto m = load_manifest(dir / "site_a.csv");
  EXPECT_EQ(m.size(), 880u);
  const std::map<Subtype, std::size_t> expected = {
      {Subtype::Normal, 220}, {Subtype::COM, 220}, {Subtype::Cerumen, 220}, {Subtype::Myringosclerosis, 220}};
  EXPECT_EQ(m.class_counts(), expected);
  EXPECT_EQ(m.count(Label::normal), 220u);
  EXPECT_EQ(m.count(Label::abnormal), 660u);
}

TEST(LoadManifest, DuplicateIdNamed) {
  TempDir dir;
  write_file(dir / "a.png", "x");
  write_file(dir / "m.csv", "id,path,subtype,patient_id,split,source\nx,a.png,Normal,,,d\nx,a.png,AOM,,,d\n");
  try {
    load_manifest(dir / "m.csv");
    FAIL() << "expected duplicate-id error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("\"x\""), std::string::npos) << e.what();
  }
}

TEST(LoadManifest, MissingPathIsReported) {
  TempDir dir;
  write_file(dir / "m.csv", "id,path,subtype,patient_id,split,source\na,missing.png,Normal,,,d\n");
  EXPECT_THROW(load_manifest(dir / "m.csv"), Error);
  EXPECT_NO_THROW(load_manifest(dir / "m.csv", {.check_paths = false}));
}

TEST(LoadManifest, LabelColumnCrossChecked) {
  TempDir dir;
  write_file(dir / "a.png", "x");
  write_file(dir / "ok.csv", "id,path,subtype,patient_id,split,source,label\na,a.png,AOM,,,d,abnormal\n");
  write_file(dir / "bad.csv", "id,path,subtype,patient_id,split,source,label\na,a.png,AOM,,,d,normal\n");
  EXPECT_NO_THROW(load_manifest(dir / "ok.csv"));
  EXPECT_THROW(load_manifest(dir / "bad.csv"), ValidationError);
}

TEST(LoadManifest, UnknownSubtypeRejected) {
  TempDir dir;
  write_file(dir / "a.png", "x");
  write_file(dir / "m.csv", "id,path,subtype,patient_id,split,source\na,a.png,Tube,,,d\n");
  EXPECT_THROW(load_manifest(dir / "m.csv"), ValidationError);
}

TEST(LoadManifest, JsonLinesAndNameFallback) {
  TempDir dir;
  write_file(dir / "a.png", "x");
  write_file(dir / "set.jsonl",
             "{\"id\":\"a\",\"path\":\"a.png\",\"subtype\":\"Normal\",\"split\":\"train\",\"source\":\"one\"}\n"
             "{\"id\":\"b\",\"path\":\"a.png\",\"subtype\":\"AOM\",\"patient_id\":\"p1\",\"source\":\"two\"}\n");
  const auto m = load_manifest(dir / "set.jsonl");
  EXPECT_EQ(m.name(), "set");
  EXPECT_EQ(m.records()[0].split, SplitPart::train);
  EXPECT_EQ(m.records()[1].patient_id, "p1");
  EXPECT_FALSE(m.records()[1].split);
}

TEST(LoadManifest, CsvRoundTrip) {
  TempDir dir;
  write_file(dir / "img" / "a.png", "x");
  write_file(dir / "m.csv",
             "id,path,subtype,patient_id,split,source\n"
             "a,img/a.png,Normal,p1,test,d\n"
             "\"b,1\",img/a.png,COM,,train,d\n");
  const auto m = load_manifest(dir / "m.csv");
  write_manifest_csv(m, dir / "copy.csv");
  const auto again = load_manifest(dir / "copy.csv");
  ASSERT_EQ(again.size(), 2u);
  EXPECT_EQ(again.records()[1].id, "b,1");
  EXPECT_EQ(again.records()[0].patient_id, "p1");
  EXPECT_EQ(again.records()[0].path, m.records()[0].path);
}

TEST(StratifiedHoldout, TenAndTen) {
  const auto m = otobias::test::make_balanced_manifest(10, 10);
  const auto s = stratified_holdout(m, 0.2, 7);
  EXPECT_EQ(test_count(s, m, Label::normal), 2u);
  EXPECT_EQ(test_count(s, m, Label::abnormal), 2u);
  EXPECT_EQ(s.count(SplitPart::train), 16u);
  EXPECT_EQ(s.seed(), 7u);
  EXPECT_EQ(s.method(), SplitMethod::stratified_holdout);
  EXPECT_EQ(s, stratified_holdout(m, 0.2, 7));
}

TEST(StratifiedHoldout, BalancedPairShape) {
  const auto m = otobias::test::make_balanced_manifest(179, 179);
  const auto s = stratified_holdout(m, 0.2, 1);
  // round(0.2 * 179) = 36 per class
  EXPECT_EQ(test_count(s, m, Label::normal), 36u);
  EXPECT_EQ(test_count(s, m, Label::abnormal), 36u);
}

TEST(StratifiedHoldout, SeedsDiffer) {
  const auto m = otobias::test::make_balanced_manifest(50, 50);
  EXPECT_NE(stratified_holdout(m, 0.3, 1).parts(), stratified_holdout(m, 0.3, 2).parts());
}

TEST(StratifiedHoldout, RejectsBadFraction) {
  const auto m = otobias::test::make_balanced_manifest(5, 5);
  EXPECT_THROW(stratified_holdout(m, 0.0, 1), ValidationError);
  EXPECT_THROW(stratified_holdout(m, 1.0, 1), ValidationError);
}

TEST(StratifiedHoldout, ClassRatiosWithinOneProperty) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t a = 2 + rng.below(60), b = 2 + rng.below(60);
    const double f = 0.05 + 0.9 * rng.uniform();
    const auto m = otobias::test::make_balanced_manifest(a, b);
    const auto s = stratified_holdout(m, f, trial);
    ASSERT_EQ(s.parts().size(), a + b);
    EXPECT_LE(std::fabs(static_cast<double>(test_count(s, m, Label::normal)) - f * a), 1.0);
    EXPECT_LE(std::fabs(static_cast<double>(test_count(s, m, Label::abnormal)) - f * b), 1.0);
    const double total = std::llround(f * (a + b));
    EXPECT_EQ(static_cast<double>(s.count(SplitPart::test)), total);
  }
}

TEST(LargestRemainder, HitsGlobalTarget) {
  const std::vector<std::size_t> sizes = {3, 3, 3};
  // 0.5 * 3 = 1.5 each, floors 1,1,1, target round(4.5) -> 5 (half away from zero)
  const auto got = largest_remainder(sizes, 0.5);
  EXPECT_EQ(got, (std::vector<std::size_t>{2, 2, 1}));
}

TEST(StratifiedKfold, TenRecordsFiveFolds) {
  const auto m = otobias::test::make_balanced_manifest(5, 5);
  const auto folds = stratified_kfold(m, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    EXPECT_EQ(test_count(f, m, Label::normal), 1u);
    EXPECT_EQ(test_count(f, m, Label::abnormal), 1u);
  }
}

TEST(StratifiedKfold, SevenRecordClass) {
  const auto m = otobias::test::make_balanced_manifest(7, 5);
  const auto folds = stratified_kfold(m, 5, 11);
  std::size_t sum = 0;
  for (const auto& f : folds) {
    const auto n = test_count(f, m, Label::normal);
    EXPECT_TRUE(n == 1 || n == 2) << n;
    sum += n;
  }
  EXPECT_EQ(sum, 7u);
}

TEST(StratifiedKfold, HeldOutPartsPartition) {
  const auto m = otobias::test::make_balanced_manifest(23, 17);
  const auto folds = stratified_kfold(m, 4, 5);
  std::multiset<std::string> held;
  for (const auto& f : folds) {
    for (const auto& id : f.ids_in(SplitPart::test)) held.insert(id);
    f.check_covers(m);
  }
  EXPECT_EQ(held.size(), m.size());
  for (const auto& r : m.records()) EXPECT_EQ(held.count(r.id), 1u);
}

TEST(StratifiedKfold, KLargerThanRecords) {
  const auto m = otobias::test::make_balanced_manifest(2, 2);
  EXPECT_THROW(stratified_kfold(m, 0, 1), ValidationError);
  EXPECT_THROW(stratified_kfold(m, 5, 1), ValidationError);
}

TEST(PatientGrouped, ThreePatients) {
  const auto m = with_patients({{"p1", Subtype::Normal}, {"p1", Subtype::Normal}, {"p2", Subtype::AOM},
                                {"p2", Subtype::AOM}, {"p3", Subtype::COM}, {"p3", Subtype::Normal}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = patient_grouped_split(m, 0.34, seed);
    EXPECT_EQ(s.count(SplitPart::test), 2u);
  }
}

TEST(PatientGrouped, MixedLabelPatientStaysTogether) {
  const auto m = with_patients({{"p1", Subtype::Normal}, {"p1", Subtype::Effusion}, {"p2", Subtype::AOM},
                                {"p3", Subtype::Normal}});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = patient_grouped_split(m, 0.5, seed);
    EXPECT_EQ(s.part("img0"), s.part("img1"));
  }
}

TEST(PatientGrouped, MissingPatientIdsListed) {
  const auto m = with_patients({{"p1", Subtype::Normal}, {"", Subtype::AOM}, {"", Subtype::COM}});
  try {
    patient_grouped_split(m, 0.3, 1);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("img1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("img2"), std::string::npos) << msg;
  }
}

TEST(PatientGrouped, NeverSplitsAPatientProperty) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<std::string, Subtype>> rows;
    const std::size_t n = 5 + rng.below(80);
    const std::size_t patients = 1 + rng.below(n);
    for (std::size_t i = 0; i < n; ++i) {
      rows.emplace_back("p" + std::to_string(rng.below(patients)), kAllSubtypes[rng.below(7)]);
    }
    const auto m = with_patients(rows);
    const double f = 0.1 + 0.8 * rng.uniform();
    const auto s = patient_grouped_split(m, f, trial);
    std::map<std::string, std::set<SplitPart>> seen;
    std::map<std::string, std::size_t> sizes;
    for (const auto& r : m.records()) {
      seen[*r.patient_id].insert(*s.part(r.id));
      ++sizes[*r.patient_id];
    }
    std::size_t largest = 0;
    for (const auto& [p, parts] : seen) {
      EXPECT_EQ(parts.size(), 1u) << p;
      largest = std::max(largest, sizes[p]);
    }
    EXPECT_LE(std::fabs(static_cast<double>(s.count(SplitPart::test)) - f * n), static_cast<double>(largest));
  }
}

TEST(PredefinedSplit, UsesColumnAndRequiresIt) {
  std::vector<ImageRecord> recs(2);
  recs[0].id = "a";
  recs[0].split = SplitPart::val;
  recs[1].id = "b";
  recs[1].subtype = Subtype::AOM;
  recs[1].split = SplitPart::test;
  const DatasetManifest m("d", recs);
  const auto s = predefined_split(m);
  EXPECT_EQ(s.part("a"), SplitPart::val);
  EXPECT_EQ(s.method(), SplitMethod::predefined);
  recs[1].split.reset();
  EXPECT_THROW(predefined_split(DatasetManifest("d", recs)), ValidationError);
}

TEST(SplitIo, RoundTripWithSidecar) {
  TempDir dir;
  const auto m = otobias::test::make_balanced_manifest(6, 4);
  const auto s = stratified_holdout(m, 0.3, 99);
  write_split(s, dir / "split.csv");
  EXPECT_TRUE(fs::exists(dir / "split.json"));
  const auto back = read_split(dir / "split.csv");
  EXPECT_EQ(back, s);
}

TEST(SplitAssignment, CheckCoversDetectsGaps) {
  const auto m = otobias::test::make_balanced_manifest(2, 2);
  std::map<std::string, SplitPart> parts = {{"r000", SplitPart::train}, {"r001", SplitPart::train}, {"r002", SplitPart::test}};
  EXPECT_THROW(SplitAssignment(parts, 0, SplitMethod::predefined).check_covers(m), ValidationError);
  parts["r003"] = SplitPart::test;
  EXPECT_NO_THROW(SplitAssignment(parts, 0, SplitMethod::predefined).check_covers(m));
  parts["zzz"] = SplitPart::test;
  EXPECT_THROW(SplitAssignment(parts, 0, SplitMethod::predefined).check_covers(m), ValidationError);
}

TEST(Rng, DeterministicAndBounded) {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    (void)c;
  }
  Rng r(5);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) ++hist[r.below(7)];
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(77);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    ss += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Rng, SplitMixReferenceValue) {
  // First output of SplitMix64 seeded with 0 (published reference value).
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64(state), 0xe220a8397b1dcdafULL);
}

TEST(Csv, QuotesAndCrlf) {
  const auto t = csv::parse("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n\r\nc,\"multi\nline\"\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].fields[0], "x,1");
  EXPECT_EQ(t.rows[0].fields[1], "say \"hi\"");
  EXPECT_EQ(t.rows[1].fields[1], "multi\nline");
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_FALSE(t.column("z"));
  EXPECT_EQ(csv::escape("plain"), "plain");
  EXPECT_EQ(csv::escape("a\"b"), "\"a\"\"b\"");
}

TEST(Csv, WidthMismatchAndUnterminatedQuote) {
  EXPECT_THROW(csv::parse("a,b\n1\n"), ValidationError);
  EXPECT_THROW(csv::parse("a\n\"open\n"), ValidationError);
}
