#include "otobias/report.hpp"

#include <fstream>

#include <fmt/format.h>

#include "otobias/error.hpp"

namespace otobias {

using nlohmann::json;

void to_json(json& j, const AucResult& r) {
  j = json{{"auc", r.auc},         {"variance", r.variance}, {"ci_low", r.ci_low},
           {"ci_high", r.ci_high}, {"n_pos", r.n_pos},       {"n_neg", r.n_neg},
           {"display", format_auc(r)}};
}

void to_json(json& j, const CoefficientStat& s) {
  j = json{{"variable", s.variable}, {"beta", s.beta},       {"std_error", s.std_error}, {"odds_ratio", s.odds_ratio},
           {"ci_low", s.ci_low},     {"ci_high", s.ci_high}, {"z", s.z},                 {"p_value", s.p_value}};
}

void to_json(json& j, const LogisticModel& m) {
  json coefficients = json::object();
  for (std::size_t i = 0; i < m.names.size(); ++i) coefficients[m.names[i]] = m.coefficients[i];
  j = json{{"intercept", m.intercept},
           {"coefficients", coefficients},
           {"status", std::string(to_string(m.status))},
           {"iterations", m.iterations},
           {"deviance", m.deviance}};
}

void to_json(json& j, const LeakageStats& s) {
  j = json{{"test_with_dup_count", s.test_with_dup_count},
           {"test_with_dup_abnormal_ratio", s.test_with_dup_abnormal_ratio},
           {"test_without_dup_count", s.test_without_dup_count},
           {"test_without_dup_abnormal_ratio", s.test_without_dup_abnormal_ratio},
           {"test_set_size", s.test_set_size},
           {"leakage_fraction", s.leakage_fraction()}};
}

void to_json(json& j, const ClusterReport& r) {
  j = json{{"set_count", r.set_count},
           {"avg_size", r.avg_size},
           {"max_size", r.max_size},
           {"redundant_count", r.redundant_count},
           {"total_clustered", r.total_clustered},
           {"dataset_size", r.dataset_size},
           {"redundant_fraction", r.redundant_fraction()},
           {"leakage", r.leakage},
           {"test_ids_with_dup", r.test_ids_with_dup},
           {"sets", r.sets}};
}

void to_json(json& j, const StyleCluster& s) {
  json subtypes = json::object();
  for (const auto& [subtype, n] : s.subtype_counts) subtypes[std::string(to_string(subtype))] = n;
  j = json{{"cluster_index", s.cluster_index},
           {"size", s.size},
           {"normal", s.normal_count},
           {"abnormal", s.abnormal_count},
           {"subtypes", subtypes},
           {"majority_label", std::string(to_string(s.majority))},
           {"purity", s.purity},
           {"flagged", s.flagged}};
}

void to_json(json& j, const ProbeMatrix& m) {
  json cells = json::array();
  json rows = json::array();
  for (const auto& row : m.rows) {
    json r{{"train_source", row.train_source}, {"feature_set", std::string(to_string(row.feature_set))}};
    r["model"] = row.model ? json(*row.model) : json(nullptr);
    r["coefficients"] = row.coefficients;
    r["error"] = row.error.empty() ? json(nullptr) : json(row.error);
    rows.push_back(std::move(r));

    for (const auto& cell : row.cells) {
      json c{{"train_source", row.train_source},
             {"target", cell.target},
             {"feature_set", std::string(to_string(row.feature_set))},
             {"internal", cell.internal}};
      if (cell.result) {
        c["auc"] = cell.result->auc;
        c["ci_low"] = cell.result->ci_low;
        c["ci_high"] = cell.result->ci_high;
        c["variance"] = cell.result->variance;
        c["n_pos"] = cell.result->n_pos;
        c["n_neg"] = cell.result->n_neg;
        c["display"] = format_auc(*cell.result);
        c["error"] = nullptr;
      } else {
        for (const char* key : {"auc", "ci_low", "ci_high", "variance", "n_pos", "n_neg", "display"}) c[key] = nullptr;
        c["error"] = cell.error;
      }
      cells.push_back(std::move(c));
    }
  }
  j = json{{"feature_set", std::string(to_string(m.feature_set))}, {"sources", m.sources}, {"models", rows}, {"cells", cells}};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

}  // namespace otobias
