#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

#include "otobias/dedup.hpp"
#include "otobias/metrics.hpp"
#include "otobias/probe.hpp"

namespace otobias {

// nlohmann ADL hooks for the report types. Field names follow the report
// schemas documented in the README.
void to_json(nlohmann::json& j, const AucResult& r);
void to_json(nlohmann::json& j, const CoefficientStat& s);
void to_json(nlohmann::json& j, const LogisticModel& m);
void to_json(nlohmann::json& j, const LeakageStats& s);
void to_json(nlohmann::json& j, const ClusterReport& r);
void to_json(nlohmann::json& j, const StyleCluster& s);
void to_json(nlohmann::json& j, const ProbeMatrix& m);

// Pretty-printed (indent 2) with a trailing newline. Throws IoError.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace otobias
