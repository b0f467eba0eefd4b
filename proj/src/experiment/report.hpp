#pragma once

#include <filesystem>
#include <string>

#include "experiment/config.hpp"
#include "json.hpp"

namespace fiplab::experiment {

inline constexpr int kReportSchemaVersion = 1;

struct ArtifactPaths;

// Builds report.json, metrics.csv, smoothness.csv and density.csv from the
// artifacts the earlier stages left on disk.
nlohmann::json assemble_report(const ExperimentConfig& cfg, const ArtifactPaths& paths);

// Human-readable comparison of two reports, including the ASR/ACC drops of
// each report versus its own no-defense row. Schema versions must match.
std::string diff_reports(const nlohmann::json& a, const nlohmann::json& b);
std::string diff_report_files(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace fiplab::experiment
