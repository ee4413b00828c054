#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "apcvfl/classifier.hpp"
#include "apcvfl/experiment.hpp"

namespace apcvfl {

inline constexpr int kReportSchemaVersion = 1;

std::string library_version();
/// Current UTC time, ISO 8601 with a trailing Z.
std::string utc_timestamp();

/// Everything needed to re-run a report: the scenario (seeds included), the
/// method and the transport.
struct RunManifest {
  ScenarioConfig scenario;
  Method method = Method::Local;
  TransportKind transport = TransportKind::InProcess;
  std::string version;
  std::string timestamp;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

struct ExperimentReport {
  RunManifest manifest;
  MethodResult result;
};

ExperimentReport make_report(MethodResult result, TransportKind transport, std::string timestamp);

/// Schema v1. Throws ContractError on a non-finite metric.
std::string report_to_json(const ExperimentReport& report);
/// Reads the manifest back from a report produced by report_to_json.
RunManifest parse_manifest(const std::string& report_json);

/// One row per (seed, fold, metric) followed by the summary rows (seed and
/// fold empty).
std::string metrics_csv(const ExperimentReport& report);

/// File stem shared by a report's JSON and CSV, e.g. "breast_n250_a5_apcvfl".
std::string report_stem(const RunManifest& m);

/// Writes `<stem>.json` and `<stem>.metrics.csv` under `dir` (created if
/// needed). Returns the JSON path.
std::filesystem::path write_report(const ExperimentReport& report,
                                   const std::filesystem::path& dir);

/// Aggregate grid table: dataset, aligned, a, method, metric, mean_of_means,
/// std, rounds, bytes, wire_bytes, status, error. rounds and bytes are means
/// per run; bytes follow the closed-form accounting.
std::string grid_csv(const std::vector<GridCell>& cells);
/// Per (dataset, aligned, method, metric): mean and population std of
/// mean_of_means across the feature-partition cells.
std::string grid_summary_csv(const std::vector<GridCell>& cells);

/// epoch, train_loss, mean, fold_0 .. fold_{k-1}.
std::string quality_trace_csv(const QualityTrace& trace);

/// Write to a temporary sibling, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace apcvfl
