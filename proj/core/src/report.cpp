#include "apcvfl/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "apcvfl/error.hpp"
#include "apcvfl/footprint.hpp"

#ifndef APCVFL_VERSION
#define APCVFL_VERSION "0.0.0"
#endif

namespace apcvfl {

using json = nlohmann::ordered_json;

std::string library_version() { return APCVFL_VERSION; }

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ExperimentReport make_report(MethodResult result, TransportKind transport, std::string timestamp) {
  ExperimentReport r;
  r.manifest.scenario = result.scenario;
  r.manifest.method = result.method;
  r.manifest.transport = transport;
  r.manifest.version = library_version();
  r.manifest.timestamp = std::move(timestamp);
  r.result = std::move(result);
  return r;
}

namespace {

double finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ContractError(std::string("report: non-finite ") + what);
  return v;
}

json direction_json(const DirectionStats& d) {
  return {{"frames", d.frames}, {"matrix_bytes", d.matrix_bytes},
          {"overhead_bytes", d.overhead_bytes}};
}

json ledger_json(const CommLedger& l) {
  return {{"rounds", l.rounds},
          {"gradient_frames", l.gradient_frames},
          {"matrix_bytes", l.matrix_bytes()},
          {"overhead_bytes", l.overhead_bytes()},
          {"closed_form_bytes", l.closed_form_bytes(kPassiveLastLayerParams)},
          {"active_to_passive", direction_json(l.active_to_passive)},
          {"passive_to_active", direction_json(l.passive_to_active)},
          {"evaluation", direction_json(l.evaluation)}};
}

json metric_set_json(const MetricSet& m) {
  json j;
  for (Metric k : kAllMetrics) j[to_string(k)] = finite(m.get(k), to_string(k));
  j["confusion"] = m.confusion;
  return j;
}

json seed_footprints(const MethodResult& r, const SeedResult& s) {
  json j = json::object();
  if (!needs_passive(r.method)) return j;
  j["apcvfl"] = footprint_apcvfl(s.transmitted != 0 ? s.transmitted : s.n_train,
                                 kPassiveEmbeddingDim);
  j["vfedtrans"] = footprint_vfedtrans(r.scenario.aligned_count, r.active_dim, r.passive_dim);
  if (r.method == Method::SplitNN) {
    j["splitnn"] = footprint_splitnn(s.epochs_run, s.n_train, kPassiveEmbeddingDim,
                                     r.scenario.batch_size, kPassiveLastLayerParams);
  }
  return j;
}

double mean_of(const std::vector<SeedResult>& seeds,
               const std::function<double(const SeedResult&)>& f) {
  if (seeds.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : seeds) s += f(x);
  return s / static_cast<double>(seeds.size());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  const MethodResult& r = report.result;
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["manifest"] = {{"version", report.manifest.version},
                   {"timestamp", report.manifest.timestamp},
                   {"method", to_string(report.manifest.method)},
                   {"transport", to_string(report.manifest.transport)},
                   {"seeds", report.manifest.scenario.seeds},
                   {"scenario", json::parse(report.manifest.scenario.to_json())}};
  j["evaluation"] = aligned_only(r.method) ? "holdout" : "cv";

  json metrics = json::object();
  for (Metric m : kAllMetrics) {
    const auto& s = r.summary.summary(m);
    json run_means = json::array();
    for (double v : s.run_means) run_means.push_back(finite(v, "run mean"));
    metrics[to_string(m)] = {{"mean_of_means", finite(s.mean_of_means, "mean_of_means")},
                             {"std", finite(s.std, "std")},
                             {"run_means", run_means}};
  }
  j["metrics"] = metrics;

  CommLedger total;
  json runs = json::array();
  for (const auto& s : r.seeds) {
    total += s.ledger;
    json folds = json::array();
    for (const auto& f : s.folds) folds.push_back(metric_set_json(f));
    json stages = json::object();
    for (const auto& [name, epochs] : s.stage_epochs) stages[name] = epochs;
    runs.push_back({{"seed", s.seed},
                    {"folds", folds},
                    {"ledger", ledger_json(s.ledger)},
                    {"transmitted", s.transmitted},
                    {"n_train", s.n_train},
                    {"epochs_run", s.epochs_run},
                    {"batches_per_epoch", s.batches_per_epoch},
                    {"stage_epochs", stages},
                    {"footprints", seed_footprints(r, s)}});
  }
  j["runs"] = runs;
  j["ledger"] = ledger_json(total);
  j["mean_rounds_per_run"] =
      mean_of(r.seeds, [](const SeedResult& s) { return static_cast<double>(s.ledger.rounds); });
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& report_json) {
  json j;
  try {
    j = json::parse(report_json);
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"] != kReportSchemaVersion) {
    throw ParseError("report: unsupported schema version");
  }
  try {
    const json& m = j.at("manifest");
    RunManifest out;
    out.scenario = ScenarioConfig::from_json(m.at("scenario").dump());
    out.method = parse_method(m.at("method").get<std::string>());
    out.transport = parse_transport(m.at("transport").get<std::string>());
    out.version = m.at("version").get<std::string>();
    out.timestamp = m.at("timestamp").get<std::string>();
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report manifest: ") + e.what());
  }
}

std::string metrics_csv(const ExperimentReport& report) {
  const MethodResult& r = report.result;
  const auto& sc = r.scenario;
  const std::string prefix = csv_field(sc.dataset_id) + "," + std::to_string(sc.aligned_count) +
                             "," + std::to_string(sc.active_features.size()) + "," +
                             to_string(r.method) + ",";
  std::ostringstream out;
  out << "dataset,aligned,a,method,seed,fold,metric,value,mean_of_means,std\n";
  for (const auto& s : r.seeds) {
    for (std::size_t f = 0; f < s.folds.size(); ++f) {
      for (Metric m : kAllMetrics) {
        out << prefix << s.seed << "," << f << "," << to_string(m) << ","
            << fmt(s.folds[f].get(m)) << ",,\n";
      }
    }
  }
  for (Metric m : kAllMetrics) {
    const auto& sum = r.summary.summary(m);
    out << prefix << ",," << to_string(m) << ",," << fmt(sum.mean_of_means) << ","
        << fmt(sum.std) << "\n";
  }
  return out.str();
}

std::string report_stem(const RunManifest& m) {
  std::string stem = m.scenario.dataset_id + "_n" + std::to_string(m.scenario.aligned_count) +
                     "_a" + std::to_string(m.scenario.active_features.size()) + "_" +
                     to_string(m.method);
  for (char& c : stem) {
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return stem;
}

std::filesystem::path write_report(const ExperimentReport& report,
                                   const std::filesystem::path& dir) {
  // Render both documents before touching the file system, so a failure
  // leaves no partial report behind.
  const std::string json_text = report_to_json(report);
  const std::string csv_text = metrics_csv(report);
  std::filesystem::create_directories(dir);
  const std::string stem = report_stem(report.manifest);
  write_file_atomic(dir / (stem + ".metrics.csv"), csv_text);
  const auto json_path = dir / (stem + ".json");
  write_file_atomic(json_path, json_text);
  return json_path;
}

std::string grid_csv(const std::vector<GridCell>& cells) {
  std::ostringstream out;
  out << "dataset,aligned,a,method,metric,mean_of_means,std,rounds,bytes,wire_bytes,status,error\n";
  for (const auto& c : cells) {
    const std::string prefix = csv_field(c.scenario.dataset_id) + "," +
                               std::to_string(c.scenario.aligned_count) + "," +
                               std::to_string(c.scenario.active_features.size()) + "," +
                               to_string(c.method) + ",";
    for (Metric m : kAllMetrics) {
      out << prefix << to_string(m) << ",";
      if (!c.result) {
        out << ",,,,,failed," << csv_field(c.error) << "\n";
        continue;
      }
      const auto& seeds = c.result->seeds;
      const auto& s = c.result->summary.summary(m);
      const double rounds =
          mean_of(seeds, [](const SeedResult& x) { return static_cast<double>(x.ledger.rounds); });
      const double bytes = mean_of(seeds, [](const SeedResult& x) {
        return static_cast<double>(x.ledger.closed_form_bytes(kPassiveLastLayerParams));
      });
      const double wire = mean_of(seeds, [](const SeedResult& x) {
        return static_cast<double>(x.ledger.matrix_bytes() + x.ledger.overhead_bytes());
      });
      out << fmt(s.mean_of_means) << "," << fmt(s.std) << "," << fmt(rounds) << "," << fmt(bytes)
          << "," << fmt(wire) << ",ok,\n";
    }
  }
  return out.str();
}

std::string grid_summary_csv(const std::vector<GridCell>& cells) {
  // (dataset, aligned, method, metric) -> mean_of_means of every cell.
  std::map<std::tuple<std::string, std::size_t, std::string, std::string>, std::vector<double>>
      groups;
  for (const auto& c : cells) {
    if (!c.result) continue;
    for (Metric m : kAllMetrics) {
      groups[{c.scenario.dataset_id, c.scenario.aligned_count, to_string(c.method),
              to_string(m)}]
          .push_back(c.result->summary.summary(m).mean_of_means);
    }
  }
  std::ostringstream out;
  out << "dataset,aligned,method,metric,cells,mean,std\n";
  for (const auto& [key, values] : groups) {
    const auto s = summarize(values);
    out << csv_field(std::get<0>(key)) << "," << std::get<1>(key) << "," << std::get<2>(key)
        << "," << std::get<3>(key) << "," << values.size() << "," << fmt(s.mean_of_means) << ","
        << fmt(s.std) << "\n";
  }
  return out.str();
}

std::string quality_trace_csv(const QualityTrace& trace) {
  std::ostringstream out;
  const std::size_t k = trace.epochs.empty() ? 0 : trace.epochs.front().fold_metrics.size();
  out << "epoch,train_loss,mean";
  for (std::size_t f = 0; f < k; ++f) out << ",fold_" << f;
  out << "\n";
  for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
    const auto& ep = trace.epochs[e];
    double mean = 0.0;
    for (double v : ep.fold_metrics) mean += v;
    if (!ep.fold_metrics.empty()) mean /= static_cast<double>(ep.fold_metrics.size());
    out << e << "," << fmt(ep.train_loss) << "," << fmt(mean);
    for (double v : ep.fold_metrics) out << "," << fmt(v);
    out << "\n";
  }
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw Error("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace apcvfl
