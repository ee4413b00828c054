// apcvfl: command-line front end for runs, grids, footprints and encoder probes.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "apcvfl/classifier.hpp"
#include "apcvfl/error.hpp"
#include "apcvfl/experiment.hpp"
#include "apcvfl/footprint.hpp"
#include "apcvfl/participants.hpp"
#include "apcvfl/report.hpp"
#include "apcvfl/representation.hpp"

namespace fs = std::filesystem;
using namespace apcvfl;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
  std::string method;
  std::string scenario;
  std::string out = "reports";
  std::vector<std::uint64_t> seeds;
  std::string transport = "inproc";
  std::string role;
  std::string listen;
  std::string connect;
  std::string data_dir;
  std::string timestamp;
  int connect_timeout_ms = 30000;
};

ScenarioConfig load_scenario(const std::string& path, const std::vector<std::uint64_t>& seeds) {
  ScenarioConfig cfg = ScenarioConfig::load(path);
  if (!seeds.empty()) cfg.seeds = seeds;
  cfg.validate();
  return cfg;
}

std::optional<std::string> opt(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

int cmd_run(const RunArgs& a) {
  Method method;
  try {
    method = parse_method(a.method);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const TransportKind transport = [&] {
    try {
      return parse_transport(a.transport);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }();
  if (!a.role.empty() && a.role != "active" && a.role != "passive") {
    throw UsageError("--role must be active or passive");
  }
  if (!a.role.empty() && transport != TransportKind::Tcp) {
    throw UsageError("--role requires --transport tcp");
  }
  if (a.role == "passive" && a.listen.empty()) throw UsageError("--role passive needs --listen");
  if (a.role == "active" && a.connect.empty() && needs_passive(method)) {
    throw UsageError("--role active needs --connect");
  }

  const ScenarioConfig cfg = load_scenario(a.scenario, a.seeds);
  const FeatureMatrix data = load_scenario_dataset(cfg, resolve_data_dir(opt(a.data_dir)));
  const VerticalSplit split = vertical_split(data, cfg);

  if (a.role == "passive") {
    const auto [host, port] = parse_endpoint(a.listen);
    TcpListener listener(host, port);
    std::cerr << "passive: listening on " << host << ":" << listener.port() << "\n";
    auto ch = listener.accept();
    run_passive(cfg, split, *ch);
    std::cerr << "passive: peer closed the connection\n";
    return 0;
  }

  MethodResult result;
  if (a.role == "active") {
    std::unique_ptr<Channel> ch;
    if (needs_passive(method)) {
      const auto [host, port] = parse_endpoint(a.connect);
      ch = tcp_connect(host, port, a.connect_timeout_ms);
    }
    result = run_active(method, cfg, split, ch.get(), false);
    if (ch) ch->close();
  } else {
    RunOptions opts;
    opts.transport = transport;
    result = run_method_on_split(method, cfg, split, opts);
  }

  const auto report =
      make_report(std::move(result), transport, a.timestamp.empty() ? utc_timestamp() : a.timestamp);
  const fs::path path = write_report(report, a.out);
  for (Metric m : kAllMetrics) {
    const auto& s = report.result.summary.summary(m);
    std::printf("%-12s %.4f +- %.4f\n", to_string(m), s.mean_of_means, s.std);
  }
  CommLedger total;
  for (const auto& s : report.result.seeds) total += s.ledger;
  std::printf("rounds %llu, matrix bytes %llu, overhead bytes %llu\n",
              static_cast<unsigned long long>(total.rounds),
              static_cast<unsigned long long>(total.matrix_bytes()),
              static_cast<unsigned long long>(total.overhead_bytes()));
  std::printf("report: %s\n", path.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

struct GridArgs {
  std::string dataset;
  std::vector<std::string> methods = {"local", "ablation", "apcvfl", "splitnn"};
  std::string registry;
  std::string out = "grid";
  std::vector<std::uint64_t> seeds;
  std::string data_dir;
  bool reports = true;
};

int cmd_grid(const GridArgs& a) {
  std::vector<Method> methods;
  for (const auto& m : a.methods) {
    try {
      methods.push_back(parse_method(m));
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }
  const fs::path data_dir = resolve_data_dir(opt(a.data_dir));
  const fs::path registry_path = a.registry.empty() ? data_dir / "registry.json" : fs::path(a.registry);
  const auto registry = ScenarioRegistry::load(registry_path);
  auto scenarios = scenario_grid(registry, a.dataset);
  if (!a.seeds.empty()) {
    for (auto& s : scenarios) s.seeds = a.seeds;
  }
  const FeatureMatrix data = load_scenario_dataset(scenarios.front(), data_dir);

  const auto cells = run_grid(scenarios, methods, data, {},
                              [](const GridCell& c, std::size_t done, std::size_t total) {
                                std::fprintf(stderr, "[%zu/%zu] n=%zu a=%zu %-12s %s\n", done,
                                             total, c.scenario.aligned_count,
                                             c.scenario.active_features.size(),
                                             to_string(c.method),
                                             c.result ? "ok" : ("FAILED: " + c.error).c_str());
                              });
  fs::create_directories(a.out);
  write_file_atomic(fs::path(a.out) / "grid.csv", grid_csv(cells));
  write_file_atomic(fs::path(a.out) / "grid_summary.csv", grid_summary_csv(cells));
  std::size_t failed = 0;
  const std::string stamp = utc_timestamp();
  for (const auto& c : cells) {
    if (!c.result) {
      ++failed;
      continue;
    }
    if (a.reports) write_report(make_report(*c.result, TransportKind::InProcess, stamp), fs::path(a.out) / "reports");
  }
  std::printf("%zu cells, %zu failed; wrote %s\n", cells.size(), failed,
              (fs::path(a.out) / "grid.csv").string().c_str());
  return failed == 0 ? 0 : kExitFailure;
}

// ---------------------------------------------------------------------------
// footprint
// ---------------------------------------------------------------------------

struct FootprintArgs {
  std::string method;
  std::optional<std::uint64_t> d_a, z_p, epochs, batch, x_t, x_d;
  std::uint64_t p_params = kPassiveLastLayerParams;
};

std::uint64_t need(const std::optional<std::uint64_t>& v, const char* flag,
                   const std::string& method) {
  if (!v) throw UsageError(method + " footprint needs " + flag);
  return *v;
}

int cmd_footprint(const FootprintArgs& a) {
  std::uint64_t bytes = 0;
  if (a.method == "apcvfl") {
    bytes = footprint_apcvfl(need(a.d_a, "--d-a", a.method),
                             a.z_p.value_or(kPassiveEmbeddingDim));
  } else if (a.method == "splitnn") {
    bytes = footprint_splitnn(need(a.epochs, "--epochs", a.method), need(a.d_a, "--d-a", a.method),
                              a.z_p.value_or(kPassiveEmbeddingDim),
                              need(a.batch, "--batch", a.method), a.p_params);
  } else if (a.method == "vfedtrans") {
    bytes = footprint_vfedtrans(need(a.d_a, "--d-a", a.method), need(a.x_t, "--x-t", a.method),
                                need(a.x_d, "--x-d", a.method));
  } else {
    throw UsageError("unknown footprint method '" + a.method +
                     "' (expected apcvfl, splitnn or vfedtrans)");
  }
  std::printf("%s\n", format_bytes(bytes).c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

struct ProbeArgs {
  std::string scenario;
  std::string encoder = "g3A";
  std::string metric = "accuracy";
  std::size_t k = 10;
  double r = 0.0;
  std::uint64_t seed = 1;
  std::string out = "probe";
  std::string data_dir;
  std::size_t epochs = 0;             // 0: scenario max_epochs
  std::size_t classifier_epochs = 0;  // 0: scenario classifier_epochs
};

int cmd_probe(const ProbeArgs& a) {
  const Metric metric = [&] {
    try {
      return parse_metric(a.metric);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }();
  const ScenarioConfig cfg = load_scenario(a.scenario, {});
  const FeatureMatrix data = load_scenario_dataset(cfg, resolve_data_dir(opt(a.data_dir)));
  const VerticalSplit split = vertical_split(data, cfg);
  const auto seeds = PipelineSeeds::from(a.seed);
  const FeatureMatrix active = standardize_local(split.active, {});

  // The probe needs labels next to the encoder's input; for the passive and
  // joint encoders that is only possible on aligned rows (a harness-side view).
  Tensor2D x;
  std::vector<int> y;
  EncoderRole role;
  std::uint64_t stage_seed;
  const auto aligned_rows = active.rows_in(split.aligned_ids);
  for (std::size_t r : (a.encoder == "g3A" || a.encoder == "g1A") ? active.rows_not_in({})
                                                                    : aligned_rows) {
    y.push_back((*active.labels)[r]);
  }
  std::vector<std::string> aligned_ids;
  for (std::size_t r : aligned_rows) aligned_ids.push_back(active.ids[r]);

  auto rows_by_id = [](const FeatureMatrix& m, const std::vector<std::string>& ids) {
    const auto index = m.id_index();
    std::vector<std::size_t> rows;
    for (const auto& id : ids) rows.push_back(index.at(id));
    return gather_rows(m.features, rows);
  };

  if (a.encoder == "g1A" || a.encoder == "g3A") {
    role = a.encoder == "g1A" ? EncoderRole::LocalActive : EncoderRole::Final;
    stage_seed = a.encoder == "g1A" ? seeds.local_active : seeds.final_encoder;
    x = active.features;
  } else if (a.encoder == "g1P") {
    role = EncoderRole::LocalPassive;
    stage_seed = seeds.local_passive;
    x = rows_by_id(standardize_local(split.passive, {}), aligned_ids);
  } else if (a.encoder == "g2A") {
    role = EncoderRole::Joint;
    stage_seed = seeds.joint;
    const FeatureMatrix passive = standardize_local(split.passive, {});
    const auto g1a = learn_local_representation(active, EncoderRole::LocalActive, split.val_ids, {},
                                                stage_train_config(cfg, seeds.local_active),
                                                seeds.local_active);
    const auto g1p = learn_local_representation(passive, EncoderRole::LocalPassive, split.val_ids,
                                                {}, stage_train_config(cfg, seeds.local_passive),
                                                seeds.local_passive);
    x = concat_cols(encode(g1a, rows_by_id(active, aligned_ids)),
                    encode(g1p, rows_by_id(passive, aligned_ids)));
  } else {
    throw UsageError("--encoder must be one of g1A, g1P, g2A, g3A");
  }

  Autoencoder ae = build_autoencoder(ArchitectureSpec::for_role(role, x.cols()), stage_seed);
  TrainConfig tc = stage_train_config(cfg, stage_seed);
  tc.early_stopping = false;
  if (a.epochs > 0) tc.max_epochs = a.epochs;
  const std::size_t clf_epochs = a.classifier_epochs > 0 ? a.classifier_epochs : cfg.classifier_epochs;
  const auto factory = logistic_factory(clf_epochs, cfg.classifier_batch_size);
  const QualityTrace trace =
      train_with_quality(ae, x, y, factory, a.k, metric, tc, seeds.cv);

  std::vector<double> on_features;
  for (const auto& ms : cross_validate(x, y, a.k, seeds.cv, factory)) {
    on_features.push_back(ms.get(metric));
  }
  const auto& on_codes = trace.epochs.back().fold_metrics;
  const bool verdict = similarity_decision(on_features, on_codes, a.r);

  fs::create_directories(a.out);
  const fs::path csv = fs::path(a.out) / (a.encoder + "_quality.csv");
  write_file_atomic(csv, quality_trace_csv(trace));
  double mx = 0.0;
  double mz = 0.0;
  for (double v : on_features) mx += v;
  for (double v : on_codes) mz += v;
  mx /= static_cast<double>(on_features.size());
  mz /= static_cast<double>(on_codes.size());
  std::printf("trace: %s (%zu epochs)\n", csv.string().c_str(), trace.epochs.size());
  std::printf("similarity %s: mean %s on features %.4f, on codes %.4f, r = %g\n",
              verdict ? "true" : "false", to_string(metric), mx, mz, a.r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical federated learning laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", library_version());

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one method on one scenario");
  run_cmd->add_option("method", run.method, "local | ablation | apcvfl | apcvfl-joint | splitnn")
      ->required();
  run_cmd->add_option("--scenario", run.scenario, "Scenario JSON file")->required();
  run_cmd->add_option("--out", run.out, "Report directory");
  run_cmd->add_option("--seeds", run.seeds, "Comma-separated run seeds")->delimiter(',');
  run_cmd->add_option("--transport", run.transport, "inproc | tcp");
  run_cmd->add_option("--role", run.role, "active | passive (separate processes over tcp)");
  run_cmd->add_option("--listen", run.listen, "host:port for the passive role");
  run_cmd->add_option("--connect", run.connect, "host:port for the active role");
  run_cmd->add_option("--connect-timeout-ms", run.connect_timeout_ms);
  run_cmd->add_option("--data-dir", run.data_dir, "Dataset directory (default $APCVFL_DATA_DIR or data)");
  run_cmd->add_option("--timestamp", run.timestamp, "Timestamp recorded in the manifest");

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("grid", "Run every scenario of a registered dataset");
  grid_cmd->add_option("dataset", grid.dataset, "Dataset id from the registry")->required();
  grid_cmd->add_option("--methods", grid.methods, "Comma-separated methods")->delimiter(',');
  grid_cmd->add_option("--registry", grid.registry, "Registry JSON (default <data-dir>/registry.json)");
  grid_cmd->add_option("--out", grid.out, "Output directory");
  grid_cmd->add_option("--seeds", grid.seeds, "Comma-separated run seeds")->delimiter(',');
  grid_cmd->add_option("--data-dir", grid.data_dir, "Dataset directory");
  grid_cmd->add_flag("!--no-reports", grid.reports, "Skip per-cell report files");

  FootprintArgs fp;
  auto* fp_cmd = app.add_subcommand("footprint", "Closed-form communication cost");
  fp_cmd->add_option("--method", fp.method, "apcvfl | splitnn | vfedtrans")->required();
  fp_cmd->add_option("--d-a", fp.d_a, "Transmitted aligned samples");
  fp_cmd->add_option("--z-p", fp.z_p, "Passive embedding width (default 256)");
  fp_cmd->add_option("--epochs", fp.epochs, "Split learning epochs");
  fp_cmd->add_option("--batch", fp.batch, "Split learning batch size");
  fp_cmd->add_option("--p-params", fp.p_params, "Passive last-layer parameters (default 33024)");
  fp_cmd->add_option("--x-t", fp.x_t, "Active feature count");
  fp_cmd->add_option("--x-d", fp.x_d, "Passive feature count");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Per-epoch representation quality of one encoder");
  probe_cmd->add_option("--scenario", probe.scenario, "Scenario JSON file")->required();
  probe_cmd->add_option("--encoder", probe.encoder, "g1A | g1P | g2A | g3A");
  probe_cmd->add_option("--metric", probe.metric, "accuracy | f1_micro | f1_macro | f1_weighted");
  probe_cmd->add_option("--k", probe.k, "Folds");
  probe_cmd->add_option("--r", probe.r, "Similarity threshold");
  probe_cmd->add_option("--seed", probe.seed, "Run seed");
  probe_cmd->add_option("--epochs", probe.epochs, "Encoder epochs (default: scenario max_epochs)");
  probe_cmd->add_option("--classifier-epochs", probe.classifier_epochs);
  probe_cmd->add_option("--out", probe.out, "Output directory");
  probe_cmd->add_option("--data-dir", probe.data_dir, "Dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*grid_cmd) return cmd_grid(grid);
    if (*fp_cmd) return cmd_footprint(fp);
    if (*probe_cmd) return cmd_probe(probe);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
