#include "apcvfl/experiment.hpp"

#include <cstdlib>
#include <exception>
#include <map>
#include <thread>

#include "apcvfl/error.hpp"

namespace apcvfl {

const char* to_string(TransportKind t) noexcept {
  return t == TransportKind::Tcp ? "tcp" : "inproc";
}

TransportKind parse_transport(const std::string& name) {
  if (name == "inproc") return TransportKind::InProcess;
  if (name == "tcp") return TransportKind::Tcp;
  throw ConfigError("unknown transport '" + name + "' (expected inproc or tcp)");
}

namespace {

std::vector<std::string> ordered_subset(const std::vector<std::string>& order,
                                        const std::function<bool(const std::string&)>& keep) {
  std::vector<std::string> out;
  for (const auto& id : order) {
    if (keep(id)) out.push_back(id);
  }
  return out;
}

ClassifierFactory probe_factory(const ScenarioConfig& cfg) {
  return logistic_factory(cfg.classifier_epochs, cfg.classifier_batch_size);
}

std::vector<MetricSet> cv_on(const FeatureMatrix& m, const ScenarioConfig& cfg,
                             std::uint64_t cv_seed) {
  return cross_validate(m.features, *m.labels, cfg.cv_folds, cv_seed, probe_factory(cfg),
                        std::max(2, m.class_count()));
}

Tensor2D rows_by_id(const FeatureMatrix& m, const std::vector<std::string>& ids) {
  const auto index = m.id_index();
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(index.at(id));
  return gather_rows(m.features, rows);
}

std::vector<int> labels_by_id(const FeatureMatrix& m, const std::vector<std::string>& ids) {
  const auto index = m.id_index();
  std::vector<int> y;
  y.reserve(ids.size());
  for (const auto& id : ids) y.push_back((*m.labels)[index.at(id)]);
  return y;
}

// Final-encoder stage plus probe, shared by Ablation and ApcVfl.
void finish_with_final_encoder(SeedResult& out, const FeatureMatrix& x,
                               const AlignedRepresentations& joint, const ScenarioConfig& cfg,
                               const VerticalSplit& split, const PipelineSeeds& seeds,
                               double lambda, bool keep_models) {
  auto g3 = train_final_encoder(x, joint, split.val_ids, cfg.encoder_train_config(0),
                                {lambda, cfg.distill_loss}, seeds);
  out.stage_epochs.emplace_back("g3A", g3.trace.epochs_run);
  out.folds = cv_on(build_enhanced_dataset(g3.student, x), cfg, seeds.cv);
  if (keep_models) out.final_encoder = std::move(g3.student);
}

}  // namespace

SeedResult run_active_seed(Method method, const ScenarioConfig& cfg, const VerticalSplit& split,
                           std::uint64_t seed, Channel* channel, bool keep_models) {
  SeedResult out;
  out.seed = seed;
  const auto seeds = PipelineSeeds::from(seed);
  const IdSet holdout = aligned_only(method) ? split.test_ids : IdSet{};
  const FeatureMatrix x = standardize_local(split.active, holdout);

  if (method == Method::Local) {
    out.folds = cv_on(x, cfg, seeds.cv);
    return out;
  }
  if (method == Method::Ablation) {
    finish_with_final_encoder(out, x, {}, cfg, split, seeds, 0.0, keep_models);
    return out;
  }

  if (channel == nullptr) {
    throw ContractError(std::string("method ") + to_string(method) + " needs a channel");
  }
  MeteredChannel metered(*channel);
  ActiveSession session(metered, method, session_hash(cfg), seed);
  const auto not_held_out = [&](const std::string& id) { return !holdout.contains(id); };

  if (method == Method::SplitNN) {
    const auto train_ids = ordered_subset(split.aligned_order, [&](const std::string& id) {
      return not_held_out(id) && !split.val_ids.contains(id);
    });
    const auto val_ids = ordered_subset(split.aligned_order, [&](const std::string& id) {
      return not_held_out(id) && split.val_ids.contains(id);
    });
    const auto test_ids = ordered_subset(
        split.aligned_order, [&](const std::string& id) { return split.test_ids.contains(id); });
    auto r = run_splitnn(session, x, train_ids, val_ids, test_ids,
                         stage_train_config(cfg, seeds.split_model), seeds.split_model);
    session.close();
    out.folds = {r.test};
    out.n_train = r.n_train;
    out.epochs_run = r.trace.epochs_run;
    out.batches_per_epoch = r.batches_per_epoch;
    out.stage_epochs.emplace_back("split", r.trace.epochs_run);
    out.ledger = metered.ledger();
    return out;
  }

  // Local representation on the active side; the passive side trains its own
  // g1 concurrently after receiving Hello.
  const Autoencoder g1a =
      learn_local_representation(x, EncoderRole::LocalActive, split.val_ids, holdout,
                                 stage_train_config(cfg, seeds.local_active), seeds.local_active);
  const auto ids = ordered_subset(split.aligned_order, not_held_out);
  const AlignedRepresentations passive_reps = run_apcvfl_exchange(session, ids);
  out.transmitted = ids.size();
  const AlignedRepresentations active_reps{ids, encode(g1a, rows_by_id(x, ids))};
  auto joint = learn_joint_representation(active_reps, passive_reps, split.val_ids,
                                          stage_train_config(cfg, seeds.joint), seeds.joint);
  out.stage_epochs.emplace_back("g2A", joint.trace.epochs_run);

  if (method == Method::ApcVfl) {
    session.close();
    out.ledger = metered.ledger();
    finish_with_final_encoder(out, x, joint.joint, cfg, split, seeds, cfg.lambda, keep_models);
    return out;
  }

  // Aligned-only variant: the classifier is trained on the joint codes; the
  // test rows' passive codes are inference traffic.
  const auto test_ids = ordered_subset(
      split.aligned_order, [&](const std::string& id) { return split.test_ids.contains(id); });
  if (test_ids.empty()) throw ConfigError("apcvfl-joint needs test_count > 0");
  const Tensor2D passive_test = session.request(IdPurpose::Evaluate, test_ids);
  session.close();
  out.ledger = metered.ledger();
  const int classes = std::max(2, x.class_count());
  const auto model =
      train_logreg(joint.joint.z, labels_by_id(x, ids),
                   probe_train_config(cfg.classifier_epochs, cfg.classifier_batch_size,
                                      derive_seed(seeds.cv, "joint")),
                   classes);
  const Tensor2D test_joint =
      encode(joint.teacher, concat_cols(encode(g1a, rows_by_id(x, test_ids)), passive_test));
  out.folds = {compute_metrics(labels_by_id(x, test_ids), model.predict(test_joint), classes)};
  return out;
}

MethodResult run_active(Method method, const ScenarioConfig& cfg, const VerticalSplit& split,
                        Channel* channel, bool keep_models) {
  cfg.validate();
  MethodResult result;
  result.method = method;
  result.scenario = cfg;
  result.active_dim = split.active.cols();
  result.passive_dim = split.passive.cols();
  std::vector<std::vector<MetricSet>> runs;
  for (std::uint64_t s : cfg.seeds) {
    result.seeds.push_back(run_active_seed(method, cfg, split, s, channel, keep_models));
    runs.push_back(result.seeds.back().folds);
  }
  result.summary = aggregate_runs(std::move(runs));
  return result;
}

void run_passive(const ScenarioConfig& cfg, const VerticalSplit& split, Channel& channel) {
  PassiveParty party(split.passive, split.val_ids, split.test_ids, cfg);
  party.serve(channel);
}

MethodResult run_method_on_split(Method method, const ScenarioConfig& cfg,
                                 const VerticalSplit& split, const RunOptions& opts) {
  if (!needs_passive(method)) return run_active(method, cfg, split, nullptr, opts.keep_models);

  std::unique_ptr<Channel> active_end;
  std::unique_ptr<Channel> passive_end;
  std::unique_ptr<TcpListener> listener;
  if (opts.transport == TransportKind::InProcess) {
    std::tie(active_end, passive_end) = make_inproc_pair();
  } else {
    listener = std::make_unique<TcpListener>(opts.tcp_host, 0);
  }

  std::exception_ptr passive_error;
  std::thread passive([&] {
    try {
      if (listener) passive_end = listener->accept();
      run_passive(cfg, split, *passive_end);
    } catch (...) {
      passive_error = std::current_exception();
    }
  });

  MethodResult result;
  try {
    if (listener) active_end = tcp_connect(opts.tcp_host, listener->port());
    result = run_active(method, cfg, split, active_end.get(), opts.keep_models);
    active_end->close();
  } catch (...) {
    if (active_end) active_end->close();
    if (listener) listener->shutdown();
    passive.join();
    throw;
  }
  passive.join();
  if (passive_error) std::rethrow_exception(passive_error);
  return result;
}

MethodResult run_method(Method method, const ScenarioConfig& cfg, const FeatureMatrix& dataset,
                        const RunOptions& opts) {
  return run_method_on_split(method, cfg, vertical_split(dataset, cfg), opts);
}

std::filesystem::path resolve_data_dir(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("APCVFL_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

FeatureMatrix load_scenario_dataset(const ScenarioConfig& cfg,
                                    const std::filesystem::path& data_dir) {
  std::filesystem::path p = cfg.csv_path;
  if (p.is_relative()) p = data_dir / p;
  return load_csv(p, cfg.id_column, cfg.label_column);
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

std::vector<GridCell> run_grid(const std::vector<ScenarioConfig>& scenarios,
                               const std::vector<Method>& methods, const FeatureMatrix& dataset,
                               const RunOptions& opts, const GridProgress& progress) {
  std::vector<GridCell> cells;
  const std::size_t total = scenarios.size() * methods.size();
  // Results that do not depend on the aligned count, keyed by method and
  // active feature set.
  std::map<std::pair<Method, std::vector<std::string>>, MethodResult> cache;
  for (const auto& sc : scenarios) {
    std::optional<VerticalSplit> split;
    std::string split_error;
    try {
      split = vertical_split(dataset, sc);
    } catch (const std::exception& e) {
      split_error = e.what();
    }
    for (Method m : methods) {
      GridCell cell;
      cell.scenario = sc;
      cell.method = m;
      if (!split) {
        cell.error = split_error;
      } else {
        try {
          const bool cacheable = m == Method::Local || m == Method::Ablation;
          const auto key = std::make_pair(m, sc.active_features);
          if (auto it = cache.find(key); cacheable && it != cache.end()) {
            MethodResult r = it->second;
            r.scenario = sc;
            r.passive_dim = split->passive.cols();
            cell.result = std::move(r);
          } else {
            cell.result = run_method_on_split(m, sc, *split, opts);
            if (cacheable) cache.emplace(key, *cell.result);
          }
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      }
      cells.push_back(std::move(cell));
      if (progress) progress(cells.back(), cells.size(), total);
    }
  }
  return cells;
}

}  // namespace apcvfl
