#include "apcvfl/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "apcvfl/error.hpp"

namespace apcvfl {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

const char* to_string(Metric m) noexcept {
  switch (m) {
    case Metric::Accuracy: return "accuracy";
    case Metric::F1Micro: return "f1_micro";
    case Metric::F1Macro: return "f1_macro";
    case Metric::F1Weighted: return "f1_weighted";
  }
  return "?";
}

Metric parse_metric(const std::string& name) {
  for (Metric m : kAllMetrics) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown metric '" + name + "'");
}

double MetricSet::get(Metric m) const noexcept {
  switch (m) {
    case Metric::Accuracy: return accuracy;
    case Metric::F1Micro: return f1_micro;
    case Metric::F1Macro: return f1_macro;
    case Metric::F1Weighted: return f1_weighted;
  }
  return 0.0;
}

MetricSet compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                          int classes) {
  if (truth.size() != predicted.size()) {
    throw ContractError("compute_metrics: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw ContractError("compute_metrics: empty evaluation set");
  const auto nc = static_cast<std::size_t>(classes);
  MetricSet m;
  m.confusion.assign(nc, std::vector<std::size_t>(nc, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw ContractError("compute_metrics: label out of range");
    }
    ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  const double n = static_cast<double>(truth.size());
  std::size_t correct = 0;
  double macro = 0.0;
  double weighted = 0.0;
  for (std::size_t c = 0; c < nc; ++c) {
    const std::size_t tp = m.confusion[c][c];
    std::size_t support = 0;
    std::size_t predicted_c = 0;
    for (std::size_t k = 0; k < nc; ++k) {
      support += m.confusion[c][k];
      predicted_c += m.confusion[k][c];
    }
    correct += tp;
    const std::size_t denom = support + predicted_c;  // 2tp + fp + fn
    const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    macro += f1;
    weighted += f1 * static_cast<double>(support);
  }
  m.accuracy = static_cast<double>(correct) / n;
  // Pooled counts: every error is one false positive and one false negative,
  // so micro precision == micro recall == accuracy.
  m.f1_micro = m.accuracy;
  m.f1_macro = macro / static_cast<double>(nc);
  m.f1_weighted = weighted / n;
  return m;
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

namespace {

// Row-wise softmax of the logits, computed in 64-bit.
std::vector<double> softmax_rows(const Tensor2D& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      p[r * row.size() + c] = std::exp(static_cast<double>(row[c]) - mx);
      sum += p[r * row.size() + c];
    }
    for (std::size_t c = 0; c < row.size(); ++c) p[r * row.size() + c] /= sum;
  }
  return p;
}

}  // namespace

double softmax_cross_entropy(const Tensor2D& logits, std::span<const int> y, Tensor2D* grad) {
  if (logits.rows() != y.size()) throw ContractError("cross entropy: row/label count mismatch");
  if (logits.rows() == 0) throw ContractError("cross entropy: empty batch");
  const auto p = softmax_rows(logits);
  const std::size_t k = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(logits.rows());
  double loss = 0.0;
  if (grad) *grad = Tensor2D(logits.rows(), k);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (y[r] < 0 || static_cast<std::size_t>(y[r]) >= k) {
      throw ContractError("cross entropy: label " + std::to_string(y[r]) + " out of range");
    }
    const auto label = static_cast<std::size_t>(y[r]);
    loss -= std::log(std::max(p[r * k + label], 1e-300));
    if (grad) {
      for (std::size_t c = 0; c < k; ++c) {
        const double t = c == label ? 1.0 : 0.0;
        (*grad)(r, c) = static_cast<float>((p[r * k + c] - t) * inv_n);
      }
    }
  }
  return loss * inv_n;
}

std::vector<int> argmax_rows(const Tensor2D& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

namespace {

class SoftmaxObjective final : public Objective {
 public:
  SoftmaxObjective(Mlp& model, const Tensor2D& x, std::vector<int> y, const Tensor2D& val_x,
                   std::vector<int> val_y)
      : model_(model), x_(x), y_(std::move(y)), val_x_(val_x), val_y_(std::move(val_y)) {}

  std::size_t train_rows() const override { return x_.rows(); }
  bool has_validation() const override { return val_x_.rows() > 0; }

  double train_batch(std::span<const std::size_t> rows,
                     std::vector<ParamGradients>& grads) override {
    const Tensor2D xb = gather_rows(x_, rows);
    std::vector<int> yb;
    yb.reserve(rows.size());
    for (std::size_t r : rows) yb.push_back(y_[r]);
    const auto acts = forward(model_, xb);
    Tensor2D grad;
    const double loss = softmax_cross_entropy(acts.back(), yb, &grad);
    backward_into(model_, xb, acts, grad, grads[0], nullptr);
    return loss;
  }

  double validation_loss() override {
    return softmax_cross_entropy(predict(model_, val_x_), val_y_, nullptr);
  }

 private:
  Mlp& model_;
  const Tensor2D& x_;
  std::vector<int> y_;
  const Tensor2D& val_x_;
  std::vector<int> val_y_;
};

// Row order by (label, feature values); used to make fitting independent of
// the order rows are presented in.
std::vector<std::size_t> canonical_order(const Tensor2D& x, std::span<const int> y) {
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (y[a] != y[b]) return y[a] < y[b];
    auto ra = x.row(a);
    auto rb = x.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  return idx;
}

}  // namespace

Tensor2D LogisticModel::probabilities(const Tensor2D& x) const {
  const Tensor2D logits = apcvfl::predict(linear, x);
  const auto p = softmax_rows(logits);
  Tensor2D out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < p.size(); ++i) out.values()[i] = static_cast<float>(p[i]);
  return out;
}

std::vector<int> LogisticModel::predict(const Tensor2D& x) const {
  return argmax_rows(apcvfl::predict(linear, x));
}

LogisticModel train_logreg(const Tensor2D& x, std::span<const int> y, const TrainConfig& cfg,
                           int classes, const Tensor2D& val_x, std::span<const int> val_y) {
  if (x.rows() != y.size()) {
    throw ContractError("train_logreg: " + std::to_string(x.rows()) + " rows vs " +
                        std::to_string(y.size()) + " labels");
  }
  if (x.rows() == 0) throw ContractError("train_logreg: empty training set");
  if (val_x.rows() != val_y.size()) throw ContractError("train_logreg: validation size mismatch");
  const std::set<int> distinct(y.begin(), y.end());
  if (*distinct.begin() < 0) throw ContractError("train_logreg: negative label");
  if (distinct.size() < 2) {
    throw ContractError("train_logreg: training labels contain a single class");
  }
  const int inferred = *distinct.rbegin() + 1;
  if (classes == 0) classes = std::max(2, inferred);
  if (inferred > classes) throw ContractError("train_logreg: label exceeds class count");

  const auto order = canonical_order(x, y);
  const Tensor2D xs = gather_rows(x, order);
  std::vector<int> ys;
  ys.reserve(order.size());
  for (std::size_t r : order) ys.push_back(y[r]);

  const std::size_t widths[] = {x.cols(), static_cast<std::size_t>(classes)};
  LogisticModel model{
      Mlp::make(widths, Activation::Identity, Activation::Identity, derive_seed(cfg.seed, "init"))};
  SoftmaxObjective objective(model.linear, xs, std::move(ys), val_x,
                             std::vector<int>(val_y.begin(), val_y.end()));
  TrainConfig c = cfg;
  if (val_x.rows() == 0) c.early_stopping = false;
  apcvfl::train({&model.linear}, objective, c);
  return model;
}

MetricSet evaluate(const LogisticModel& model, const Tensor2D& x, std::span<const int> y) {
  if (x.rows() != y.size()) throw ContractError("evaluate: row/label count mismatch");
  const auto pred = model.predict(x);
  return compute_metrics(y, pred, model.classes());
}

TrainConfig probe_train_config(std::size_t epochs, std::size_t batch_size, std::uint64_t seed) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = batch_size;
  c.early_stopping = false;
  c.seed = seed;
  return c;
}

void LogisticClassifier::fit(const Tensor2D& x, std::span<const int> y, int classes,
                             std::uint64_t seed) {
  model_ = train_logreg(x, y, probe_train_config(epochs_, batch_size_, seed), classes);
}

std::vector<int> LogisticClassifier::predict(const Tensor2D& x) const { return model_.predict(x); }

ClassifierFactory logistic_factory(std::size_t epochs, std::size_t batch_size) {
  return [epochs, batch_size] { return std::make_unique<LogisticClassifier>(epochs, batch_size); };
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> y, std::size_t k,
                                                       std::uint64_t seed) {
  if (k == 0) throw ContractError("stratified_folds: k must be >= 1");
  if (k > y.size()) {
    throw ContractError("kfold: k = " + std::to_string(k) + " exceeds the " +
                        std::to_string(y.size()) + " rows");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [label, rows] : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t r : rows) {
      folds[next].push_back(r);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<MetricSet> cross_validate(const Tensor2D& x, std::span<const int> y, std::size_t k,
                                      std::uint64_t seed, const ClassifierFactory& factory,
                                      int classes) {
  if (x.rows() != y.size()) throw ContractError("cross_validate: row/label count mismatch");
  if (classes == 0) classes = std::max(2, *std::max_element(y.begin(), y.end()) + 1);
  const auto folds = stratified_folds(y, k, derive_seed(seed, "folds"));
  std::vector<MetricSet> out;
  out.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<bool> in_eval(x.rows(), false);
    for (std::size_t r : folds[f]) in_eval[r] = true;
    std::vector<std::size_t> train_rows;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!in_eval[r]) train_rows.push_back(r);
    }
    std::vector<int> y_train;
    std::vector<int> y_eval;
    for (std::size_t r : train_rows) y_train.push_back(y[r]);
    for (std::size_t r : folds[f]) y_eval.push_back(y[r]);
    auto clf = factory();
    clf->fit(gather_rows(x, train_rows), y_train, classes,
             derive_seed(seed, "fold/" + std::to_string(f)));
    const auto pred = clf->predict(gather_rows(x, folds[f]));
    out.push_back(compute_metrics(y_eval, pred, classes));
  }
  return out;
}

MetricSummary summarize(std::span<const double> run_means) {
  MetricSummary s;
  s.run_means.assign(run_means.begin(), run_means.end());
  if (run_means.empty()) return s;
  const double n = static_cast<double>(run_means.size());
  s.mean_of_means = std::accumulate(run_means.begin(), run_means.end(), 0.0) / n;
  double var = 0.0;
  for (double v : run_means) var += (v - s.mean_of_means) * (v - s.mean_of_means);
  s.std = std::sqrt(var / n);
  return s;
}

const MetricSummary& CvReport::summary(Metric m) const {
  return summaries.at(static_cast<std::size_t>(m));
}

CvReport aggregate_runs(std::vector<std::vector<MetricSet>> runs) {
  CvReport report;
  report.runs = std::move(runs);
  for (Metric m : kAllMetrics) {
    std::vector<double> means;
    for (const auto& folds : report.runs) {
      double sum = 0.0;
      for (const auto& ms : folds) sum += ms.get(m);
      means.push_back(folds.empty() ? 0.0 : sum / static_cast<double>(folds.size()));
    }
    report.summaries.push_back(summarize(means));
  }
  return report;
}

CvReport kfold_cv(const Tensor2D& x, std::span<const int> y, std::size_t k,
                  std::span<const std::uint64_t> seeds, const ClassifierFactory& factory) {
  std::vector<std::vector<MetricSet>> runs;
  for (std::uint64_t s : seeds) runs.push_back(cross_validate(x, y, k, s, factory));
  return aggregate_runs(std::move(runs));
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

DistillResult train_final_encoder(const FeatureMatrix& active_data,
                                  const AlignedRepresentations& joint, const IdSet& val_ids,
                                  const TrainConfig& encoder_cfg, const DistillConfig& dcfg,
                                  const PipelineSeeds& seeds) {
  TrainConfig cfg = encoder_cfg;
  cfg.seed = derive_seed(seeds.final_encoder, "batches");
  return distill_final_encoder(active_data, joint, val_ids, cfg, dcfg, seeds.final_encoder);
}

CvReport run_ablation(const FeatureMatrix& active_data, const IdSet& val_ids,
                      const AblationSettings& settings, std::span<const std::uint64_t> seeds) {
  if (!active_data.labels) throw ContractError("run_ablation: active data carries no labels");
  const auto factory = logistic_factory(settings.probe_epochs, settings.probe_batch_size);
  const int classes = std::max(2, active_data.class_count());
  std::vector<std::vector<MetricSet>> runs;
  for (std::uint64_t s : seeds) {
    const auto stage = PipelineSeeds::from(s);
    const auto g3 = train_final_encoder(active_data, {}, val_ids, settings.encoder,
                                        DistillConfig{0.0, LossKind::Mse}, stage);
    const auto enhanced = build_enhanced_dataset(g3.student, active_data);
    runs.push_back(cross_validate(enhanced.features, *enhanced.labels, settings.folds, stage.cv,
                                  factory, classes));
  }
  return aggregate_runs(std::move(runs));
}

// ---------------------------------------------------------------------------
// Encoder quality probe
// ---------------------------------------------------------------------------

QualityTrace train_with_quality(Autoencoder& ae, const Tensor2D& x, std::span<const int> y,
                                const ClassifierFactory& factory, std::size_t k, Metric metric,
                                const TrainConfig& cfg, std::uint64_t cv_seed,
                                const Tensor2D& val) {
  if (x.rows() != y.size()) throw ContractError("train_with_quality: row/label count mismatch");
  if (k > x.rows()) throw ContractError("train_with_quality: k exceeds the number of rows");
  const int classes = std::max(2, *std::max_element(y.begin(), y.end()) + 1);
  AutoencoderObjective objective(ae, x, val);
  TrainConfig c = cfg;
  if (val.rows() == 0) c.early_stopping = false;
  Trainer trainer({&ae.encoder, &ae.decoder}, objective, c);
  QualityTrace trace;
  bool more = true;
  while (more) {
    more = trainer.run_epoch();
    QualityEpoch epoch;
    epoch.train_loss = trainer.trace().train_loss.back();
    const Tensor2D z = encode(ae, x);
    for (const auto& ms : cross_validate(z, y, k, cv_seed, factory, classes)) {
      epoch.fold_metrics.push_back(ms.get(metric));
    }
    trace.epochs.push_back(std::move(epoch));
  }
  trainer.finish();
  return trace;
}

bool similarity_decision(std::span<const double> on_features, std::span<const double> on_codes,
                         double r) {
  if (on_features.empty() || on_codes.empty()) {
    throw ContractError("similarity_decision: metric lists must be nonempty");
  }
  const double a = std::accumulate(on_features.begin(), on_features.end(), 0.0) /
                   static_cast<double>(on_features.size());
  const double b = std::accumulate(on_codes.begin(), on_codes.end(), 0.0) /
                   static_cast<double>(on_codes.size());
  // Means of decimal metrics carry rounding; a gap equal to r must pass.
  return a - b <= r + 1e-12;
}

}  // namespace apcvfl
