#include "apcvfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "apcvfl/error.hpp"
#include "apcvfl/rng.hpp"
#include "json.hpp"

namespace apcvfl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// FeatureMatrix
// ---------------------------------------------------------------------------

int FeatureMatrix::class_count() const {
  if (!labels || labels->empty()) return 0;
  return *std::max_element(labels->begin(), labels->end()) + 1;
}

void FeatureMatrix::validate() const {
  if (ids.size() != features.rows()) {
    throw ContractError("FeatureMatrix: " + std::to_string(ids.size()) + " ids for " +
                        std::to_string(features.rows()) + " rows");
  }
  if (feature_names.size() != features.cols()) {
    throw ContractError("FeatureMatrix: " + std::to_string(feature_names.size()) +
                        " feature names for " + std::to_string(features.cols()) + " columns");
  }
  if (labels && labels->size() != features.rows()) {
    throw ContractError("FeatureMatrix: label count does not match row count");
  }
  IdSet seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw ContractError("FeatureMatrix: duplicate id '" + id + "'");
  }
}

std::unordered_map<std::string, std::size_t> FeatureMatrix::id_index() const {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  return index;
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.features = gather_rows(features, rows);
  out.feature_names = feature_names;
  out.ids.reserve(rows.size());
  for (std::size_t r : rows) out.ids.push_back(ids[r]);
  if (labels) {
    std::vector<int> l;
    l.reserve(rows.size());
    for (std::size_t r : rows) l.push_back((*labels)[r]);
    out.labels = std::move(l);
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::rows_in(const IdSet& set) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (set.contains(ids[i])) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FeatureMatrix::rows_not_in(const IdSet& set) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!set.contains(ids[i])) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

FeatureMatrix parse_csv(std::istream& in, const std::string& id_column,
                        const std::optional<std::string>& label_column,
                        const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw ParseError(source_name + ": empty file (header row required)");
  }
  const auto header = split_csv_line(line);
  std::ptrdiff_t id_col = -1;
  std::ptrdiff_t label_col = -1;
  std::vector<std::size_t> feature_cols;
  FeatureMatrix m;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if (name == id_column) {
      id_col = static_cast<std::ptrdiff_t>(c);
    } else if (label_column && name == *label_column) {
      label_col = static_cast<std::ptrdiff_t>(c);
    } else {
      feature_cols.push_back(c);
      m.feature_names.push_back(name);
    }
  }
  if (id_col < 0) throw ParseError(source_name + ": missing id column '" + id_column + "'");
  if (label_column && label_col < 0) {
    throw ParseError(source_name + ": missing label column '" + *label_column + "'");
  }

  std::vector<float> values;
  std::vector<int> labels;
  IdSet seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    std::string id = trim(cells[static_cast<std::size_t>(id_col)]);
    if (id.empty()) throw ParseError(where + ": empty id");
    if (!seen.insert(id).second) throw ParseError(where + ": duplicate id '" + id + "'");
    m.ids.push_back(std::move(id));
    if (label_col >= 0) {
      const std::string cell = trim(cells[static_cast<std::size_t>(label_col)]);
      char* end = nullptr;
      const long v = std::strtol(cell.c_str(), &end, 10);
      if (cell.empty() || *end != '\0' || v < 0) {
        throw ParseError(where + ", column '" + *label_column + "': invalid label '" + cell +
                         "'");
      }
      labels.push_back(static_cast<int>(v));
    }
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const std::string cell = trim(cells[feature_cols[k]]);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0' || !std::isfinite(v)) {
        throw ParseError(where + ", column '" + m.feature_names[k] + "': non-numeric or missing "
                         "value '" + cell + "'");
      }
      values.push_back(static_cast<float>(v));
    }
  }
  if (m.ids.empty()) throw ParseError(source_name + ": no data rows");
  m.features = Tensor2D(m.ids.size(), feature_cols.size(), std::move(values));
  if (label_col >= 0) m.labels = std::move(labels);
  return m;
}

FeatureMatrix load_csv(const std::filesystem::path& path, const std::string& id_column,
                       const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  return parse_csv(in, id_column, label_column, path.string());
}

void write_csv(std::ostream& out, const FeatureMatrix& m) {
  out << "id";
  if (m.labels) out << ",label";
  for (const auto& n : m.feature_names) out << ',' << n;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.ids[r];
    if (m.labels) out << ',' << (*m.labels)[r];
    for (float v : m.features.row(r)) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      out << ',' << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Standardisation
// ---------------------------------------------------------------------------

ColumnStats fit_column_stats(const Tensor2D& train) {
  if (train.rows() == 0) throw ContractError("standardize: empty training partition");
  ColumnStats s;
  s.mean.assign(train.cols(), 0.0);
  s.stddev.assign(train.cols(), 0.0);
  const double n = static_cast<double>(train.rows());
  for (std::size_t r = 0; r < train.rows(); ++r) {
    for (std::size_t c = 0; c < train.cols(); ++c) s.mean[c] += train(r, c);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t r = 0; r < train.rows(); ++r) {
    for (std::size_t c = 0; c < train.cols(); ++c) {
      const double d = train(r, c) - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  for (double& v : s.stddev) v = std::sqrt(v / n);
  return s;
}

Tensor2D apply_column_stats(const ColumnStats& stats, const Tensor2D& x) {
  if (x.cols() != stats.mean.size()) {
    throw ContractError("standardize: column count does not match fitted statistics");
  }
  Tensor2D out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double sd = stats.stddev[c];
      out(r, c) = sd > 0.0 ? static_cast<float>((x(r, c) - stats.mean[c]) / sd) : 0.0F;
    }
  }
  return out;
}

StandardizeResult standardize(const FeatureMatrix& train,
                              const std::vector<FeatureMatrix>& others) {
  StandardizeResult r;
  r.stats = fit_column_stats(train.features);
  r.train = train;
  r.train.features = apply_column_stats(r.stats, train.features);
  for (const auto& o : others) {
    FeatureMatrix copy = o;
    copy.features = apply_column_stats(r.stats, o.features);
    r.others.push_back(std::move(copy));
  }
  return r;
}

// ---------------------------------------------------------------------------
// ScenarioConfig
// ---------------------------------------------------------------------------

namespace {

std::string loss_name(LossKind k) { return k == LossKind::Mse ? "mse" : "mae"; }

LossKind parse_loss(const std::string& s) {
  if (s == "mse" || s == "MSE") return LossKind::Mse;
  if (s == "mae" || s == "MAE") return LossKind::Mae;
  throw ConfigError("unknown distillation loss '" + s + "' (expected mse|mae)");
}

json scenario_to_json(const ScenarioConfig& c) {
  return json{
      {"dataset_id", c.dataset_id},
      {"csv_path", c.csv_path},
      {"id_column", c.id_column},
      {"label_column", c.label_column},
      {"active_features", c.active_features},
      {"aligned_count", c.aligned_count},
      {"active_rows", c.active_rows},
      {"val_fraction", c.val_fraction},
      {"test_count", c.test_count},
      {"lambda", c.lambda},
      {"distill_loss", loss_name(c.distill_loss)},
      {"batch_size", c.batch_size},
      {"classifier_batch_size", c.classifier_batch_size},
      {"classifier_epochs", c.classifier_epochs},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"cv_folds", c.cv_folds},
      {"seeds", c.seeds},
      {"partition_seed", c.partition_seed},
  };
}

// Reads every known key present in `j` into `c`; unknown keys are rejected so
// that typos in scenario files do not silently fall back to defaults.
void merge_scenario(ScenarioConfig& c, const json& j, const std::string& context) {
  static const std::unordered_set<std::string> known = {
      "dataset_id", "csv_path", "id_column", "label_column", "active_features", "aligned_count",
      "active_rows", "val_fraction", "test_count", "lambda", "distill_loss", "batch_size",
      "classifier_batch_size", "classifier_epochs", "max_epochs", "patience", "cv_folds",
      "seeds", "partition_seed"};
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(context + ": unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("dataset_id", c.dataset_id);
    get("csv_path", c.csv_path);
    get("id_column", c.id_column);
    get("label_column", c.label_column);
    get("active_features", c.active_features);
    get("aligned_count", c.aligned_count);
    get("active_rows", c.active_rows);
    get("val_fraction", c.val_fraction);
    get("test_count", c.test_count);
    get("lambda", c.lambda);
    if (j.contains("distill_loss")) c.distill_loss = parse_loss(j.at("distill_loss"));
    get("batch_size", c.batch_size);
    get("classifier_batch_size", c.classifier_batch_size);
    get("classifier_epochs", c.classifier_epochs);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("cv_folds", c.cv_folds);
    get("seeds", c.seeds);
    get("partition_seed", c.partition_seed);
  } catch (const json::exception& e) {
    throw ConfigError(context + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(context + ": " + e.what());
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  if (dataset_id.empty()) throw ConfigError("scenario: dataset_id is empty");
  if (active_features.empty()) throw ConfigError("scenario: no active features");
  IdSet names(active_features.begin(), active_features.end());
  if (names.size() != active_features.size()) {
    throw ConfigError("scenario: duplicate active feature name");
  }
  if (aligned_count == 0) throw ConfigError("scenario: the aligned set must be nonempty");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ConfigError("scenario: val_fraction must lie in [0, 1)");
  }
  if (!(lambda >= 0.0)) throw ConfigError("scenario: lambda must be >= 0");
  if (batch_size == 0 || classifier_batch_size == 0) {
    throw ConfigError("scenario: batch sizes must be >= 1");
  }
  if (max_epochs == 0 || patience == 0 || classifier_epochs == 0) {
    throw ConfigError("scenario: epoch limits and patience must be >= 1");
  }
  if (cv_folds < 2) throw ConfigError("scenario: cv_folds must be >= 2");
  if (seeds.empty()) throw ConfigError("scenario: at least one seed is required");
}

TrainConfig ScenarioConfig::encoder_train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.batch_size = batch_size;
  t.early_stopping = true;
  t.seed = seed;
  return t;
}

std::string ScenarioConfig::to_json() const { return scenario_to_json(*this).dump(2); }

ScenarioConfig ScenarioConfig::from_json(const std::string& text) {
  ScenarioConfig c;
  merge_scenario(c, parse_json(text, "scenario"), "scenario");
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::filesystem::path& path) {
  try {
    return from_json(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::uint64_t ScenarioConfig::hash() const { return fnv1a64(scenario_to_json(*this).dump()); }

// ---------------------------------------------------------------------------
// Vertical split
// ---------------------------------------------------------------------------

VerticalSplit vertical_split(const FeatureMatrix& data, const ScenarioConfig& cfg) {
  cfg.validate();
  data.validate();
  if (!data.labels) throw ContractError("vertical_split: dataset carries no labels");

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t c = 0; c < data.feature_names.size(); ++c) col_of[data.feature_names[c]] = c;
  std::vector<std::size_t> active_cols;
  for (const auto& name : cfg.active_features) {
    auto it = col_of.find(name);
    if (it == col_of.end()) throw ConfigError("vertical_split: unknown feature '" + name + "'");
    active_cols.push_back(it->second);
  }
  std::vector<bool> is_active(data.cols(), false);
  for (std::size_t c : active_cols) is_active[c] = true;
  std::vector<std::size_t> passive_cols;
  for (std::size_t c = 0; c < data.cols(); ++c) {
    if (!is_active[c]) passive_cols.push_back(c);
  }
  if (passive_cols.empty()) throw ConfigError("vertical_split: passive participant has no features");

  const std::size_t n = data.rows();
  const std::size_t n_active = (cfg.active_rows == 0 || cfg.active_rows >= n) ? n : cfg.active_rows;

  std::vector<std::size_t> active_rows;
  if (n_active == n) {
    active_rows.resize(n);
    std::iota(active_rows.begin(), active_rows.end(), std::size_t{0});
  } else {
    Rng rng(derive_seed(cfg.partition_seed, "active_rows"));
    active_rows = sample_without_replacement(n, n_active, rng);
    std::sort(active_rows.begin(), active_rows.end());
  }
  if (cfg.aligned_count > n_active) {
    throw ConfigError("vertical_split: aligned_count " + std::to_string(cfg.aligned_count) +
                      " exceeds the " + std::to_string(n_active) + " active rows");
  }

  VerticalSplit split;
  {
    Rng rng(derive_seed(cfg.partition_seed, "validation"));
    const auto n_val = static_cast<std::size_t>(
        std::llround(cfg.val_fraction * static_cast<double>(n_active)));
    for (std::size_t i : sample_without_replacement(n_active, n_val, rng)) {
      split.val_ids.insert(data.ids[active_rows[i]]);
    }
  }
  std::vector<std::size_t> aligned_rows;
  {
    // Prefix of one fixed permutation, so smaller aligned sets nest in larger ones.
    Rng rng(derive_seed(cfg.partition_seed, "aligned"));
    const auto perm = permutation(n_active, rng);
    for (std::size_t i = 0; i < cfg.aligned_count; ++i) aligned_rows.push_back(active_rows[perm[i]]);
    std::sort(aligned_rows.begin(), aligned_rows.end());
    for (std::size_t r : aligned_rows) {
      split.aligned_ids.insert(data.ids[r]);
      split.aligned_order.push_back(data.ids[r]);
    }
  }
  {
    std::vector<std::size_t> candidates;
    for (std::size_t r : aligned_rows) {
      if (!split.val_ids.contains(data.ids[r])) candidates.push_back(r);
    }
    if (cfg.test_count > candidates.size()) {
      throw ConfigError("vertical_split: test_count " + std::to_string(cfg.test_count) +
                        " exceeds the " + std::to_string(candidates.size()) +
                        " aligned non-validation rows");
    }
    Rng rng(derive_seed(cfg.partition_seed, "test"));
    for (std::size_t i : sample_without_replacement(candidates.size(), cfg.test_count, rng)) {
      split.test_ids.insert(data.ids[candidates[i]]);
    }
  }

  auto columns = [&](std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
    Tensor2D t(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) t(i, j) = data.features(rows[i], cols[j]);
    }
    return t;
  };

  split.active.features = columns(active_rows, active_cols);
  split.active.feature_names = cfg.active_features;
  std::vector<int> labels;
  for (std::size_t r : active_rows) {
    split.active.ids.push_back(data.ids[r]);
    labels.push_back((*data.labels)[r]);
  }
  split.active.labels = std::move(labels);

  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  split.passive.features = columns(all_rows, passive_cols);
  for (std::size_t c : passive_cols) split.passive.feature_names.push_back(data.feature_names[c]);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& id = data.ids[r];
    split.passive.ids.push_back(split.aligned_ids.contains(id) ? id : id + kPassiveOnlySuffix);
  }
  split.active.validate();
  split.passive.validate();
  return split;
}

std::vector<std::string> intersect_ids(const std::vector<std::string>& first,
                                       const std::vector<std::string>& second) {
  const IdSet other(second.begin(), second.end());
  std::vector<std::string> out;
  for (const auto& id : first) {
    if (other.contains(id)) out.push_back(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

ScenarioRegistry ScenarioRegistry::from_json(const std::string& text) {
  const json root = parse_json(text, "registry");
  if (!root.contains("datasets") || !root["datasets"].is_object()) {
    throw ConfigError("registry: missing 'datasets' object");
  }
  ScenarioRegistry reg;
  for (const auto& [id, spec] : root["datasets"].items()) {
    const std::string ctx = "registry dataset '" + id + "'";
    DatasetEntry e;
    json base = spec;
    try {
      e.aligned_counts = base.at("aligned_counts").get<std::vector<std::size_t>>();
      e.active_feature_sets =
          base.at("active_feature_sets").get<std::vector<std::vector<std::string>>>();
    } catch (const json::exception& ex) {
      throw ConfigError(ctx + ": " + ex.what());
    }
    base.erase("aligned_counts");
    base.erase("active_feature_sets");
    e.base.dataset_id = id;
    merge_scenario(e.base, base, ctx);
    if (e.aligned_counts.empty() || e.active_feature_sets.empty()) {
      throw ConfigError(ctx + ": empty aligned_counts or active_feature_sets");
    }
    reg.entries_.emplace(id, std::move(e));
  }
  return reg;
}

ScenarioRegistry ScenarioRegistry::load(const std::filesystem::path& path) {
  try {
    return from_json(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

const DatasetEntry& ScenarioRegistry::entry(const std::string& dataset_id) const {
  auto it = entries_.find(dataset_id);
  if (it == entries_.end()) throw ConfigError("unknown dataset '" + dataset_id + "'");
  return it->second;
}

std::vector<std::string> ScenarioRegistry::dataset_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : entries_) ids.push_back(id);
  return ids;
}

std::vector<ScenarioConfig> scenario_grid(const ScenarioRegistry& registry,
                                          const std::string& dataset_id) {
  const auto& e = registry.entry(dataset_id);
  std::vector<ScenarioConfig> grid;
  for (std::size_t aligned : e.aligned_counts) {
    for (const auto& features : e.active_feature_sets) {
      ScenarioConfig c = e.base;
      c.aligned_count = aligned;
      c.active_features = features;
      c.validate();
      grid.push_back(std::move(c));
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

namespace {

// Class index of a standard-normal score under equal-mass bins.
int normal_bin(double score, int classes) {
  const double u = 0.5 * std::erfc(-score / std::sqrt(2.0));
  return std::min(classes - 1, static_cast<int>(u * classes));
}

}  // namespace

FeatureMatrix synth_dataset(std::size_t n, std::size_t a_dim, std::size_t p_dim, int classes,
                            LabelRule rule, std::uint64_t seed) {
  if (n == 0) throw ContractError("synth_dataset: n must be >= 1");
  if (a_dim == 0 || p_dim == 0) throw ContractError("synth_dataset: dimensions must be >= 1");
  if (classes < 2) throw ContractError("synth_dataset: need at least two classes");
  if (rule == LabelRule::PassiveOnly && a_dim < 2) {
    throw ContractError("synth_dataset: the passive-only rule needs a_dim >= 2");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t latent = std::max<std::size_t>(2, std::min<std::size_t>(p_dim, 4));
  // Passive features: p0 tracks s0 directly, the rest are fixed random mixes.
  std::vector<double> mix(p_dim * latent);
  for (double& w : mix) w = normal(rng) / std::sqrt(static_cast<double>(latent));

  FeatureMatrix m;
  m.features = Tensor2D(n, a_dim + p_dim);
  for (std::size_t j = 0; j < a_dim; ++j) m.feature_names.push_back("a" + std::to_string(j));
  for (std::size_t j = 0; j < p_dim; ++j) m.feature_names.push_back("p" + std::to_string(j));
  std::vector<int> labels(n);
  std::vector<double> s(latent);
  for (std::size_t i = 0; i < n; ++i) {
    m.ids.push_back("s" + std::to_string(i));
    for (double& v : s) v = normal(rng);
    auto row = m.features.row(i);
    for (std::size_t j = 0; j < p_dim; ++j) {
      double v = 0.1 * normal(rng);
      if (j == 0) {
        v += s[0];
      } else {
        for (std::size_t k = 0; k < latent; ++k) v += mix[j * latent + k] * s[k];
      }
      row[a_dim + j] = static_cast<float>(v);
    }
    for (std::size_t j = 0; j < a_dim; ++j) row[j] = static_cast<float>(normal(rng));
    double score = 0.0;
    switch (rule) {
      case LabelRule::PassiveOnly: {
        const double mask = row[0] >= 0.0F ? 1.0 : -1.0;
        row[1] = static_cast<float>(s[0] * mask + 0.05 * normal(rng));
        score = s[0];
        break;
      }
      case LabelRule::ActiveOnly:
        score = row[0];
        break;
      case LabelRule::Mixed:
        score = (row[0] + s[0]) / std::sqrt(2.0);
        break;
    }
    labels[i] = normal_bin(score, classes);
  }
  m.labels = std::move(labels);
  return m;
}

}  // namespace apcvfl
