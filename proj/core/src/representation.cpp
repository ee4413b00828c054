#include "apcvfl/representation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apcvfl/error.hpp"

namespace apcvfl {

const char* to_string(EncoderRole role) noexcept {
  switch (role) {
    case EncoderRole::LocalActive: return "g1A";
    case EncoderRole::LocalPassive: return "g1P";
    case EncoderRole::Joint: return "g2A";
    case EncoderRole::Final: return "g3A";
  }
  return "?";
}

PipelineSeeds PipelineSeeds::from(std::uint64_t run_seed) noexcept {
  return {derive_seed(run_seed, "g1A"),   derive_seed(run_seed, "g1P"),
          derive_seed(run_seed, "g2A"),   derive_seed(run_seed, "g3A"),
          derive_seed(run_seed, "split"), derive_seed(run_seed, "cv")};
}

ArchitectureSpec ArchitectureSpec::for_role(EncoderRole role, std::size_t input_dim) {
  switch (role) {
    case EncoderRole::LocalActive: return {role, {input_dim, 64, kLocalActiveLatent}};
    case EncoderRole::LocalPassive: return {role, {input_dim, 128, kLocalPassiveLatent}};
    case EncoderRole::Joint:
      return {role, {kLocalActiveLatent + kLocalPassiveLatent, 256, kJointLatent}};
    case EncoderRole::Final: return {role, {input_dim, 256, kJointLatent}};
  }
  throw ConfigError("unknown encoder role");
}

Autoencoder build_autoencoder(const ArchitectureSpec& spec, std::uint64_t seed) {
  if (spec.widths.size() < 2) throw ConfigError("build_autoencoder: need at least two widths");
  if (std::find(spec.widths.begin(), spec.widths.end(), std::size_t{0}) != spec.widths.end()) {
    throw ConfigError(std::string("build_autoencoder: zero width in ") + to_string(spec.role));
  }
  std::vector<std::size_t> reversed(spec.widths.rbegin(), spec.widths.rend());
  Autoencoder ae;
  ae.encoder = Mlp::make(spec.widths, Activation::Selu, Activation::Selu,
                         derive_seed(seed, "encoder"));
  ae.decoder = Mlp::make(reversed, Activation::Selu, Activation::Identity,
                         derive_seed(seed, "decoder"));
  return ae;
}

Tensor2D encode(const Autoencoder& ae, const Tensor2D& x) { return predict(ae.encoder, x); }

void AlignedRepresentations::validate() const {
  if (ids.size() != z.rows()) {
    throw ContractError("AlignedRepresentations: " + std::to_string(ids.size()) + " ids for " +
                        std::to_string(z.rows()) + " rows");
  }
  IdSet seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw ContractError("AlignedRepresentations: duplicate id '" + id + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

namespace {

void scale_loss(LossResult& r, double factor) {
  r.value *= factor;
  const auto f = static_cast<float>(factor);
  for (float& g : r.grad.values()) g *= f;
}

}  // namespace

AutoencoderObjective::AutoencoderObjective(Autoencoder& ae, const Tensor2D& train,
                                           const Tensor2D& val)
    : ae_(ae), train_(train), val_(val) {
  if (train.cols() != ae.input_dim() || (val.rows() > 0 && val.cols() != ae.input_dim())) {
    throw ContractError("autoencoder: data width " + std::to_string(train.cols()) +
                        " != encoder input " + std::to_string(ae.input_dim()));
  }
}

AutoencoderObjective::AutoencoderObjective(Autoencoder& ae, const Tensor2D& train,
                                           const Tensor2D& val, Distillation distill)
    : AutoencoderObjective(ae, train, val) {
  if (distill.teacher == nullptr) throw ContractError("distillation: missing teacher codes");
  if (distill.teacher->cols() != ae.latent_dim()) {
    throw ContractError("distillation: teacher width " + std::to_string(distill.teacher->cols()) +
                        " != student latent " + std::to_string(ae.latent_dim()));
  }
  if (distill.train_teacher_row.size() != train.rows() ||
      distill.val_teacher_row.size() != val.rows()) {
    throw ContractError("distillation: teacher row maps do not match data");
  }
  distill_ = std::move(distill);
}

double AutoencoderObjective::loss_and_grads(const Tensor2D& x,
                                            std::span<const std::ptrdiff_t> teacher_rows,
                                            std::vector<ParamGradients>* grads) const {
  const auto enc_acts = forward(ae_.encoder, x);
  const Tensor2D& z = enc_acts.back();
  const auto dec_acts = forward(ae_.decoder, z);
  // Per-sample squared norms averaged over the batch rows: rescale the
  // element-mean losses by their width (and the aligned share for distill).
  auto recon = loss_value_and_grad(LossKind::Mse, dec_acts.back(), x);
  scale_loss(recon, static_cast<double>(x.cols()));
  double value = recon.value;

  // Aligned rows of this batch and their teacher codes.
  std::vector<std::size_t> aligned_pos;
  std::vector<std::size_t> teacher_idx;
  if (distill_ && distill_->lambda > 0.0) {
    for (std::size_t i = 0; i < teacher_rows.size(); ++i) {
      if (teacher_rows[i] >= 0) {
        aligned_pos.push_back(i);
        teacher_idx.push_back(static_cast<std::size_t>(teacher_rows[i]));
      }
    }
  }
  std::optional<LossResult> distill;
  if (!aligned_pos.empty()) {
    distill = loss_value_and_grad(distill_->loss, gather_rows(z, aligned_pos),
                                  gather_rows(*distill_->teacher, teacher_idx));
    scale_loss(*distill, static_cast<double>(z.cols() * aligned_pos.size()) /
                             static_cast<double>(x.rows()));
    value += distill_->lambda * distill->value;
  }
  if (grads == nullptr) return value;

  Tensor2D upstream;
  backward_into(ae_.decoder, z, dec_acts, recon.grad, (*grads)[1], &upstream);
  if (distill) {
    const auto lambda = static_cast<float>(distill_->lambda);
    for (std::size_t k = 0; k < aligned_pos.size(); ++k) {
      auto dst = upstream.row(aligned_pos[k]);
      auto src = distill->grad.row(k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += lambda * src[c];
    }
  }
  backward_into(ae_.encoder, x, enc_acts, upstream, (*grads)[0], nullptr);
  return value;
}

double AutoencoderObjective::train_batch(std::span<const std::size_t> rows,
                                         std::vector<ParamGradients>& grads) {
  std::vector<std::ptrdiff_t> teacher_rows;
  if (distill_) {
    teacher_rows.reserve(rows.size());
    for (std::size_t r : rows) teacher_rows.push_back(distill_->train_teacher_row[r]);
  }
  return loss_and_grads(gather_rows(train_, rows), teacher_rows, &grads);
}

double AutoencoderObjective::validation_loss() {
  if (val_.rows() == 0) return 0.0;
  std::span<const std::ptrdiff_t> teacher_rows;
  if (distill_) teacher_rows = distill_->val_teacher_row;
  return loss_and_grads(val_, teacher_rows, nullptr);
}

double AutoencoderObjective::evaluate_rows(std::span<const std::size_t> rows) const {
  std::vector<std::ptrdiff_t> teacher_rows;
  if (distill_) {
    for (std::size_t r : rows) teacher_rows.push_back(distill_->train_teacher_row[r]);
  }
  return loss_and_grads(gather_rows(train_, rows), teacher_rows, nullptr);
}

// ---------------------------------------------------------------------------
// Training entry points
// ---------------------------------------------------------------------------

TrainTrace train_reconstruction(Autoencoder& ae, const Tensor2D& train, const Tensor2D& val,
                                const TrainConfig& cfg) {
  AutoencoderObjective objective(ae, train, val);
  return apcvfl::train({&ae.encoder, &ae.decoder}, objective, cfg);
}

JointResult learn_joint_representation(const AlignedRepresentations& local_active,
                                       const AlignedRepresentations& local_passive,
                                       const IdSet& val_ids, const TrainConfig& cfg,
                                       std::uint64_t seed) {
  local_active.validate();
  local_passive.validate();
  if (local_active.z.cols() != kLocalActiveLatent || local_passive.z.cols() != kLocalPassiveLatent) {
    throw ContractError("learn_joint_representation: expected local widths " +
                        std::to_string(kLocalActiveLatent) + " and " +
                        std::to_string(kLocalPassiveLatent) + ", got " +
                        std::to_string(local_active.z.cols()) + " and " +
                        std::to_string(local_passive.z.cols()));
  }
  std::unordered_map<std::string, std::size_t> passive_row;
  for (std::size_t i = 0; i < local_passive.ids.size(); ++i) {
    passive_row.emplace(local_passive.ids[i], i);
  }
  std::vector<std::string> missing;
  std::vector<std::size_t> order;
  for (const auto& id : local_active.ids) {
    auto it = passive_row.find(id);
    if (it == passive_row.end()) {
      missing.push_back(id);
    } else {
      order.push_back(it->second);
    }
  }
  if (!missing.empty() || local_active.ids.size() != local_passive.ids.size()) {
    const IdSet active(local_active.ids.begin(), local_active.ids.end());
    for (const auto& id : local_passive.ids) {
      if (!active.contains(id)) missing.push_back(id);
    }
    std::string msg = "learn_joint_representation: ID sets differ; unmatched IDs:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw AlignmentError(msg);
  }

  const Tensor2D joined = concat_cols(local_active.z, gather_rows(local_passive.z, order));
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  for (std::size_t i = 0; i < local_active.ids.size(); ++i) {
    (val_ids.contains(local_active.ids[i]) ? val_rows : train_rows).push_back(i);
  }
  const Tensor2D train = gather_rows(joined, train_rows);
  const Tensor2D val = gather_rows(joined, val_rows);

  JointResult result;
  result.teacher =
      build_autoencoder(ArchitectureSpec::for_role(EncoderRole::Joint, joined.cols()), seed);
  TrainConfig c = cfg;
  if (val.rows() == 0) c.early_stopping = false;
  result.trace = train_reconstruction(result.teacher, train, val, c);
  result.joint.ids = local_active.ids;
  result.joint.z = encode(result.teacher, joined);
  return result;
}

DistillResult distill_final_encoder(const FeatureMatrix& active_data,
                                    const AlignedRepresentations& joint, const IdSet& val_ids,
                                    const TrainConfig& cfg, const DistillConfig& dcfg,
                                    std::uint64_t seed) {
  if (!(dcfg.lambda >= 0.0)) throw ConfigError("distill: lambda must be >= 0");
  joint.validate();
  if (joint.z.rows() > 0 && joint.z.cols() != kJointLatent) {
    throw ContractError("distill: joint codes must be " + std::to_string(kJointLatent) +
                        " wide, got " + std::to_string(joint.z.cols()));
  }
  const auto index = active_data.id_index();
  std::vector<std::string> unknown;
  for (const auto& id : joint.ids) {
    if (!index.contains(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string msg = "distill: joint IDs absent from the active data:";
    for (std::size_t i = 0; i < unknown.size() && i < 20; ++i) msg += " " + unknown[i];
    throw AlignmentError(msg);
  }

  std::vector<std::ptrdiff_t> teacher_of(active_data.rows(), -1);
  for (std::size_t k = 0; k < joint.ids.size(); ++k) {
    teacher_of[index.at(joint.ids[k])] = static_cast<std::ptrdiff_t>(k);
  }
  const auto val_rows = active_data.rows_in(val_ids);
  const auto train_rows = active_data.rows_not_in(val_ids);
  const Tensor2D train = gather_rows(active_data.features, train_rows);
  const Tensor2D val = gather_rows(active_data.features, val_rows);

  DistillResult result;
  result.student =
      build_autoencoder(ArchitectureSpec::for_role(EncoderRole::Final, active_data.cols()), seed);
  TrainConfig c = cfg;
  if (val.rows() == 0) c.early_stopping = false;

  if (dcfg.lambda == 0.0 || joint.ids.empty()) {
    result.trace = train_reconstruction(result.student, train, val, c);
    return result;
  }
  AutoencoderObjective::Distillation d;
  d.teacher = &joint.z;
  d.lambda = dcfg.lambda;
  d.loss = dcfg.loss;
  for (std::size_t r : train_rows) d.train_teacher_row.push_back(teacher_of[r]);
  for (std::size_t r : val_rows) d.val_teacher_row.push_back(teacher_of[r]);
  AutoencoderObjective objective(result.student, train, val, std::move(d));
  result.trace = apcvfl::train({&result.student.encoder, &result.student.decoder}, objective, c);
  return result;
}

FeatureMatrix build_enhanced_dataset(const Autoencoder& final_encoder,
                                     const FeatureMatrix& active_data) {
  if (!active_data.labels) {
    throw ContractError("build_enhanced_dataset: active data carries no labels");
  }
  FeatureMatrix out;
  out.ids = active_data.ids;
  out.labels = active_data.labels;
  out.features = encode(final_encoder, active_data.features);
  for (std::size_t j = 0; j < out.features.cols(); ++j) {
    out.feature_names.push_back("z" + std::to_string(j));
  }
  return out;
}

}  // namespace apcvfl
