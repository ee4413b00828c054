#include "apcvfl/participants.hpp"

#include <algorithm>
#include <utility>

#include "apcvfl/error.hpp"

namespace apcvfl {

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::Local: return "local";
    case Method::Ablation: return "ablation";
    case Method::ApcVfl: return "apcvfl";
    case Method::ApcVflJoint: return "apcvfl-joint";
    case Method::SplitNN: return "splitnn";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Local, Method::Ablation, Method::ApcVfl, Method::ApcVflJoint,
                   Method::SplitNN}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + name +
                    "' (expected local, ablation, apcvfl, apcvfl-joint or splitnn)");
}

bool needs_passive(Method m) noexcept {
  return m == Method::ApcVfl || m == Method::ApcVflJoint || m == Method::SplitNN;
}

bool aligned_only(Method m) noexcept { return m == Method::ApcVflJoint || m == Method::SplitNN; }

FeatureMatrix standardize_local(const FeatureMatrix& m, const IdSet& holdout) {
  const auto fit_rows = m.rows_not_in(holdout);
  if (fit_rows.empty()) throw ContractError("standardize: no rows left to fit statistics on");
  const ColumnStats stats = fit_column_stats(gather_rows(m.features, fit_rows));
  FeatureMatrix out = m;
  out.features = apply_column_stats(stats, m.features);
  return out;
}

TrainConfig stage_train_config(const ScenarioConfig& cfg, std::uint64_t stage_seed) {
  return cfg.encoder_train_config(derive_seed(stage_seed, "batches"));
}

Autoencoder learn_local_representation(const FeatureMatrix& standardized, EncoderRole role,
                                       const IdSet& val_ids, const IdSet& holdout,
                                       const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  for (std::size_t r = 0; r < standardized.rows(); ++r) {
    const auto& id = standardized.ids[r];
    if (holdout.contains(id)) continue;
    (val_ids.contains(id) ? val_rows : train_rows).push_back(r);
  }
  if (train_rows.empty()) {
    throw ContractError(std::string("local representation ") + to_string(role) +
                        ": no training rows");
  }
  Autoencoder ae = build_autoencoder(ArchitectureSpec::for_role(role, standardized.cols()), seed);
  TrainConfig c = cfg;
  if (val_rows.empty()) c.early_stopping = false;
  train_reconstruction(ae, gather_rows(standardized.features, train_rows),
                       gather_rows(standardized.features, val_rows), c);
  return ae;
}

std::uint64_t session_hash(const ScenarioConfig& cfg) {
  ScenarioConfig c = cfg;
  c.seeds.clear();
  return c.hash();
}

Mlp make_passive_bottom(std::size_t passive_dim, std::uint64_t model_seed) {
  const auto spec = ArchitectureSpec::for_role(EncoderRole::LocalPassive, passive_dim);
  return Mlp::make(spec.widths, Activation::Selu, Activation::Selu,
                   derive_seed(model_seed, "passive"));
}

// ---------------------------------------------------------------------------
// Passive participant
// ---------------------------------------------------------------------------

PassiveParty::PassiveParty(FeatureMatrix data, IdSet val_ids, IdSet test_ids, ScenarioConfig cfg)
    : raw_(std::move(data)),
      val_ids_(std::move(val_ids)),
      test_ids_(std::move(test_ids)),
      cfg_(std::move(cfg)),
      hash_(session_hash(cfg_)) {
  raw_.validate();
}

void PassiveParty::start_session(const Hello& h) {
  if (h.scenario_hash != hash_) {
    throw ProtocolError("scenario mismatch: peer hash " + std::to_string(h.scenario_hash) +
                        ", local hash " + std::to_string(hash_));
  }
  if (h.method > static_cast<std::uint8_t>(Method::SplitNN)) {
    throw ProtocolError("unknown method " + std::to_string(h.method));
  }
  const auto method = static_cast<Method>(h.method);
  if (!needs_passive(method)) {
    throw ProtocolError(std::string("method ") + to_string(method) +
                        " has no passive participant");
  }
  method_ = method;
  holdout_ = aligned_only(method) ? test_ids_ : IdSet{};
  x_ = standardize_local(raw_, holdout_);
  index_ = x_.id_index();
  best_bottom_.reset();
  pending_acts_.clear();

  const auto seeds = PipelineSeeds::from(h.seed);
  if (method == Method::SplitNN) {
    bottom_ = make_passive_bottom(x_.cols(), seeds.split_model);
    adam_ = AdamState(bottom_, stage_train_config(cfg_, seeds.split_model).adam);
  } else {
    local_ = learn_local_representation(x_, EncoderRole::LocalPassive, val_ids_, holdout_,
                                        stage_train_config(cfg_, seeds.local_passive),
                                        seeds.local_passive);
  }
}

std::vector<std::size_t> PassiveParty::rows_for(const IdRequest& req) const {
  std::vector<std::size_t> rows;
  rows.reserve(req.ids.size());
  std::vector<std::string> missing;
  IdSet seen;
  for (const auto& id : req.ids) {
    if (!seen.insert(id).second) throw ProtocolError("id request repeats '" + id + "'");
    auto it = index_.find(id);
    const bool usable = it != index_.end() &&
                        (req.purpose == IdPurpose::Evaluate || !holdout_.contains(id));
    if (!usable) {
      missing.push_back(id);
      continue;
    }
    rows.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string msg = "ID set mismatch: " + std::to_string(missing.size()) +
                      " requested IDs are not aligned here:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw AlignmentError(msg);
  }
  return rows;
}

void PassiveParty::handle_request(Channel& ch, const IdRequest& req) {
  const auto rows = rows_for(req);
  const Tensor2D x = gather_rows(x_.features, rows);
  Tensor2D z;
  if (*method_ == Method::SplitNN) {
    if (req.purpose == IdPurpose::Align) throw ProtocolError("split learning has no align step");
    if (req.flags & kFlagSnapshotBest) best_bottom_ = bottom_;
    if ((req.flags & kFlagRestoreBest) && best_bottom_) bottom_ = *best_bottom_;
    if (!pending_acts_.empty()) throw ProtocolError("embeddings requested before gradients");
    auto acts = forward(bottom_, x);
    z = acts.back();
    if (req.purpose == IdPurpose::Train) {
      pending_input_ = x;
      pending_acts_ = std::move(acts);
    }
  } else {
    if (req.purpose == IdPurpose::Train) throw ProtocolError("train request outside split learning");
    z = encode(local_, x);
  }
  ch.send({MsgType::Embeddings, encode_matrix(z)});
}

void PassiveParty::handle_gradients(const Tensor2D& grad) {
  if (!method_ || *method_ != Method::SplitNN || pending_acts_.empty()) {
    throw ProtocolError("unexpected gradients frame");
  }
  if (grad.rows() != pending_acts_.back().rows() || grad.cols() != pending_acts_.back().cols()) {
    throw ProtocolError("gradient shape does not match the last embeddings");
  }
  const auto back = backward(bottom_, pending_input_, pending_acts_, grad);
  adam_step(bottom_, back.params, adam_);
  pending_acts_.clear();
}

void PassiveParty::serve(Channel& ch) {
  try {
    while (auto frame = ch.receive()) {
      switch (frame->type) {
        case MsgType::Hello: {
          const Hello h = decode_hello(frame->payload);
          start_session(h);
          ch.send({MsgType::Hello, encode_hello(h)});
          break;
        }
        case MsgType::AlignedIds:
          if (!method_) throw ProtocolError("id request before hello");
          handle_request(ch, decode_id_request(frame->payload));
          break;
        case MsgType::Gradients:
          handle_gradients(decode_matrix(frame->payload));
          break;
        case MsgType::Close:
          if (method_) ++sessions_;
          method_.reset();
          pending_acts_.clear();
          break;
        case MsgType::Error:
          throw ProtocolError("active participant aborted: " + decode_text(frame->payload));
        case MsgType::Embeddings:
          throw ProtocolError("passive participant received embeddings");
      }
    }
  } catch (const std::exception& e) {
    try {
      ch.send({MsgType::Error, encode_text(e.what())});
    } catch (const std::exception&) {
      // Peer already gone; the original failure is what matters.
    }
    ch.close();
    throw;
  }
}

// ---------------------------------------------------------------------------
// Active session
// ---------------------------------------------------------------------------

ActiveSession::ActiveSession(Channel& ch, Method method, std::uint64_t scenario_hash,
                             std::uint64_t seed)
    : ch_(ch) {
  ch_.send({MsgType::Hello, encode_hello({static_cast<std::uint8_t>(method), scenario_hash, seed})});
}

Frame ActiveSession::expect(MsgType type) {
  auto frame = ch_.receive();
  if (!frame) throw TransportError("passive participant closed the connection");
  if (frame->type == MsgType::Error) {
    throw ProtocolError("passive participant: " + decode_text(frame->payload));
  }
  if (frame->type != type) {
    throw ProtocolError(std::string("expected ") + to_string(type) + ", got " +
                        to_string(frame->type));
  }
  return std::move(*frame);
}

void ActiveSession::send(const Frame& frame) {
  try {
    ch_.send(frame);
  } catch (const TransportError&) {
    // The passive side closes right after reporting a fault; prefer its
    // reason over the bare transport failure.
    if (auto pending = ch_.receive(); pending && pending->type == MsgType::Error) {
      throw ProtocolError("passive participant: " + decode_text(pending->payload));
    }
    throw;
  }
}

void ActiveSession::await_ready() {
  if (closed_) throw ContractError("session already closed");
  if (!ready_) {
    expect(MsgType::Hello);
    ready_ = true;
  }
}

Tensor2D ActiveSession::request(IdPurpose purpose, const std::vector<std::string>& ids,
                                std::uint8_t flags) {
  await_ready();
  send({MsgType::AlignedIds, encode_id_request({purpose, flags, ids})});
  Tensor2D z = decode_matrix(expect(MsgType::Embeddings).payload);
  if (z.rows() != ids.size()) {
    throw ProtocolError("requested " + std::to_string(ids.size()) + " codes, received " +
                        std::to_string(z.rows()));
  }
  return z;
}

void ActiveSession::send_gradients(const Tensor2D& grad) {
  await_ready();
  send({MsgType::Gradients, encode_matrix(grad)});
}

void ActiveSession::close() {
  if (closed_) return;
  await_ready();
  send({MsgType::Close, {}});
  closed_ = true;
}

AlignedRepresentations run_apcvfl_exchange(ActiveSession& session,
                                           const std::vector<std::string>& ids) {
  AlignedRepresentations out;
  out.ids = ids;
  out.z = session.request(IdPurpose::Align, ids);
  if (out.z.cols() != kLocalPassiveLatent) {
    throw ProtocolError("passive codes are " + std::to_string(out.z.cols()) + " wide, expected " +
                        std::to_string(kLocalPassiveLatent));
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Split learning, active side
// ---------------------------------------------------------------------------

namespace {

std::vector<int> labels_of(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back((*m.labels)[r]);
  return y;
}

std::vector<std::size_t> rows_of(const std::unordered_map<std::string, std::size_t>& index,
                                 const std::vector<std::string>& ids) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw AlignmentError("split learning: unknown active ID '" + id + "'");
    rows.push_back(it->second);
  }
  return rows;
}

Tensor2D split_cols(const Tensor2D& m, std::size_t from, std::size_t count) {
  Tensor2D out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(m.row(r).begin() + static_cast<std::ptrdiff_t>(from), count, out.row(r).begin());
  }
  return out;
}

class SplitObjective final : public Objective {
 public:
  SplitObjective(ActiveSession& session, Mlp& bottom, Mlp& head, const FeatureMatrix& active,
                 const std::vector<std::string>& train_ids,
                 const std::vector<std::string>& val_ids)
      : session_(session), bottom_(bottom), head_(head), train_ids_(train_ids), val_ids_(val_ids) {
    const auto index = active.id_index();
    const auto train_rows = rows_of(index, train_ids);
    const auto val_rows = rows_of(index, val_ids);
    x_train_ = gather_rows(active.features, train_rows);
    y_train_ = labels_of(active, train_rows);
    x_val_ = gather_rows(active.features, val_rows);
    y_val_ = labels_of(active, val_rows);
  }

  std::size_t train_rows() const override { return x_train_.rows(); }
  bool has_validation() const override { return x_val_.rows() > 0; }

  double train_batch(std::span<const std::size_t> rows,
                     std::vector<ParamGradients>& grads) override {
    std::vector<std::string> ids;
    std::vector<int> y;
    for (std::size_t r : rows) {
      ids.push_back(train_ids_[r]);
      y.push_back(y_train_[r]);
    }
    const Tensor2D zp = session_.request(IdPurpose::Train, ids, take_flags());
    const Tensor2D xa = gather_rows(x_train_, rows);
    const auto bottom_acts = forward(bottom_, xa);
    const Tensor2D h = concat_cols(bottom_acts.back(), zp);
    const auto head_acts = forward(head_, h);
    Tensor2D dlogits;
    const double loss = softmax_cross_entropy(head_acts.back(), y, &dlogits);
    auto head_back = backward(head_, h, head_acts, dlogits);
    const std::size_t a_width = bottom_.output_dim();
    session_.send_gradients(split_cols(head_back.input_grad, a_width, zp.cols()));
    auto bottom_back =
        backward(bottom_, xa, bottom_acts, split_cols(head_back.input_grad, 0, a_width));
    grads[0] = std::move(bottom_back.params);
    grads[1] = std::move(head_back.params);
    return loss;
  }

  double validation_loss() override {
    return softmax_cross_entropy(logits(x_val_, val_ids_, 0), y_val_);
  }

  Tensor2D logits(const Tensor2D& xa, const std::vector<std::string>& ids, std::uint8_t flags) {
    const Tensor2D zp = session_.request(IdPurpose::Evaluate, ids, flags | take_flags());
    return predict(head_, concat_cols(predict(bottom_, xa), zp));
  }

  void mark_improved() { flags_ |= kFlagSnapshotBest; }

 private:
  std::uint8_t take_flags() { return std::exchange(flags_, 0); }

  ActiveSession& session_;
  Mlp& bottom_;
  Mlp& head_;
  const std::vector<std::string>& train_ids_;
  const std::vector<std::string>& val_ids_;
  Tensor2D x_train_;
  std::vector<int> y_train_;
  Tensor2D x_val_;
  std::vector<int> y_val_;
  std::uint8_t flags_ = 0;
};

}  // namespace

SplitNNResult run_splitnn(ActiveSession& session, const FeatureMatrix& active,
                          const std::vector<std::string>& train_ids,
                          const std::vector<std::string>& val_ids,
                          const std::vector<std::string>& test_ids, const TrainConfig& cfg,
                          std::uint64_t model_seed) {
  if (!active.labels) throw ContractError("split learning: active data carries no labels");
  if (train_ids.empty()) throw ContractError("split learning: no training rows");
  if (test_ids.empty()) throw ContractError("split learning: no test rows");
  cfg.validate();
  const int classes = std::max(2, active.class_count());

  SplitNNResult result;
  const auto bottom_spec = ArchitectureSpec::for_role(EncoderRole::LocalActive, active.cols());
  result.active_bottom = Mlp::make(bottom_spec.widths, Activation::Selu, Activation::Selu,
                                   derive_seed(model_seed, "active"));
  const std::size_t head_widths[] = {kLocalActiveLatent + kLocalPassiveLatent, 256, kJointLatent,
                                     static_cast<std::size_t>(classes)};
  result.head = Mlp::make(head_widths, Activation::Selu, Activation::Identity,
                          derive_seed(model_seed, "head"));

  SplitObjective objective(session, result.active_bottom, result.head, active, train_ids,
                           val_ids);
  TrainConfig c = cfg;
  if (val_ids.empty()) c.early_stopping = false;
  Trainer trainer({&result.active_bottom, &result.head}, objective, c);
  bool more = true;
  while (more) {
    more = trainer.run_epoch();
    if (trainer.last_epoch_improved()) objective.mark_improved();
  }
  result.trace = trainer.finish();
  result.n_train = train_ids.size();
  result.batches_per_epoch = (train_ids.size() + c.batch_size - 1) / c.batch_size;

  const auto index = active.id_index();
  const auto test_rows = rows_of(index, test_ids);
  const std::uint8_t restore = c.early_stopping ? kFlagRestoreBest : 0;
  const Tensor2D logits =
      objective.logits(gather_rows(active.features, test_rows), test_ids, restore);
  result.test = compute_metrics(labels_of(active, test_rows), argmax_rows(logits), classes);
  return result;
}

}  // namespace apcvfl
