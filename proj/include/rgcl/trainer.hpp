/*
 * Copyright 2026 The rgcl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rgcl/augment.hpp"
#include "rgcl/dataset.hpp"
#include "rgcl/diff.hpp"
#include "rgcl/eval.hpp"
#include "rgcl/graph.hpp"
#include "rgcl/losses.hpp"
#include "rgcl/model.hpp"
#include "rgcl/types.hpp"

namespace rgcl::train {

struct Ablation {
  bool no_cons = false;  // skip the boundary clamp on random noise
  bool no_rand = false;  // all-ones noise instead of U(0,1)
  bool no_ac = false;    // drop the adversarial-contrastive view and its four terms
  bool no_adv = false;   // drop the adversarial BPR term

  bool any() const { return no_cons || no_rand || no_ac || no_adv; }
};

enum class ContrastiveScope { kBatch, kAll };

struct EvalMetric {
  enum class Kind { kRecall, kNdcg } kind = Kind::kRecall;
  Index k = 20;

  static EvalMetric parse(const std::string& text) {
    const auto at = text.find('@');
    if (at == std::string::npos) throw ConfigError("eval_metric must look like recall@20 or ndcg@20");
    EvalMetric m;
    const std::string name = text.substr(0, at);
    if (name == "recall") {
      m.kind = Kind::kRecall;
    } else if (name == "ndcg") {
      m.kind = Kind::kNdcg;
    } else {
      throw ConfigError("unknown eval metric '" + name + "'");
    }
    const auto k = data::detail::parse_number<Index>(std::string_view(text).substr(at + 1));
    if (!k || *k < 1) throw ConfigError("eval_metric cutoff must be a positive integer");
    m.k = *k;
    return m;
  }

  std::string str() const { return std::string(kind == Kind::kRecall ? "recall" : "ndcg") + "@" + std::to_string(k); }

  double pick(const eval::RankReport& r) const { return kind == Kind::kRecall ? r.recall.at(k) : r.ndcg.at(k); }
};

/// Every knob of a training run. Field names are the config-file keys.
struct TrainConfig {
  // model
  Index dim = 64;
  Index layers = 2;
  // optimization
  Index batch_size = 4096;
  double lr = 5e-3;
  double weight_decay = 0.0;
  int patience = 10;
  int max_epochs = 200;
  std::uint64_t seed = 1;
  std::string eval_metric = "recall@20";
  // objective
  double alpha = 1e-3;
  double mu = 0.1;
  double eps = 0.1;
  double tau = 0.2;
  Index boundary_candidates = 1;
  ContrastiveScope contrastive_scope = ContrastiveScope::kBatch;
  Ablation ablation;

  bool contrastive_enabled() const { return alpha > 0.0; }
  bool adversarial_enabled() const { return mu > 0.0 && !ablation.no_adv; }
  double effective_mu() const { return adversarial_enabled() ? mu : 0.0; }

  void validate() const {
    if (dim < 1) throw ConfigError("dim must be >= 1");
    if (layers < 0) throw ConfigError("layers must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0 || alpha < 0.0 || mu < 0.0) throw ConfigError("loss weights must be non-negative");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (boundary_candidates < 1) throw ConfigError("boundary_candidates must be >= 1");
    (void)EvalMetric::parse(eval_metric);
  }

  /// "lightgcn-baseline" when both auxiliary weights are zero; otherwise "rgcl" plus ablations.
  std::string label() const {
    if (alpha == 0.0 && mu == 0.0) return "lightgcn-baseline";
    std::string name = "rgcl";
    if (ablation.no_cons) name += "-no_cons";
    if (ablation.no_rand) name += "-no_rand";
    if (ablation.no_ac) name += "-no_ac";
    if (ablation.no_adv) name += "-no_adv";
    return name;
  }

  nlohmann::json to_json() const {
    return {
        {"model", {{"dim", dim}, {"layers", layers}}},
        {"train",
         {{"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"patience", patience},
          {"max_epochs", max_epochs},
          {"seed", seed},
          {"eval_metric", eval_metric}}},
        {"objective",
         {{"alpha", alpha},
          {"mu", mu},
          {"eps", eps},
          {"tau", tau},
          {"boundary_candidates", boundary_candidates},
          {"contrastive_scope", contrastive_scope == ContrastiveScope::kBatch ? "batch" : "all"}}},
        {"ablation",
         {{"no_cons", ablation.no_cons}, {"no_rand", ablation.no_rand}, {"no_ac", ablation.no_ac}, {"no_adv", ablation.no_adv}}},
    };
  }

  /// Overlays `j` onto this config. Sections and keys must be known; anything else is an error.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    for (const auto& [section, body] : j.items()) {
      if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
      for (const auto& [key, value] : body.items()) set(section, key, value);
    }
    validate();
  }

  /// Sets one key; `section` may be empty to search all sections (used by command-line overrides).
  void set(const std::string& section, const std::string& key, const nlohmann::json& value) {
    const auto where = section_of(key);
    if (!where || (!section.empty() && section != *where)) {
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
    try {
      if (key == "dim") dim = value.get<Index>();
      else if (key == "layers") layers = value.get<Index>();
      else if (key == "batch_size") batch_size = value.get<Index>();
      else if (key == "lr") lr = value.get<double>();
      else if (key == "weight_decay") weight_decay = value.get<double>();
      else if (key == "patience") patience = value.get<int>();
      else if (key == "max_epochs") max_epochs = value.get<int>();
      else if (key == "seed") seed = value.get<std::uint64_t>();
      else if (key == "eval_metric") eval_metric = value.get<std::string>();
      else if (key == "alpha") alpha = value.get<double>();
      else if (key == "mu") mu = value.get<double>();
      else if (key == "eps") eps = value.get<double>();
      else if (key == "tau") tau = value.get<double>();
      else if (key == "boundary_candidates") boundary_candidates = value.get<Index>();
      else if (key == "contrastive_scope") {
        const auto s = value.get<std::string>();
        if (s == "batch") contrastive_scope = ContrastiveScope::kBatch;
        else if (s == "all") contrastive_scope = ContrastiveScope::kAll;
        else throw ConfigError("contrastive_scope must be 'batch' or 'all'");
      }
      else if (key == "no_cons") ablation.no_cons = value.get<bool>();
      else if (key == "no_rand") ablation.no_rand = value.get<bool>();
      else if (key == "no_ac") ablation.no_ac = value.get<bool>();
      else if (key == "no_adv") ablation.no_adv = value.get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  static std::optional<std::string> section_of(const std::string& key) {
    static const std::unordered_map<std::string, std::string> kSections = {
        {"dim", "model"},           {"layers", "model"},
        {"batch_size", "train"},    {"lr", "train"},
        {"weight_decay", "train"},  {"patience", "train"},
        {"max_epochs", "train"},    {"seed", "train"},
        {"eval_metric", "train"},   {"alpha", "objective"},
        {"mu", "objective"},        {"eps", "objective"},
        {"tau", "objective"},       {"boundary_candidates", "objective"},
        {"contrastive_scope", "objective"},
        {"no_cons", "ablation"},    {"no_rand", "ablation"},
        {"no_ac", "ablation"},      {"no_adv", "ablation"},
    };
    const auto it = kSections.find(key);
    if (it == kSections.end()) return std::nullopt;
    return it->second;
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.merge_json(j);
    return c;
  }

  std::uint64_t hash() const {
    data::detail::Fnv1a h;
    h.update(to_json().dump());
    return h.digest();
  }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  Matrix m;
  Matrix v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(const Matrix& e) {
    AdamState s;
    s.m = Matrix::Zero(e.rows(), e.cols());
    s.v = Matrix::Zero(e.rows(), e.cols());
    return s;
  }
};

/// Bias-corrected Adam; weight decay is decoupled (E -= lr * wd * E before the moment step).
inline void adam_step(Matrix& e, const Matrix& grad, AdamState& state, double lr, double weight_decay) {
  if (grad.rows() != e.rows() || grad.cols() != e.cols() || state.m.rows() != e.rows() || state.m.cols() != e.cols()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  if (weight_decay > 0.0) e *= (1.0 - lr * weight_decay);
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  e.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

// ---------------------------------------------------------------------------
// Per-step perturbations
// ---------------------------------------------------------------------------

/// Everything perturbation-related for one side (users or items) of a step. All of it is held
/// constant while the loss is differentiated.
struct SidePerturbations {
  std::vector<Index> nodes;  // unified rows
  augment::BoundaryPerturbation boundary;
  augment::RandomNoise first;
  augment::RandomNoise second;
  augment::RandomNoise third;  // noise re-signed by the adversarial-contrastive step
  std::optional<augment::AdversarialContrastiveView> ac;
  Matrix shift_first;
  Matrix shift_second;
  Matrix shift_ac;
  Matrix shift_adv;

  std::unordered_map<Index, Index> position() const {
    std::unordered_map<Index, Index> pos;
    for (std::size_t k = 0; k < nodes.size(); ++k) pos.emplace(nodes[k], static_cast<Index>(k));
    return pos;
  }
};

struct StepPerturbations {
  SidePerturbations users;
  SidePerturbations items;
};

namespace detail {

inline std::vector<Index> iota_rows(Index begin, Index count) {
  std::vector<Index> v(static_cast<std::size_t>(count));
  std::iota(v.begin(), v.end(), begin);
  return v;
}

template <typename Rng>
void build_views(SidePerturbations& side, const model::LayerStack& stack, const Matrix& z, const TrainConfig& cfg,
                 Rng& rng) {
  const auto kind = cfg.ablation.no_rand ? augment::NoiseKind::kOnes : augment::NoiseKind::kUniform;
  const augment::BoundaryPerturbation* clamp = cfg.ablation.no_cons ? nullptr : &side.boundary;
  const auto n = static_cast<Index>(side.nodes.size());
  const Index dim = z.cols();
  side.first = augment::random_noise(stack, side.nodes, clamp, cfg.eps, kind, rng);
  side.second = augment::random_noise(stack, side.nodes, clamp, cfg.eps, kind, rng);
  side.shift_first = augment::mean_shift(side.first.constrained, n, dim);
  side.shift_second = augment::mean_shift(side.second.constrained, n, dim);
  if (!cfg.ablation.no_ac) {
    side.third = augment::random_noise(stack, side.nodes, clamp, cfg.eps, kind, rng);
    const Matrix partner = model::gather_rows(z, side.nodes) + side.shift_second;
    side.ac = augment::adversarial_contrastive_view(z, side.nodes, side.third, partner, side.boundary, cfg.tau);
    side.shift_ac = augment::mean_shift(side.ac->shift, n, dim);
  }
}

}  // namespace detail

/// Boundary perturbations, random views, adversarial-contrastive views and adversarial shifts
/// for the batch, computed at the current embeddings.
template <typename Rng>
StepPerturbations prepare_perturbations(const model::LayerStack& stack, const Matrix& z, const data::TrainBatch& batch,
                                        const graph::NormalizedAdjacency& adj, Index num_users, Index num_items,
                                        const TrainConfig& cfg, Rng& rng) {
  StepPerturbations p;
  const Index depth = stack.depth();
  const Index k = cfg.boundary_candidates;

  std::vector<Index> batch_user_rows(batch.users.begin(), batch.users.end());
  std::vector<Index> batch_item_rows;
  for (Index i : batch.items) batch_item_rows.push_back(num_users + i);

  // Users: own batch triples; in full scope, other users use the dual rule against batch items.
  auto own = augment::user_candidates(batch, num_users, k);
  if (cfg.contrastive_scope == ContrastiveScope::kAll) {
    p.users.nodes = detail::iota_rows(0, num_users);
    p.items.nodes = detail::iota_rows(num_users, num_items);
    std::vector<std::vector<augment::CandidatePair>> cands(static_cast<std::size_t>(num_users));
    const auto dual = augment::dual_candidates(adj, p.users.nodes, batch_item_rows, k);
    for (Index u = 0; u < num_users; ++u) cands[static_cast<std::size_t>(u)] = dual[static_cast<std::size_t>(u)];
    for (std::size_t s = 0; s < batch.users.size(); ++s) cands[static_cast<std::size_t>(batch.users[s])] = std::move(own[s]);
    p.users.boundary = augment::boundary_perturbation(z, depth, p.users.nodes, cands);
  } else {
    p.users.nodes = batch_user_rows;
    p.items.nodes = batch_item_rows;
    p.users.boundary = augment::boundary_perturbation(z, depth, p.users.nodes, own);
  }
  const auto item_cands = augment::dual_candidates(adj, p.items.nodes, batch_user_rows, k);
  p.items.boundary = augment::boundary_perturbation(z, depth, p.items.nodes, item_cands);

  for (SidePerturbations* side : {&p.users, &p.items}) {
    const auto n = static_cast<Index>(side->nodes.size());
    side->shift_adv = augment::mean_shift(side->boundary.delta, n, z.cols());
  }
  if (cfg.contrastive_enabled()) {
    detail::build_views(p.users, stack, z, cfg, rng);
    detail::build_views(p.items, stack, z, cfg, rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

struct Objective {
  losses::LossBreakdown loss;
  Matrix grad;  // dL/dE
};

/// Joint loss and its exact gradient with respect to E, treating every perturbation in `p` as
/// a constant.
inline Objective evaluate_objective(const graph::NormalizedAdjacency& adj, const Matrix& e, const data::TrainBatch& batch,
                                    Index num_users, const StepPerturbations& p, const TrainConfig& cfg) {
  diff::Tape tape;
  const diff::Var leaf = tape.leaf(e);
  diff::Var layer = leaf;
  diff::Var total = leaf;
  for (Index l = 1; l <= cfg.layers; ++l) {
    layer = tape.propagate(adj, layer);
    total = tape.add(total, layer);
  }
  const diff::Var z = tape.scale(total, 1.0 / static_cast<double>(cfg.layers + 1));

  std::vector<Index> u_rows, p_rows, n_rows;
  u_rows.reserve(batch.triples.size());
  for (const auto& t : batch.triples) {
    u_rows.push_back(t.user);
    p_rows.push_back(num_users + t.pos);
    n_rows.push_back(num_users + t.neg);
  }
  const diff::Var l_bpr = losses::bpr(tape, tape.gather_rows(z, u_rows), tape.gather_rows(z, p_rows),
                                      tape.gather_rows(z, n_rows));
  diff::Var objective = l_bpr;

  double adv_value = 0.0;
  losses::ContrastiveTerms terms{};
  const bool need_user_rows = cfg.adversarial_enabled() || cfg.contrastive_enabled();
  diff::Var zu, zi;
  if (need_user_rows) {
    zu = tape.gather_rows(z, p.users.nodes);
    zi = tape.gather_rows(z, p.items.nodes);
  }

  if (cfg.adversarial_enabled()) {
    const auto upos = p.users.position();
    const auto ipos = p.items.position();
    std::vector<Index> lu, lp, ln;
    for (const auto& t : batch.triples) {
      lu.push_back(upos.at(t.user));
      lp.push_back(ipos.at(num_users + t.pos));
      ln.push_back(ipos.at(num_users + t.neg));
    }
    const diff::Var zu_adv = tape.add(zu, tape.constant(p.users.shift_adv));
    const diff::Var zi_adv = tape.add(zi, tape.constant(p.items.shift_adv));
    const diff::Var l_adv = losses::bpr(tape, tape.gather_rows(zu_adv, lu), tape.gather_rows(zi_adv, lp),
                                        tape.gather_rows(zi_adv, ln));
    adv_value = tape.scalar(l_adv);
    objective = tape.add(objective, tape.scale(l_adv, cfg.mu));
  }

  if (cfg.contrastive_enabled()) {
    std::vector<diff::Var> parts;
    const auto side = [&](diff::Var rows, const SidePerturbations& s, std::size_t offset) {
      const diff::Var v1 = tape.add(rows, tape.constant(s.shift_first));
      const diff::Var v2 = tape.add(rows, tape.constant(s.shift_second));
      const diff::Var t12 = losses::infonce(tape, v1, v2, cfg.tau);
      terms[offset] = tape.scalar(t12);
      parts.push_back(t12);
      if (s.ac) {
        const diff::Var vac = tape.add(rows, tape.constant(s.shift_ac));
        const diff::Var t1 = losses::infonce(tape, vac, v1, cfg.tau);
        const diff::Var t2 = losses::infonce(tape, vac, v2, cfg.tau);
        terms[offset + 1] = tape.scalar(t1);
        terms[offset + 2] = tape.scalar(t2);
        parts.push_back(t1);
        parts.push_back(t2);
      }
    };
    side(zu, p.users, 0);
    side(zi, p.items, 3);
    diff::Var cl = parts.front();
    for (std::size_t k = 1; k < parts.size(); ++k) cl = tape.add(cl, parts[k]);
    objective = tape.add(objective, tape.scale(cl, cfg.alpha));
  }

  Objective out;
  out.loss = losses::joint_loss(tape.scalar(l_bpr), adv_value, terms, cfg.effective_mu(), cfg.alpha, cfg.tau);
  losses::check_finite(out.loss);
  tape.backward(objective);
  out.grad = tape.grad(leaf);
  if (!out.grad.allFinite()) throw NumericalError("non-finite gradient");
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

/// Called after perturbations are built and before the update.
using StepObserver = std::function<void(const data::TrainBatch&, const model::LayerStack&, const Matrix& z,
                                        const StepPerturbations&)>;

class Trainer {
 public:
  Trainer(const data::ImplicitDataset& ds, const graph::NormalizedAdjacency& adj, TrainConfig cfg)
      : Trainer(ds, adj, cfg, model::init_embeddings(ds.num_nodes(), cfg.dim, cfg.seed)) {}

  Trainer(const data::ImplicitDataset& ds, const graph::NormalizedAdjacency& adj, TrainConfig cfg, Matrix embeddings)
      : ds_(&ds), adj_(&adj), cfg_(std::move(cfg)), e_(std::move(embeddings)), rng_(derived_rng(cfg_.seed, 2)) {
    cfg_.validate();
    if (e_.rows() != ds.num_nodes() || e_.cols() != cfg_.dim) throw ConfigError("embedding table shape mismatch");
    adam_ = AdamState::zeros_like(e_);
  }

  /// One pass of: forward, boundary perturbations, views, losses, one Adam update.
  losses::LossBreakdown train_step(const data::TrainBatch& batch) {
    if (batch.triples.empty()) return {};
    StepPerturbations p;
    if (cfg_.contrastive_enabled() || cfg_.adversarial_enabled() || observer_) {
      const model::LayerStack stack = model::forward(*adj_, e_, cfg_.layers);
      const Matrix z = model::aggregate(stack);
      p = prepare_perturbations(stack, z, batch, *adj_, ds_->num_users, ds_->num_items, cfg_, rng_);
      if (observer_) observer_(batch, stack, z, p);
    }
    Objective obj = evaluate_objective(*adj_, e_, batch, ds_->num_users, p, cfg_);
    adam_step(e_, obj.grad, adam_, cfg_.lr, cfg_.weight_decay);
    if (!e_.allFinite()) throw NumericalError("embeddings became non-finite after the update");
    return obj.loss;
  }

  const TrainConfig& config() const { return cfg_; }
  const Matrix& embeddings() const { return e_; }
  Matrix& embeddings() { return e_; }
  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }
  std::mt19937_64& rng() { return rng_; }
  void set_observer(StepObserver observer) { observer_ = std::move(observer); }

  Matrix aggregate() const { return model::aggregate(model::forward(*adj_, e_, cfg_.layers)); }

 private:
  const data::ImplicitDataset* ds_;
  const graph::NormalizedAdjacency* adj_;
  TrainConfig cfg_;
  Matrix e_;
  AdamState adam_;
  std::mt19937_64 rng_;
  StepObserver observer_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'R', 'G', 'C', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Resumable training state.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::int64_t epoch = 0;  // epochs completed
  Matrix embeddings;
  AdamState adam;
  Matrix best_embeddings;
  std::int64_t best_epoch = 0;
  double best_metric = -1.0;
  std::int64_t stale_epochs = 0;
  std::string sampler_rng;
  std::string perturbation_rng;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint truncated");
  return v;
}
inline void write_matrix(std::ostream& out, const Matrix& m) {
  write_pod<std::int64_t>(out, m.rows());
  write_pod<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}
inline Matrix read_matrix(std::istream& in) {
  const auto rows = read_pod<std::int64_t>(in);
  const auto cols = read_pod<std::int64_t>(in);
  if (rows < 0 || cols < 0) throw DataError("checkpoint: bad matrix shape");
  Matrix m(rows, cols);
  if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())))) {
    throw DataError("checkpoint truncated");
  }
  return m;
}
inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}
template <typename Rng>
std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}
template <typename Rng>
void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw DataError("checkpoint: bad rng state");
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(out, kCheckpointVersion);
    detail::write_pod(out, c.config_hash);
    detail::write_pod(out, c.epoch);
    detail::write_matrix(out, c.embeddings);
    detail::write_matrix(out, c.adam.m);
    detail::write_matrix(out, c.adam.v);
    detail::write_pod(out, c.adam.step);
    detail::write_matrix(out, c.best_embeddings);
    detail::write_pod(out, c.best_epoch);
    detail::write_pod(out, c.best_metric);
    detail::write_pod(out, c.stale_epochs);
    detail::write_string(out, c.sampler_rng);
    detail::write_string(out, c.perturbation_rng);
    if (!out) throw DataError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || !std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  if (detail::read_pod<std::uint32_t>(in) != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  Checkpoint c;
  c.config_hash = detail::read_pod<std::uint64_t>(in);
  c.epoch = detail::read_pod<std::int64_t>(in);
  c.embeddings = detail::read_matrix(in);
  c.adam.m = detail::read_matrix(in);
  c.adam.v = detail::read_matrix(in);
  c.adam.step = detail::read_pod<std::int64_t>(in);
  c.best_embeddings = detail::read_matrix(in);
  c.best_epoch = detail::read_pod<std::int64_t>(in);
  c.best_metric = detail::read_pod<double>(in);
  c.stale_epochs = detail::read_pod<std::int64_t>(in);
  c.sampler_rng = detail::read_string(in);
  c.perturbation_rng = detail::read_string(in);
  return c;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double l_bpr = 0.0;  // summed over the epoch's batches
  double l_adv = 0.0;
  double l_cl = 0.0;
  double l_total = 0.0;
  double val_metric = 0.0;
  double train_seconds = 0.0;
  double seconds = 0.0;  // train + validation
  std::size_t skipped = 0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},        {"l_bpr", l_bpr},   {"l_adv", l_adv},     {"l_cl", l_cl},
            {"l_total", l_total},    {"val_metric", val_metric}, {"train_seconds", train_seconds},
            {"seconds", seconds},    {"skipped", skipped}};
  }
};

struct FitOptions {
  StepObserver observer;
  std::function<void(const EpochLog&)> on_epoch;
  /// Replaces validation ranking when set; receives the aggregate and 1-based epoch.
  std::function<double(const Matrix& z, int epoch)> validation_metric;
  std::optional<std::filesystem::path> checkpoint;
  bool resume = false;
};

struct FitResult {
  Matrix embeddings;  // best-validation snapshot
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_metric = -1.0;
  bool early_stopped = false;
};

inline FitResult fit(const TrainConfig& cfg, const data::ImplicitDataset& ds, const FitOptions& opts = {}) {
  cfg.validate();
  if (ds.train.empty()) throw DataError("cannot fit on an empty train split");
  const auto adj = graph::build_adjacency(ds);
  const EvalMetric metric = EvalMetric::parse(cfg.eval_metric);

  Trainer trainer(ds, adj, cfg);
  if (opts.observer) trainer.set_observer(opts.observer);
  data::EpochSampler sampler(ds, cfg.batch_size, 0);
  sampler.rng() = derived_rng(cfg.seed, 1);

  FitResult result;
  result.embeddings = trainer.embeddings();
  std::int64_t stale = 0;
  int start_epoch = 0;
  if (opts.resume && opts.checkpoint && std::filesystem::exists(*opts.checkpoint)) {
    Checkpoint c = load_checkpoint(*opts.checkpoint);
    if (c.config_hash != cfg.hash()) throw ConfigError("checkpoint was written under a different config");
    trainer.embeddings() = c.embeddings;
    trainer.adam().m = c.adam.m;
    trainer.adam().v = c.adam.v;
    trainer.adam().step = c.adam.step;
    detail::restore_rng(sampler.rng(), c.sampler_rng);
    detail::restore_rng(trainer.rng(), c.perturbation_rng);
    result.embeddings = c.best_embeddings;
    result.best_epoch = static_cast<int>(c.best_epoch);
    result.best_metric = c.best_metric;
    stale = c.stale_epochs;
    start_epoch = static_cast<int>(c.epoch);
  }

  using Clock = std::chrono::steady_clock;
  for (int epoch = start_epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
    if (stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
    EpochLog entry;
    entry.epoch = epoch;
    const auto t0 = Clock::now();
    sampler.start_epoch();
    while (!sampler.epoch_done()) {
      const data::TrainBatch batch = sampler.next_batch();
      entry.skipped += batch.skipped;
      const auto loss = trainer.train_step(batch);
      entry.l_bpr += loss.l_bpr;
      entry.l_adv += loss.l_adv;
      entry.l_cl += loss.l_cl;
      entry.l_total += loss.l_total;
    }
    const auto t1 = Clock::now();
    const Matrix z = trainer.aggregate();
    entry.val_metric = opts.validation_metric ? opts.validation_metric(z, epoch)
                                              : metric.pick(eval::evaluate(z, ds, eval::Split::kValid, std::vector<Index>{metric.k}));
    const auto t2 = Clock::now();
    entry.train_seconds = std::chrono::duration<double>(t1 - t0).count();
    entry.seconds = std::chrono::duration<double>(t2 - t0).count();

    if (entry.val_metric > result.best_metric) {
      result.best_metric = entry.val_metric;
      result.best_epoch = epoch;
      result.embeddings = trainer.embeddings();
      stale = 0;
    } else {
      ++stale;
    }
    result.log.push_back(entry);
    if (opts.on_epoch) opts.on_epoch(entry);
    if (opts.checkpoint) {
      Checkpoint c;
      c.config_hash = cfg.hash();
      c.epoch = epoch;
      c.embeddings = trainer.embeddings();
      c.adam = trainer.adam();
      c.best_embeddings = result.embeddings;
      c.best_epoch = result.best_epoch;
      c.best_metric = result.best_metric;
      c.stale_epochs = stale;
      c.sampler_rng = detail::rng_state(sampler.rng());
      c.perturbation_rng = detail::rng_state(trainer.rng());
      save_checkpoint(*opts.checkpoint, c);
    }
  }
  return result;
}

}  // namespace rgcl::train
