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

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rgcl/dataset.hpp"
#include "rgcl/diff.hpp"
#include "rgcl/graph.hpp"
#include "rgcl/losses.hpp"
#include "rgcl/model.hpp"
#include "rgcl/types.hpp"

namespace rgcl::augment {

inline constexpr double kL1Floor = 1e-12;

/// A (positive, negative) counterpart pair for one anchor node, as unified row ids.
/// For a user anchor these are items (i+, i-); for an item anchor, users (u+, u-).
struct CandidatePair {
  Index pos = 0;
  Index neg = 0;
  friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

struct Margin {
  double g = 0.0;
  RowVector f;  // dg/dh^(k), identical for every layer k under mean aggregation
};

/// g = <z_a, z_pos - z_neg>, f = (z_pos - z_neg) / (L+1).
inline Margin pairwise_margin(const Matrix& z, Index num_layers, Index anchor, const CandidatePair& pair) {
  Margin m;
  const RowVector gap = z.row(pair.pos) - z.row(pair.neg);
  m.g = z.row(anchor).dot(gap);
  m.f = gap / static_cast<double>(num_layers + 1);
  return m;
}

/// Boundary perturbation for a single anchor node.
struct NodeBoundary {
  CandidatePair pair;
  double g = 0.0;
  RowVector delta;     // shared by every layer 1..L
  double bound = 0.0;  // |g| / ||f||_1 == ||delta||_inf
  bool degenerate = false;
};

/// Picks the candidate minimizing |g| / ||f||_1 and returns the l_inf-optimal displacement
/// Δ = -(g / ||f||_1) sign(f) that moves the anchor onto that pair's ranking boundary.
/// Candidates with ||f||_1 <= 1e-12 are skipped; if none remain the result is zero and flagged.
inline NodeBoundary boundary_for_node(const Matrix& z, Index num_layers, Index anchor,
                                      std::span<const CandidatePair> candidates) {
  NodeBoundary out;
  out.delta = RowVector::Zero(z.cols());
  out.degenerate = true;
  double best = std::numeric_limits<double>::infinity();
  Margin chosen;
  for (const auto& pair : candidates) {
    Margin m = pairwise_margin(z, num_layers, anchor, pair);
    const double l1 = m.f.lpNorm<1>();
    if (!(l1 > kL1Floor)) continue;
    const double ratio = std::abs(m.g) / l1;
    if (ratio < best) {
      best = ratio;
      out.pair = pair;
      chosen = std::move(m);
      out.degenerate = false;
    }
  }
  if (out.degenerate) {
    if (!candidates.empty()) out.pair = candidates.front();
    return out;
  }
  const double l1 = chosen.f.lpNorm<1>();
  out.g = chosen.g;
  out.delta = -(chosen.g / l1) * chosen.f.unaryExpr([](double v) { return rgcl::sign(v); });
  out.bound = std::abs(chosen.g) / l1;
  return out;
}

/// Boundary perturbations for a node set, stored per layer (index l-1 holds layer l).
struct BoundaryPerturbation {
  std::vector<Index> nodes;
  std::vector<CandidatePair> pairs;
  std::vector<double> margin;  // g at the selected pair
  std::vector<bool> degenerate;
  std::vector<Matrix> delta;   // per layer: |nodes| x d
  std::vector<Vector> bound;   // per layer: ||Δ||_inf per node

  Index num_layers() const { return static_cast<Index>(delta.size()); }

  model::LayerPerturbations as_layer_perturbations() const {
    model::LayerPerturbations p;
    p.nodes = nodes;
    for (Index l = 1; l <= num_layers(); ++l) p.by_layer.emplace(l, delta[static_cast<std::size_t>(l - 1)]);
    return p;
  }
};

inline BoundaryPerturbation boundary_perturbation(const Matrix& z, Index num_layers, std::span<const Index> nodes,
                                                  std::span<const std::vector<CandidatePair>> candidates) {
  if (candidates.size() != nodes.size()) throw std::invalid_argument("boundary_perturbation: one candidate list per node");
  BoundaryPerturbation out;
  out.nodes.assign(nodes.begin(), nodes.end());
  const auto n = static_cast<Index>(nodes.size());
  Matrix delta(n, z.cols());
  Vector bound(n);
  out.pairs.resize(nodes.size());
  out.margin.resize(nodes.size());
  out.degenerate.resize(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const NodeBoundary b = boundary_for_node(z, num_layers, nodes[k], candidates[k]);
    delta.row(static_cast<Index>(k)) = b.delta;
    bound(static_cast<Index>(k)) = b.bound;
    out.pairs[k] = b.pair;
    out.margin[k] = b.g;
    out.degenerate[k] = b.degenerate;
  }
  out.delta.assign(static_cast<std::size_t>(num_layers), delta);
  out.bound.assign(static_cast<std::size_t>(num_layers), bound);
  return out;
}

// ---------------------------------------------------------------------------
// Candidate sets
// ---------------------------------------------------------------------------

/// Per batch user: up to k of the user's batch positives x up to k of the user's batch
/// negatives, in triple order. Item ids are returned as unified rows (offset by num_users).
inline std::vector<std::vector<CandidatePair>> user_candidates(const data::TrainBatch& batch, Index num_users,
                                                               Index per_side) {
  std::unordered_map<Index, std::size_t> slot;
  for (std::size_t k = 0; k < batch.users.size(); ++k) slot.emplace(batch.users[k], k);
  std::vector<std::vector<Index>> pos(batch.users.size());
  std::vector<std::vector<Index>> neg(batch.users.size());
  const auto push_unique = [per_side](std::vector<Index>& v, Index x) {
    if (static_cast<Index>(v.size()) < per_side && std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& t : batch.triples) {
    const std::size_t s = slot.at(t.user);
    push_unique(pos[s], num_users + t.pos);
    push_unique(neg[s], num_users + t.neg);
  }
  std::vector<std::vector<CandidatePair>> out(batch.users.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    for (Index p : pos[s]) {
      for (Index q : neg[s]) out[s].push_back({p, q});
    }
  }
  return out;
}

/// Dual candidate rule for arbitrary anchors against a reference node set on the other side:
/// positives are reference nodes adjacent to the anchor in the train graph, negatives are
/// reference nodes that are not; up to k of each, in reference order.
inline std::vector<std::vector<CandidatePair>> dual_candidates(const graph::NormalizedAdjacency& adj,
                                                               std::span<const Index> anchors,
                                                               std::span<const Index> reference, Index per_side) {
  std::unordered_map<Index, std::size_t> position;
  for (std::size_t k = 0; k < reference.size(); ++k) position.emplace(reference[k], k);
  std::vector<std::vector<CandidatePair>> out(anchors.size());
  std::vector<std::size_t> hits;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    hits.clear();
    for (Index nb : adj.neighbors(anchors[a])) {
      const auto it = position.find(nb);
      if (it != position.end()) hits.push_back(it->second);
    }
    std::sort(hits.begin(), hits.end());
    if (hits.size() > static_cast<std::size_t>(per_side)) hits.resize(static_cast<std::size_t>(per_side));
    std::vector<Index> negs;
    for (std::size_t k = 0; k < reference.size() && static_cast<Index>(negs.size()) < per_side; ++k) {
      if (!adj.has_edge(anchors[a], reference[k])) negs.push_back(reference[k]);
    }
    for (std::size_t h : hits) {
      for (Index q : negs) out[a].push_back({reference[h], q});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

enum class NoiseKind { kUniform, kOnes };

/// Layer-wise noise for one view, before (raw) and after (constrained) projection.
struct RandomNoise {
  std::vector<Matrix> raw;          // r^(l): eps-length, sign-aligned with H^(l)
  std::vector<Matrix> constrained;  // r~^(l) = clamp(r^(l), -|Δ^(l)|, |Δ^(l)|), or raw when unconstrained
};

/// Elementwise clamp of r into [-|Δ|, |Δ|].
inline Matrix project(const Matrix& r, const Matrix& delta) {
  const Matrix limit = delta.cwiseAbs();
  return r.cwiseMax(-limit).cwiseMin(limit);
}

/// r^(l) = eps * (r ⊙ sign(H^(l)_n)) / ||r ⊙ sign(H^(l)_n)||_2 with r ~ U(0,1)^d (or all ones),
/// then projected onto the per-node boundary box when `boundary` is given.
template <typename Rng>
RandomNoise random_noise(const model::LayerStack& stack, std::span<const Index> nodes, const BoundaryPerturbation* boundary,
                         double eps, NoiseKind kind, Rng& rng) {
  if (!(eps > 0.0)) throw ConfigError("perturbation magnitude eps must be positive");
  const Index depth = stack.depth();
  const Index dim = stack.dim();
  const auto n = static_cast<Index>(nodes.size());
  RandomNoise out;
  out.raw.assign(static_cast<std::size_t>(depth), Matrix(n, dim));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index k = 0; k < n; ++k) {
    for (Index l = 1; l <= depth; ++l) {
      auto row = out.raw[static_cast<std::size_t>(l - 1)].row(k);
      const auto h = stack[l].row(nodes[static_cast<std::size_t>(k)]);
      for (Index c = 0; c < dim; ++c) row(c) = (kind == NoiseKind::kUniform ? unit(rng) : 1.0) * rgcl::sign(h(c));
      const double norm = row.norm();
      if (norm > 0.0) {
        row *= eps / norm;
      } else {
        row.setZero();
      }
    }
  }
  if (boundary != nullptr) {
    for (Index l = 1; l <= depth; ++l) {
      out.constrained.push_back(project(out.raw[static_cast<std::size_t>(l - 1)], boundary->delta[static_cast<std::size_t>(l - 1)]));
    }
  } else {
    out.constrained = out.raw;
  }
  return out;
}

/// Sum over layers of per-layer displacements, divided by (L+1).
inline Matrix mean_shift(const std::vector<Matrix>& per_layer, Index rows, Index dim) {
  Matrix shift = Matrix::Zero(rows, dim);
  for (const auto& m : per_layer) shift += m;
  return shift / static_cast<double>(per_layer.size() + 1);
}

/// Aggregate rows of `nodes` plus the noise's constrained displacement.
inline Matrix random_view(const Matrix& z, std::span<const Index> nodes, const RandomNoise& noise) {
  Matrix view = model::gather_rows(z, nodes);
  if (!noise.constrained.empty()) view += mean_shift(noise.constrained, view.rows(), view.cols());
  return view;
}

/// η = δ ⊙ sign(gradient), row-wise bound δ; sign(0) = 0.
inline Matrix fgsm_step(const Matrix& gradient, const Vector& bound) {
  if (bound.size() != gradient.rows()) throw std::invalid_argument("fgsm_step: one bound per row");
  return bound.asDiagonal() * rgcl::sign(gradient);
}

/// r~ ⊙ sign(η).
inline Matrix signed_displacement(const Matrix& constrained, const Matrix& eta) {
  return constrained.cwiseProduct(rgcl::sign(eta));
}

struct AdversarialContrastiveView {
  Matrix gradient;                // dL_CL(z̈, z'') / dz̈
  std::vector<Matrix> eta;        // per layer: δ^(l) ⊙ sign(dL_CL/dη^(l))
  std::vector<Matrix> shift;      // per layer: r~^(l) ⊙ sign(η^(l))
  Matrix view;                    // z^ac
};

/// Single FGSM step at η = 0 on the in-set contrastive loss between z̈ = z + mean(r~) and the
/// fixed partner view z''; the final view uses r~ ⊙ sign(η).
inline AdversarialContrastiveView adversarial_contrastive_view(const Matrix& z, std::span<const Index> nodes,
                                                               const RandomNoise& noise, const Matrix& partner,
                                                               const BoundaryPerturbation& boundary, double tau) {
  const Index depth = static_cast<Index>(noise.constrained.size());
  const Matrix base = model::gather_rows(z, nodes);
  AdversarialContrastiveView out;
  {
    diff::Tape tape;
    Matrix anchor = base;
    if (depth > 0) anchor += mean_shift(noise.constrained, base.rows(), base.cols());
    const diff::Var x = tape.leaf(std::move(anchor));
    const diff::Var y = tape.constant(partner);
    const diff::Var loss = losses::infonce(tape, x, y, tau);
    tape.backward(loss);
    out.gradient = tape.grad(x);
  }
  // dL/dη^(l) = gradient / (L+1): same sign for every layer.
  Matrix view = base;
  for (Index l = 1; l <= depth; ++l) {
    Matrix eta = fgsm_step(out.gradient, boundary.bound[static_cast<std::size_t>(l - 1)]);
    Matrix shift = signed_displacement(noise.constrained[static_cast<std::size_t>(l - 1)], eta);
    view += shift / static_cast<double>(depth + 1);
    out.eta.push_back(std::move(eta));
    out.shift.push_back(std::move(shift));
  }
  out.view = std::move(view);
  return out;
}

/// z^adv rows: aggregate plus Δ^(l) at every layer 1..L.
inline Matrix adversarial_example(const Matrix& z, const BoundaryPerturbation& boundary) {
  Matrix view = model::gather_rows(z, boundary.nodes);
  if (!boundary.delta.empty()) view += mean_shift(boundary.delta, view.rows(), view.cols());
  return view;
}

}  // namespace rgcl::augment
