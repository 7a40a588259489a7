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

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgcl/dataset.hpp"
#include "rgcl/diff.hpp"
#include "rgcl/types.hpp"

namespace rgcl::losses {

// ---------------------------------------------------------------------------
// Tape builders. These are what training differentiates.
// ---------------------------------------------------------------------------

/// -sum_t ln sigmoid(<u_t, p_t> - <u_t, n_t>) over aligned rows.
inline diff::Var bpr(diff::Tape& tape, diff::Var users, diff::Var pos, diff::Var neg) {
  const diff::Var diffs = tape.sub(tape.rowwise_dot(users, pos), tape.rowwise_dot(users, neg));
  return tape.scale(tape.sum(tape.log_sigmoid(diffs)), -1.0);
}

/// sum_u -log softmax_v(sim(x_u, y_v) / tau)[u] with cosine similarity and an in-set denominator.
inline diff::Var infonce(diff::Tape& tape, diff::Var x, diff::Var y, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: temperature must be positive");
  if (tape.value(x).rows() == 0) throw std::invalid_argument("infonce: empty node set");
  if (tape.value(x).rows() != tape.value(y).rows()) throw std::invalid_argument("infonce: views differ in row count");
  const diff::Var xn = tape.row_normalize(x);
  const diff::Var yn = tape.row_normalize(y);
  const diff::Var logits = tape.scale(tape.matmul_nt(xn, yn), 1.0 / tau);
  const diff::Var positives = tape.scale(tape.rowwise_dot(xn, yn), 1.0 / tau);
  return tape.sub(tape.sum(tape.logsumexp_rows(logits)), tape.sum(positives));
}

// ---------------------------------------------------------------------------
// Value-only forms, used for reporting and as cross-checks.
// ---------------------------------------------------------------------------

/// BPR over scores of aggregate rows; item indices are offset by num_users.
inline double bpr_loss(const Matrix& z, Index num_users, std::span<const data::Triple> triples) {
  double loss = 0.0;
  for (const auto& t : triples) {
    const auto u = z.row(t.user);
    const double margin = u.dot(z.row(num_users + t.pos)) - u.dot(z.row(num_users + t.neg));
    if (!std::isfinite(margin)) throw NumericalError("bpr_loss: non-finite score");
    loss -= diff::log_sigmoid(margin);
  }
  return loss;
}

inline Matrix normalize_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(r) / std::max(x.row(r).norm(), diff::kNormFloor);
  return out;
}

inline double infonce_loss(const Matrix& x, const Matrix& y, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("infonce: temperature must be positive");
  if (x.rows() == 0) throw std::invalid_argument("infonce: empty node set");
  if (x.rows() != y.rows()) throw std::invalid_argument("infonce: views differ in row count");
  const Matrix xn = normalize_rows(x);
  const Matrix yn = normalize_rows(y);
  const Matrix logits = (xn * yn.transpose()) / tau;
  const Vector lse = diff::logsumexp_rows(logits);
  return lse.sum() - logits.diagonal().sum();
}

/// One side's views: z', z'' and (optionally) z^ac, rows aligned by node.
struct ViewTriplet {
  Matrix first;
  Matrix second;
  Matrix adversarial;  // empty when the adversarial-contrastive view is disabled
};

/// Term order: user (z'↔z'', z^ac↔z', z^ac↔z''), item (same).
using ContrastiveTerms = std::array<double, 6>;

inline ContrastiveTerms multiview_terms(const ViewTriplet& users, const ViewTriplet& items, double tau) {
  ContrastiveTerms terms{};
  const auto side = [&](const ViewTriplet& v, std::size_t offset) {
    terms[offset] = infonce_loss(v.first, v.second, tau);
    if (v.adversarial.size() > 0) {
      terms[offset + 1] = infonce_loss(v.adversarial, v.first, tau);
      terms[offset + 2] = infonce_loss(v.adversarial, v.second, tau);
    }
  };
  side(users, 0);
  side(items, 3);
  return terms;
}

inline double multiview_cl_loss(const ViewTriplet& users, const ViewTriplet& items, double tau) {
  const auto terms = multiview_terms(users, items, tau);
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

struct LossBreakdown {
  double l_bpr = 0.0;
  double l_adv = 0.0;
  double l_cl = 0.0;
  ContrastiveTerms cl_terms{};
  double l_total = 0.0;
  double mu = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
};

/// L = L_BPR + mu * L_ADV + alpha * L_CL.
inline LossBreakdown joint_loss(double l_bpr, double l_adv, const ContrastiveTerms& cl_terms, double mu, double alpha,
                                double tau) {
  if (mu < 0.0 || alpha < 0.0) throw ConfigError("loss weights must be non-negative");
  LossBreakdown out;
  out.l_bpr = l_bpr;
  out.l_adv = l_adv;
  out.cl_terms = cl_terms;
  for (double t : cl_terms) out.l_cl += t;
  out.mu = mu;
  out.alpha = alpha;
  out.tau = tau;
  out.l_total = l_bpr + mu * l_adv + alpha * out.l_cl;
  return out;
}

inline void check_finite(const LossBreakdown& b) {
  const auto check = [](double v, const std::string& name) {
    if (!std::isfinite(v)) throw NumericalError("non-finite loss term " + name + " = " + std::to_string(v));
  };
  check(b.l_bpr, "l_bpr");
  check(b.l_adv, "l_adv");
  static constexpr std::array<const char*, 6> kNames = {"cl_user_12", "cl_user_ac1", "cl_user_ac2",
                                                        "cl_item_12", "cl_item_ac1", "cl_item_ac2"};
  for (std::size_t k = 0; k < b.cl_terms.size(); ++k) check(b.cl_terms[k], kNames[k]);
  check(b.l_total, "l_total");
}

}  // namespace rgcl::losses
