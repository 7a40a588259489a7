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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

namespace {

using namespace rgcl;

TEST(BprLoss, EqualScoresGiveLnTwoPerTriple) {
  Matrix z(3, 2);
  z << 1, 1, 2, 0, 0, 2;
  const std::vector<data::Triple> t = {{0, 0, 1}, {0, 1, 0}};
  EXPECT_NEAR(losses::bpr_loss(z, 1, t), 2.0 * std::log(2.0), 1e-15);
}

TEST(BprLoss, LargeGapApproachesZero) {
  Matrix z(3, 1);
  z << 1, 1e6, -1e6;
  const std::vector<data::Triple> t = {{0, 0, 1}};
  EXPECT_EQ(losses::bpr_loss(z, 1, t), 0.0);
}

TEST(BprLoss, MatchesDirectFormula) {
  std::mt19937_64 rng(1);
  const Matrix z = support::random_matrix(9, 5, rng);
  const std::vector<data::Triple> t = {{0, 0, 1}, {1, 2, 3}, {2, 4, 0}, {3, 1, 4}};
  double oracle = 0.0;
  for (const auto& tr : t) {
    const double x = z.row(tr.user).dot(z.row(4 + tr.pos)) - z.row(tr.user).dot(z.row(4 + tr.neg));
    oracle += -std::log(1.0 / (1.0 + std::exp(-x)));
  }
  EXPECT_NEAR(losses::bpr_loss(z, 4, t), oracle, 1e-12);
}

TEST(BprLoss, NonFiniteScoreThrows) {
  Matrix z(3, 1);
  z << std::nan(""), 1, 2;
  const std::vector<data::Triple> t = {{0, 0, 1}};
  EXPECT_THROW(losses::bpr_loss(z, 1, t), NumericalError);
}

TEST(BprLoss, TapeAgreesWithValueForm) {
  std::mt19937_64 rng(2);
  const Matrix z = support::random_matrix(7, 3, rng);
  const std::vector<data::Triple> t = {{0, 0, 1}, {1, 2, 3}, {2, 3, 0}};
  diff::Tape tape;
  const auto zv = tape.leaf(z);
  const auto loss = losses::bpr(tape, tape.gather_rows(zv, {0, 1, 2}), tape.gather_rows(zv, {3, 5, 6}),
                                tape.gather_rows(zv, {4, 6, 3}));
  EXPECT_NEAR(tape.scalar(loss), losses::bpr_loss(z, 3, t), 1e-12);
}

TEST(InfoNce, UniformSimilaritiesGiveBLnB) {
  // Identical rows: every cosine is 1.
  const Matrix x = Matrix::Ones(4, 3);
  EXPECT_NEAR(losses::infonce_loss(x, x, 0.2), 4.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(4.0 * std::log(4.0), 5.545177, 1e-6);
}

TEST(InfoNce, SingletonIsZero) {
  std::mt19937_64 rng(3);
  EXPECT_NEAR(losses::infonce_loss(support::random_matrix(1, 4, rng), support::random_matrix(1, 4, rng), 0.5), 0.0, 1e-15);
}

TEST(InfoNce, HighTemperatureFlattensToBLnB) {
  std::mt19937_64 rng(4);
  const Matrix x = support::random_matrix(5, 4, rng), y = support::random_matrix(5, 4, rng);
  EXPECT_NEAR(losses::infonce_loss(x, y, 1e9), 5.0 * std::log(5.0), 1e-7);
}

TEST(InfoNce, OrthogonalRowsClosedForm) {
  // Orthonormal rows, x = y, tau = 1: each term is -log(e / (e + (B-1))).
  const Matrix x = Matrix::Identity(4, 4);
  const double term = -std::log(std::exp(1.0) / (std::exp(1.0) + 3.0));
  EXPECT_NEAR(losses::infonce_loss(x, x, 1.0), 4.0 * term, 1e-12);
}

TEST(InfoNce, ErrorsOnBadInput) {
  const Matrix x = Matrix::Ones(2, 2);
  EXPECT_THROW(losses::infonce_loss(x, x, 0.0), std::invalid_argument);
  EXPECT_THROW(losses::infonce_loss(x, x, -1.0), std::invalid_argument);
  EXPECT_THROW(losses::infonce_loss(Matrix(0, 2), Matrix(0, 2), 0.2), std::invalid_argument);
  EXPECT_THROW(losses::infonce_loss(x, Matrix::Ones(3, 2), 0.2), std::invalid_argument);
}

TEST(InfoNce, PermutationInvariantAndScaleInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = support::random_matrix(6, 4, rng), y = support::random_matrix(6, 4, rng);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 6, rng);
    const double base = losses::infonce_loss(x, y, 0.3);
    const Matrix px = perm * x, py = perm * y;
    EXPECT_NEAR(losses::infonce_loss(px, py, 0.3), base, 1e-10);
    EXPECT_NEAR(losses::infonce_loss(2.0 * x, 3.0 * y, 0.3), base, 1e-10);
  }
}

TEST(InfoNce, FiniteForExtremeTemperature) {
  std::mt19937_64 rng(6);
  const Matrix x = support::random_matrix(5, 4, rng);
  EXPECT_TRUE(std::isfinite(losses::infonce_loss(x, x, 1e-4)));
}

TEST(InfoNce, TapeAgreesWithValueForm) {
  std::mt19937_64 rng(7);
  const Matrix x = support::random_matrix(5, 4, rng), y = support::random_matrix(5, 4, rng);
  diff::Tape t;
  EXPECT_NEAR(t.scalar(losses::infonce(t, t.leaf(x), t.leaf(y), 0.2)), losses::infonce_loss(x, y, 0.2), 1e-10);
}

losses::ViewTriplet same_views(const Matrix& v) { return {v, v, v}; }

TEST(MultiView, SixIdenticalTermsForIdenticalViews) {
  const Matrix u = Matrix::Identity(3, 3);
  const Matrix i = Matrix::Ones(4, 3);
  const double tu = losses::infonce_loss(u, u, 0.5), ti = losses::infonce_loss(i, i, 0.5);
  const auto terms = losses::multiview_terms(same_views(u), same_views(i), 0.5);
  EXPECT_NEAR(terms[0], tu, 1e-12);
  EXPECT_NEAR(terms[1], tu, 1e-12);
  EXPECT_NEAR(terms[2], tu, 1e-12);
  EXPECT_NEAR(terms[5], ti, 1e-12);
  EXPECT_NEAR(losses::multiview_cl_loss(same_views(u), same_views(i), 0.5), 3 * tu + 3 * ti, 1e-12);
}

TEST(MultiView, DoublingViewsLeavesLossUnchanged) {
  std::mt19937_64 rng(8);
  losses::ViewTriplet u{support::random_matrix(4, 3, rng), support::random_matrix(4, 3, rng), support::random_matrix(4, 3, rng)};
  losses::ViewTriplet i{support::random_matrix(5, 3, rng), support::random_matrix(5, 3, rng), support::random_matrix(5, 3, rng)};
  const double base = losses::multiview_cl_loss(u, i, 0.2);
  for (auto* v : {&u.first, &u.second, &u.adversarial, &i.first, &i.second, &i.adversarial}) *v *= 2.0;
  EXPECT_NEAR(losses::multiview_cl_loss(u, i, 0.2), base, 1e-10);
}

TEST(MultiView, DroppingAdversarialViewGivesTwoViewLoss) {
  std::mt19937_64 rng(9);
  losses::ViewTriplet u{support::random_matrix(4, 3, rng), support::random_matrix(4, 3, rng), Matrix()};
  losses::ViewTriplet i{support::random_matrix(5, 3, rng), support::random_matrix(5, 3, rng), Matrix()};
  EXPECT_NEAR(losses::multiview_cl_loss(u, i, 0.2),
              losses::infonce_loss(u.first, u.second, 0.2) + losses::infonce_loss(i.first, i.second, 0.2), 1e-12);
}

TEST(AdvBpr, ZeroPerturbationEqualsBpr) {
  std::mt19937_64 rng(10);
  const Matrix z = support::random_matrix(7, 3, rng);
  const std::vector<data::Triple> t = {{0, 0, 1}, {2, 3, 2}};
  augment::BoundaryPerturbation none;
  none.nodes = {0, 1, 2, 3, 4, 5, 6};
  none.delta.assign(2, Matrix::Zero(7, 3));
  EXPECT_EQ(losses::bpr_loss(augment::adversarial_example(z, none), 3, t), losses::bpr_loss(z, 3, t));
}

TEST(AdvBpr, SelectedPairContributesLnTwoAtSingleLayer) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = support::random_matrix(5, 4, rng);
    const std::vector<augment::CandidatePair> cands = {{2, 3}, {2, 4}, {1, 3}};
    const auto b = augment::boundary_perturbation(z, 1, std::vector<Index>{0}, std::vector<std::vector<augment::CandidatePair>>{cands});
    Matrix adv = z;
    adv.row(0) = augment::adversarial_example(z, b).row(0);
    const Index pos = b.pairs[0].pos - 1, neg = b.pairs[0].neg - 1;
    const std::vector<data::Triple> t = {{0, pos, neg}};
    EXPECT_NEAR(losses::bpr_loss(adv, 1, t), std::log(2.0), 1e-8);
  }
}

// Δ at all L layers moves the aggregate by L/(L+1) Δ, so the selected margin becomes (1-L) g.
TEST(AdvBpr, AllLayerShiftReflectsMargin) {
  std::mt19937_64 rng(12);
  for (Index depth = 1; depth <= 4; ++depth) {
    const Matrix z = support::random_matrix(5, 4, rng);
    const std::vector<augment::CandidatePair> cands = {{2, 3}, {2, 4}, {1, 3}};
    const auto b = augment::boundary_perturbation(z, depth, std::vector<Index>{0}, std::vector<std::vector<augment::CandidatePair>>{cands});
    Matrix adv = z;
    adv.row(0) = augment::adversarial_example(z, b).row(0);
    const double g = augment::pairwise_margin(adv, depth, 0, b.pairs[0]).g;
    EXPECT_NEAR(g, (1.0 - static_cast<double>(depth)) * b.margin[0], 1e-10);
  }
}

TEST(JointLoss, ComposesWithWeights) {
  const losses::ContrastiveTerms terms = {1, 2, 3, 4, 5, 6};
  const auto b = losses::joint_loss(10.0, 4.0, terms, 0.1, 1e-3, 0.2);
  EXPECT_EQ(b.l_cl, 21.0);
  EXPECT_NEAR(b.l_total, 10.0 + 0.4 + 0.021, 1e-10);
  EXPECT_EQ(b.mu, 0.1);
  EXPECT_EQ(b.tau, 0.2);
  const auto doubled = losses::joint_loss(10.0, 4.0, terms, 0.1, 2e-3, 0.2);
  EXPECT_NEAR(doubled.l_total - b.l_total, b.alpha * b.l_cl, 1e-12);
  EXPECT_EQ(losses::joint_loss(10.0, 4.0, terms, 0.0, 0.0, 0.2).l_total, 10.0);
  EXPECT_THROW(losses::joint_loss(1, 1, terms, -0.1, 0, 0.2), ConfigError);
}

TEST(JointLoss, NonFiniteTermIsNamed) {
  losses::ContrastiveTerms terms{};
  terms[4] = std::numeric_limits<double>::infinity();
  const auto b = losses::joint_loss(1.0, 1.0, terms, 0.1, 0.1, 0.2);
  try {
    losses::check_finite(b);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("cl_item_ac1"), std::string::npos);
  }
}

}  // namespace
