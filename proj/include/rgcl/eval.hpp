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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rgcl/augment.hpp"
#include "rgcl/dataset.hpp"
#include "rgcl/types.hpp"

namespace rgcl::eval {

enum class Split { kValid, kTest };

namespace detail {

// Higher score first; equal scores by ascending item index.
struct RankOrder {
  const double* scores;
  bool operator()(Index a, Index b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

inline std::vector<Index> top_items(const Eigen::Ref<const Vector>& scores, std::span<const Index> mask, Index limit) {
  std::vector<Index> candidates;
  candidates.reserve(static_cast<std::size_t>(scores.size()));
  std::size_t m = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    while (m < mask.size() && mask[m] < i) ++m;
    if (m < mask.size() && mask[m] == i) continue;
    candidates.push_back(i);
  }
  const RankOrder order{scores.data()};
  const auto keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::max<Index>(limit, 0)));
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(), order);
  candidates.resize(keep);
  return candidates;
}

inline double discount(std::size_t rank_one_based) { return 1.0 / std::log2(static_cast<double>(rank_one_based) + 1.0); }

// Merge of two sorted lists.
inline std::vector<Index> merged(std::span<const Index> a, std::span<const Index> b) {
  std::vector<Index> out;
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

/// All unmasked items for `user`, by descending score with ascending-index tie break.
/// `mask` must be sorted.
inline std::vector<Index> full_rank(const Matrix& z, const data::ImplicitDataset& ds, Index user, std::span<const Index> mask) {
  if (user < 0 || user >= ds.num_users || ds.train_positives[static_cast<std::size_t>(user)].empty()) {
    throw std::out_of_range("full_rank: user " + std::to_string(user) + " has no train interactions");
  }
  const Vector scores = z.middleRows(ds.num_users, ds.num_items) * z.row(user).transpose();
  return detail::top_items(scores, mask, ds.num_items);
}

struct TopK {
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Recall@K = |top-K ∩ test| / |test|; NDCG@K with gain 1/log2(rank+1) and an ideal list of
/// min(|test|, K) hits. `test_items` must be sorted and non-empty.
inline TopK metrics_at_k(std::span<const Index> ranked, std::span<const Index> test_items, Index k) {
  if (k < 1) throw std::invalid_argument("metrics_at_k: K must be >= 1");
  if (test_items.empty()) throw std::invalid_argument("metrics_at_k: empty test set");
  const auto depth = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (std::binary_search(test_items.begin(), test_items.end(), ranked[r])) {
      ++hits;
      dcg += detail::discount(r + 1);
    }
  }
  double idcg = 0.0;
  const auto ideal = std::min<std::size_t>(test_items.size(), static_cast<std::size_t>(k));
  for (std::size_t r = 0; r < ideal; ++r) idcg += detail::discount(r + 1);
  return {static_cast<double>(hits) / static_cast<double>(test_items.size()), dcg / idcg};
}

/// Decomposed per-group contribution of one user (before the 1/|users| average).
/// The predicted list is cut to min(|test|, K) entries; `in_group` flags items of the group.
template <typename InGroup>
TopK decomposed_at_k(std::span<const Index> ranked, std::span<const Index> test_items, Index k, InGroup&& in_group) {
  const auto cut = std::min<std::size_t>({test_items.size(), static_cast<std::size_t>(k), ranked.size()});
  const auto list_len = std::min<std::size_t>(test_items.size(), static_cast<std::size_t>(k));
  double hits = 0.0;
  double dcg = 0.0;
  for (std::size_t j = 0; j < cut; ++j) {
    const Index item = ranked[j];
    if (in_group(item) && std::binary_search(test_items.begin(), test_items.end(), item)) {
      hits += 1.0;
      dcg += detail::discount(j + 1);
    }
  }
  double norm = 0.0;
  for (std::size_t t = 0; t < list_len; ++t) norm += detail::discount(t + 1);
  return {hits / static_cast<double>(list_len), dcg / norm};
}

struct UserRanking {
  Index user = 0;
  std::vector<Index> top;   // top-max(K) ranked items
  std::vector<Index> test;  // sorted held-out items
};

/// Top lists for every user with a non-empty held-out set in `split`. Validation ranking masks
/// train positives; test ranking masks train and validation positives.
inline std::vector<UserRanking> rank_users(const Matrix& z, const data::ImplicitDataset& ds, Split split, Index depth) {
  const auto held = ds.by_user(split == Split::kValid ? std::span<const data::Interaction>(ds.valid)
                                                      : std::span<const data::Interaction>(ds.test));
  const auto valid = split == Split::kTest ? ds.by_user(ds.valid) : std::vector<std::vector<Index>>{};
  std::vector<Index> users;
  for (Index u = 0; u < ds.num_users; ++u) {
    if (!held[static_cast<std::size_t>(u)].empty()) users.push_back(u);
  }
  std::vector<UserRanking> out(users.size());
  const auto items = z.middleRows(ds.num_users, ds.num_items);
  constexpr Index kChunk = 256;
  for (std::size_t begin = 0; begin < users.size(); begin += kChunk) {
    const std::size_t end = std::min(users.size(), begin + kChunk);
    Matrix queries(static_cast<Index>(end - begin), z.cols());
    for (std::size_t k = begin; k < end; ++k) queries.row(static_cast<Index>(k - begin)) = z.row(users[k]);
    const Eigen::MatrixXd scores = items * queries.transpose();  // items x chunk, column per user
#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = begin; k < end; ++k) {
      const Index u = users[k];
      const auto& train = ds.train_positives[static_cast<std::size_t>(u)];
      const std::vector<Index> mask = split == Split::kTest ? detail::merged(train, valid[static_cast<std::size_t>(u)]) : train;
      out[k].user = u;
      out[k].top = detail::top_items(scores.col(static_cast<Index>(k - begin)), mask, depth);
      out[k].test = held[static_cast<std::size_t>(u)];
    }
  }
  return out;
}

/// Mean Recall@K and NDCG@K over evaluated users.
struct RankReport {
  std::vector<Index> ks;
  std::map<Index, double> recall;
  std::map<Index, double> ndcg;
  Index users = 0;
};

inline RankReport rank_report(std::span<const UserRanking> rankings, std::span<const Index> ks) {
  RankReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.users = static_cast<Index>(rankings.size());
  for (Index k : ks) {
    double r = 0.0;
    double n = 0.0;
    for (const auto& ur : rankings) {
      const TopK m = metrics_at_k(ur.top, ur.test, k);
      r += m.recall;
      n += m.ndcg;
    }
    const double denom = rankings.empty() ? 1.0 : static_cast<double>(rankings.size());
    report.recall[k] = r / denom;
    report.ndcg[k] = n / denom;
  }
  return report;
}

inline RankReport evaluate(const Matrix& z, const data::ImplicitDataset& ds, Split split,
                           std::span<const Index> ks = std::vector<Index>{10, 20, 50}) {
  const Index depth = *std::max_element(ks.begin(), ks.end());
  const auto rankings = rank_users(z, ds, split, depth);
  return rank_report(rankings, ks);
}

/// Bins `ids` sorted by ascending `degree` (ties by id) into `groups` contiguous bins whose
/// sizes differ by at most one. Returns the bin index per position of the sorted order.
inline std::vector<std::vector<Index>> equal_count_bins(std::vector<Index> ids, std::span<const Index> degree, int groups = 5) {
  std::stable_sort(ids.begin(), ids.end(), [&](Index a, Index b) {
    if (degree[static_cast<std::size_t>(a)] != degree[static_cast<std::size_t>(b)]) {
      return degree[static_cast<std::size_t>(a)] < degree[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  std::vector<std::vector<Index>> bins(static_cast<std::size_t>(groups));
  const std::size_t n = ids.size();
  for (int g = 0; g < groups; ++g) {
    const std::size_t lo = n * static_cast<std::size_t>(g) / static_cast<std::size_t>(groups);
    const std::size_t hi = n * static_cast<std::size_t>(g + 1) / static_cast<std::size_t>(groups);
    bins[static_cast<std::size_t>(g)].assign(ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return bins;
}

struct GroupMetrics {
  std::size_t size = 0;
  Index min_degree = 0;
  Index max_degree = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Users binned by train activity, items by train popularity (five equal-count groups each,
/// ascending). User groups carry ordinary Recall/NDCG@K means; item groups carry the decomposed
/// metrics, which sum over groups to the whole-catalogue decomposed values.
struct GroupReport {
  Index k = 20;
  std::vector<GroupMetrics> user_groups;
  std::vector<GroupMetrics> item_groups;
  double overall_recall = 0.0;             // ordinary Recall@K over evaluated users
  double overall_ndcg = 0.0;
  double overall_decomposed_recall = 0.0;  // decomposed formula with the whole catalogue as one group
  double overall_decomposed_ndcg = 0.0;
};

inline GroupReport group_report(std::span<const UserRanking> rankings, const data::ImplicitDataset& ds, Index k) {
  constexpr int kGroups = 5;
  if (rankings.size() < kGroups) throw DataError("group_eval: fewer than five evaluated users");
  if (ds.num_items < kGroups) throw DataError("group_eval: fewer than five items");
  GroupReport report;
  report.k = k;

  std::vector<Index> user_degree(static_cast<std::size_t>(ds.num_users));
  for (Index u = 0; u < ds.num_users; ++u) user_degree[static_cast<std::size_t>(u)] = static_cast<Index>(ds.train_positives[static_cast<std::size_t>(u)].size());
  std::vector<Index> item_degree(static_cast<std::size_t>(ds.num_items), 0);
  for (const auto& e : ds.train) ++item_degree[static_cast<std::size_t>(e.item)];

  std::map<Index, std::size_t> slot;
  std::vector<Index> users;
  for (std::size_t r = 0; r < rankings.size(); ++r) {
    slot.emplace(rankings[r].user, r);
    users.push_back(rankings[r].user);
  }
  const double num_eval = static_cast<double>(rankings.size());

  for (const auto& bin : equal_count_bins(users, user_degree, kGroups)) {
    GroupMetrics gm;
    gm.size = bin.size();
    for (Index u : bin) {
      const auto& ur = rankings[slot.at(u)];
      const TopK m = metrics_at_k(ur.top, ur.test, k);
      gm.recall += m.recall;
      gm.ndcg += m.ndcg;
    }
    if (!bin.empty()) {
      gm.min_degree = user_degree[static_cast<std::size_t>(bin.front())];
      gm.max_degree = user_degree[static_cast<std::size_t>(bin.back())];
      gm.recall /= static_cast<double>(bin.size());
      gm.ndcg /= static_cast<double>(bin.size());
    }
    report.user_groups.push_back(gm);
  }

  std::vector<Index> all_items(static_cast<std::size_t>(ds.num_items));
  std::iota(all_items.begin(), all_items.end(), Index{0});
  std::vector<int> item_group(static_cast<std::size_t>(ds.num_items), 0);
  const auto item_bins = equal_count_bins(all_items, item_degree, kGroups);
  for (std::size_t g = 0; g < item_bins.size(); ++g) {
    for (Index i : item_bins[g]) item_group[static_cast<std::size_t>(i)] = static_cast<int>(g);
  }
  report.item_groups.resize(kGroups);
  for (std::size_t g = 0; g < item_bins.size(); ++g) {
    auto& gm = report.item_groups[g];
    gm.size = item_bins[g].size();
    if (!item_bins[g].empty()) {
      gm.min_degree = item_degree[static_cast<std::size_t>(item_bins[g].front())];
      gm.max_degree = item_degree[static_cast<std::size_t>(item_bins[g].back())];
    }
  }
  for (const auto& ur : rankings) {
    const TopK m = metrics_at_k(ur.top, ur.test, k);
    report.overall_recall += m.recall;
    report.overall_ndcg += m.ndcg;
    const TopK whole = decomposed_at_k(ur.top, ur.test, k, [](Index) { return true; });
    report.overall_decomposed_recall += whole.recall;
    report.overall_decomposed_ndcg += whole.ndcg;
    for (int g = 0; g < kGroups; ++g) {
      const TopK part = decomposed_at_k(ur.top, ur.test, k, [&](Index i) { return item_group[static_cast<std::size_t>(i)] == g; });
      report.item_groups[static_cast<std::size_t>(g)].recall += part.recall;
      report.item_groups[static_cast<std::size_t>(g)].ndcg += part.ndcg;
    }
  }
  report.overall_recall /= num_eval;
  report.overall_ndcg /= num_eval;
  report.overall_decomposed_recall /= num_eval;
  report.overall_decomposed_ndcg /= num_eval;
  for (auto& gm : report.item_groups) {
    gm.recall /= num_eval;
    gm.ndcg /= num_eval;
  }
  return report;
}

inline GroupReport group_eval(const Matrix& z, const data::ImplicitDataset& ds, Index k, Split split = Split::kTest) {
  const auto rankings = rank_users(z, ds, split, k);
  return group_report(rankings, ds, k);
}

struct MarginSummary {
  std::size_t measured = 0;
  std::size_t degenerate = 0;
  double mean = 0.0;
  double median = 0.0;
  double q10 = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double q90 = 0.0;
  double max = 0.0;
  std::vector<double> values;
};

inline double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Distance |g| / ||f||_1 to the ranking boundary at the pair the boundary perturbation would
/// select, per sampled user. Candidates: up to k train positives x k uniform negatives.
template <typename Rng>
MarginSummary measure_margins(const Matrix& z, Index num_layers, const data::ImplicitDataset& ds,
                              std::span<const Index> users, Index per_side, Rng& rng) {
  MarginSummary s;
  for (Index u : users) {
    const auto& pos = ds.train_positives[static_cast<std::size_t>(u)];
    std::vector<augment::CandidatePair> candidates;
    std::vector<Index> negs;
    for (Index k = 0; k < per_side; ++k) {
      if (auto neg = data::sample_negative(std::span<const Index>(pos), ds.num_items, rng)) negs.push_back(*neg);
    }
    for (std::size_t p = 0; p < pos.size() && static_cast<Index>(p) < per_side; ++p) {
      for (Index q : negs) candidates.push_back({ds.num_users + pos[p], ds.num_users + q});
    }
    const auto b = augment::boundary_for_node(z, num_layers, u, candidates);
    if (b.degenerate) {
      ++s.degenerate;
      continue;
    }
    s.values.push_back(b.bound);
  }
  s.measured = s.values.size();
  if (!s.values.empty()) {
    std::vector<double> sorted = s.values;
    std::sort(sorted.begin(), sorted.end());
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    s.median = quantile(sorted, 0.5);
    s.q10 = quantile(sorted, 0.1);
    s.q25 = quantile(sorted, 0.25);
    s.q75 = quantile(sorted, 0.75);
    s.q90 = quantile(sorted, 0.9);
    s.max = sorted.back();
  }
  return s;
}

}  // namespace rgcl::eval
