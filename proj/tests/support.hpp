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
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rgcl/rgcl.hpp"

namespace rgcl::support {

/// Builds a dataset directly from index pairs; tokens are "u<k>" / "i<k>".
inline data::ImplicitDataset make_dataset(Index users, Index items, const std::vector<std::pair<Index, Index>>& train,
                                          const std::vector<std::pair<Index, Index>>& valid = {},
                                          const std::vector<std::pair<Index, Index>>& test = {}) {
  data::ImplicitDataset ds;
  ds.num_users = users;
  ds.num_items = items;
  for (Index u = 0; u < users; ++u) ds.user_tokens.push_back("u" + std::to_string(u));
  for (Index i = 0; i < items; ++i) ds.item_tokens.push_back("i" + std::to_string(i));
  for (auto [u, i] : train) ds.train.push_back({u, i});
  for (auto [u, i] : valid) ds.valid.push_back({u, i});
  for (auto [u, i] : test) ds.test.push_back({u, i});
  ds.rebuild_indexes();
  return ds;
}

/// Random bipartite graph where every user and every item has at least one edge.
template <typename Rng>
std::vector<std::pair<Index, Index>> random_edges(Index users, Index items, double density, Rng& rng) {
  std::set<std::pair<Index, Index>> edges;
  for (Index u = 0; u < users; ++u) edges.insert({u, u % items});
  for (Index i = 0; i < items; ++i) edges.insert({i % users, i});
  std::bernoulli_distribution keep(density);
  for (Index u = 0; u < users; ++u) {
    for (Index i = 0; i < items; ++i) {
      if (keep(rng)) edges.insert({u, i});
    }
  }
  return {edges.begin(), edges.end()};
}

template <typename Rng>
Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  }
  return m;
}

/// Dense normalized adjacency built from scratch: A_ab = 1/sqrt(deg_a deg_b) on edges.
inline Matrix dense_adjacency(Index users, Index items, const std::vector<std::pair<Index, Index>>& edges) {
  const Index n = users + items;
  Matrix a = Matrix::Zero(n, n);
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (auto [u, i] : edges) {
    deg[static_cast<std::size_t>(u)] += 1.0;
    deg[static_cast<std::size_t>(users + i)] += 1.0;
  }
  for (auto [u, i] : edges) {
    const double w = 1.0 / std::sqrt(deg[static_cast<std::size_t>(u)] * deg[static_cast<std::size_t>(users + i)]);
    a(u, users + i) = w;
    a(users + i, u) = w;
  }
  return a;
}

/// Batch from explicit triples.
inline data::TrainBatch make_batch(std::vector<data::Triple> triples) {
  data::TrainBatch b;
  b.triples = std::move(triples);
  b.index_nodes();
  return b;
}

/// Every user's train positives paired with one random negative.
template <typename Rng>
data::TrainBatch full_batch(const data::ImplicitDataset& ds, Rng& rng) {
  std::vector<data::Triple> t;
  for (const auto& e : ds.train) {
    const auto neg = data::sample_negative(std::span<const Index>(ds.train_positives[static_cast<std::size_t>(e.user)]),
                                           ds.num_items, rng);
    if (neg) t.push_back({e.user, e.item, *neg});
  }
  return make_batch(std::move(t));
}

}  // namespace rgcl::support
