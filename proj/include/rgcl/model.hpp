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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rgcl/dataset.hpp"
#include "rgcl/graph.hpp"
#include "rgcl/types.hpp"

namespace rgcl::model {

/// (M+N) x d; rows 0..M-1 are users, M..M+N-1 items.
using EmbeddingTable = Matrix;

/// Xavier-uniform on a d x d fan: entries i.i.d. U[-a, a] with a = sqrt(6 / (d + d)).
inline EmbeddingTable init_embeddings(Index num_nodes, Index dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(dim + dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> draw(-bound, bound);
  EmbeddingTable e(num_nodes, dim);
  for (Index r = 0; r < num_nodes; ++r) {
    for (Index c = 0; c < dim; ++c) e(r, c) = draw(rng);
  }
  return e;
}

/// H^(0) = E, H^(l) = Â H^(l-1).
struct LayerStack {
  std::vector<Matrix> layers;

  Index depth() const { return static_cast<Index>(layers.size()) - 1; }
  const Matrix& operator[](Index l) const { return layers[static_cast<std::size_t>(l)]; }
  Index rows() const { return layers.front().rows(); }
  Index dim() const { return layers.front().cols(); }
};

inline LayerStack forward(const graph::NormalizedAdjacency& adj, const EmbeddingTable& e, Index num_layers) {
  if (num_layers < 0) throw ConfigError("layer count must be >= 0");
  LayerStack stack;
  stack.layers.reserve(static_cast<std::size_t>(num_layers) + 1);
  stack.layers.push_back(e);
  for (Index l = 1; l <= num_layers; ++l) stack.layers.push_back(graph::propagate(adj, stack.layers.back()));
  return stack;
}

/// Per-node, per-layer additive perturbations for a subset of nodes. Layers are keyed 1..L;
/// the raw embedding layer 0 is never perturbed.
struct LayerPerturbations {
  std::vector<Index> nodes;
  std::map<Index, Matrix> by_layer;  // layer -> |nodes| x d

  /// Sum over layers divided by (L+1): the shift each node's aggregate receives.
  Matrix displacement(Index num_layers, Index dim) const {
    Matrix shift = Matrix::Zero(static_cast<Index>(nodes.size()), dim);
    for (const auto& [layer, values] : by_layer) {
      if (layer < 1 || layer > num_layers) {
        throw std::invalid_argument("perturbation layer " + std::to_string(layer) + " outside 1..L");
      }
      shift += values;
    }
    return shift / static_cast<double>(num_layers + 1);
  }
};

/// Z_n = (1/(L+1)) sum_l (H_n^(l) + p_n^(l)).
inline Matrix aggregate(const LayerStack& stack, const LayerPerturbations* perturb = nullptr) {
  const Index depth = stack.depth();
  Matrix z = stack[0];
  for (Index l = 1; l <= depth; ++l) z += stack[l];
  z /= static_cast<double>(depth + 1);
  if (perturb != nullptr) {
    const Matrix shift = perturb->displacement(depth, stack.dim());
    for (std::size_t k = 0; k < perturb->nodes.size(); ++k) z.row(perturb->nodes[k]) += shift.row(static_cast<Index>(k));
  }
  return z;
}

/// Aggregates of a subset of rows.
inline Matrix gather_rows(const Matrix& z, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), z.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = z.row(rows[k]);
  return out;
}

/// <Z_u, Z_{M+i}>.
inline double score(const Matrix& z, Index num_users, Index user, Index item) {
  if (user < 0 || user >= num_users || item < 0 || num_users + item >= z.rows()) {
    throw std::out_of_range("score: user or item index out of range");
  }
  return z.row(user).dot(z.row(num_users + item));
}

/// Tab-separated matrix with a header row: kind, token, d0..d{d-1}.
inline void export_embeddings(const std::filesystem::path& path, const Matrix& table, const data::ImplicitDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embeddings to " + path.string());
  out << "kind\ttoken";
  for (Index c = 0; c < table.cols(); ++c) out << "\td" << c;
  out << '\n' << std::setprecision(17);
  for (Index r = 0; r < table.rows(); ++r) {
    const bool is_user = r < ds.num_users;
    out << (is_user ? "user" : "item") << '\t'
        << (is_user ? ds.user_tokens[static_cast<std::size_t>(r)] : ds.item_tokens[static_cast<std::size_t>(r - ds.num_users)]);
    for (Index c = 0; c < table.cols(); ++c) out << '\t' << table(r, c);
    out << '\n';
  }
}

}  // namespace rgcl::model
