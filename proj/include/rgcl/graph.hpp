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
#include <cassert>
#include <cmath>
#include <span>
#include <vector>

#include "rgcl/dataset.hpp"
#include "rgcl/types.hpp"

namespace rgcl::graph {

/// Symmetric-normalized bipartite adjacency over the unified node space
/// (users 0..M-1, items M..M+N-1), compressed sparse rows.
///
/// Entry (a, b) = 1 / sqrt(deg(a) * deg(b)) for every train interaction edge. Columns within a
/// row are sorted, so the per-row summation order in propagate() is fixed.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  Index size() const { return static_cast<Index>(row_offsets_.size()) - 1; }
  Index num_users() const { return num_users_; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const Index> row_offsets() const { return row_offsets_; }
  std::span<const Index> cols() const { return cols_; }
  std::span<const double> vals() const { return vals_; }
  std::span<const Index> degrees() const { return degrees_; }

  std::span<const Index> neighbors(Index node) const {
    const auto begin = static_cast<std::size_t>(row_offsets_[static_cast<std::size_t>(node)]);
    const auto end = static_cast<std::size_t>(row_offsets_[static_cast<std::size_t>(node) + 1]);
    return std::span<const Index>(cols_).subspan(begin, end - begin);
  }

  bool has_edge(Index a, Index b) const {
    const auto nb = neighbors(a);
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  /// Dense copy, for tests and tiny instances only.
  Matrix to_dense() const {
    Matrix dense = Matrix::Zero(size(), size());
    for (Index r = 0; r < size(); ++r) {
      for (Index k = row_offsets_[static_cast<std::size_t>(r)]; k < row_offsets_[static_cast<std::size_t>(r) + 1]; ++k) {
        dense(r, cols_[static_cast<std::size_t>(k)]) = vals_[static_cast<std::size_t>(k)];
      }
    }
    return dense;
  }

  static NormalizedAdjacency from_edges(Index num_users, Index num_items, std::span<const data::Interaction> edges) {
    if (edges.empty()) throw DataError("cannot build adjacency from an empty train split");
    const Index n = num_users + num_items;
    NormalizedAdjacency adj;
    adj.num_users_ = num_users;
    adj.degrees_.assign(static_cast<std::size_t>(n), 0);
    for (const auto& e : edges) {
      if (e.user < 0 || e.user >= num_users || e.item < 0 || e.item >= num_items) {
        throw DataError("train edge index out of range");
      }
      ++adj.degrees_[static_cast<std::size_t>(e.user)];
      ++adj.degrees_[static_cast<std::size_t>(num_users + e.item)];
    }
    adj.row_offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
    for (Index v = 0; v < n; ++v) {
      adj.row_offsets_[static_cast<std::size_t>(v) + 1] = adj.row_offsets_[static_cast<std::size_t>(v)] + adj.degrees_[static_cast<std::size_t>(v)];
    }
    adj.cols_.assign(2 * edges.size(), 0);
    std::vector<Index> fill(adj.row_offsets_.begin(), adj.row_offsets_.end() - 1);
    for (const auto& e : edges) {
      const Index u = e.user;
      const Index i = num_users + e.item;
      adj.cols_[static_cast<std::size_t>(fill[static_cast<std::size_t>(u)]++)] = i;
      adj.cols_[static_cast<std::size_t>(fill[static_cast<std::size_t>(i)]++)] = u;
    }
    adj.vals_.assign(adj.cols_.size(), 0.0);
    for (Index r = 0; r < n; ++r) {
      const auto begin = adj.cols_.begin() + adj.row_offsets_[static_cast<std::size_t>(r)];
      const auto end = adj.cols_.begin() + adj.row_offsets_[static_cast<std::size_t>(r) + 1];
      std::sort(begin, end);
      if (std::adjacent_find(begin, end) != end) throw DataError("duplicate train edge");
      for (Index k = adj.row_offsets_[static_cast<std::size_t>(r)]; k < adj.row_offsets_[static_cast<std::size_t>(r) + 1]; ++k) {
        const Index c = adj.cols_[static_cast<std::size_t>(k)];
        const auto dr = static_cast<double>(adj.degrees_[static_cast<std::size_t>(r)]);
        const auto dc = static_cast<double>(adj.degrees_[static_cast<std::size_t>(c)]);
        assert(dr > 0 && dc > 0);
        adj.vals_[static_cast<std::size_t>(k)] = 1.0 / std::sqrt(dr * dc);
      }
    }
    return adj;
  }

 private:
  Index num_users_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> cols_;
  std::vector<double> vals_;
  std::vector<Index> degrees_;
};

inline NormalizedAdjacency build_adjacency(const data::ImplicitDataset& ds) {
  return NormalizedAdjacency::from_edges(ds.num_users, ds.num_items, ds.train);
}

/// out = Â · H. Each output row is owned by one iteration; summation order follows the sorted
/// column order, so results do not depend on the thread count.
inline void propagate_into(const NormalizedAdjacency& adj, const Matrix& h, Matrix& out) {
  if (h.rows() != adj.size()) throw std::invalid_argument("propagate: row count does not match adjacency size");
  out.resize(h.rows(), h.cols());
  const auto offsets = adj.row_offsets();
  const auto cols = adj.cols();
  const auto vals = adj.vals();
  const Index n = adj.size();
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < n; ++r) {
    auto row = out.row(r);
    row.setZero();
    for (Index k = offsets[static_cast<std::size_t>(r)]; k < offsets[static_cast<std::size_t>(r) + 1]; ++k) {
      row.noalias() += vals[static_cast<std::size_t>(k)] * h.row(cols[static_cast<std::size_t>(k)]);
    }
  }
}

inline Matrix propagate(const NormalizedAdjacency& adj, const Matrix& h) {
  Matrix out;
  propagate_into(adj, h, out);
  return out;
}

}  // namespace rgcl::graph
