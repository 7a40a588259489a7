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
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rgcl/types.hpp"

namespace rgcl::data {

struct RawInteraction {
  std::string user_token;
  std::string item_token;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;
};

enum class Column { kUser, kItem, kRating, kTimestamp, kSkip };

/// Column layout of a delimiter-separated interaction log.
struct Schema {
  std::string delimiter = "\t";
  std::vector<Column> columns{Column::kUser, Column::kItem};
  bool has_header = false;

  /// `spec` is a comma list drawn from {user, item, rating, timestamp, skip}.
  static Schema parse(std::string delimiter, std::string_view spec, bool has_header) {
    Schema schema;
    schema.delimiter = std::move(delimiter);
    schema.has_header = has_header;
    schema.columns.clear();
    if (schema.delimiter.empty()) throw ConfigError("schema delimiter must not be empty");
    std::size_t begin = 0;
    while (begin <= spec.size()) {
      const auto end = std::min(spec.find(',', begin), spec.size());
      const std::string_view name = spec.substr(begin, end - begin);
      if (name == "user") {
        schema.columns.push_back(Column::kUser);
      } else if (name == "item") {
        schema.columns.push_back(Column::kItem);
      } else if (name == "rating") {
        schema.columns.push_back(Column::kRating);
      } else if (name == "timestamp") {
        schema.columns.push_back(Column::kTimestamp);
      } else if (name == "skip") {
        schema.columns.push_back(Column::kSkip);
      } else {
        throw ConfigError("unknown schema column '" + std::string(name) + "'");
      }
      begin = end + 1;
    }
    const auto count = [&](Column c) { return std::count(schema.columns.begin(), schema.columns.end(), c); };
    if (count(Column::kUser) != 1 || count(Column::kItem) != 1) {
      throw ConfigError("schema needs exactly one user and one item column");
    }
    if (count(Column::kRating) > 1 || count(Column::kTimestamp) > 1) {
      throw ConfigError("schema repeats the rating or timestamp column");
    }
    return schema;
  }

  bool has_rating() const { return std::find(columns.begin(), columns.end(), Column::kRating) != columns.end(); }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, std::string_view delimiter) {
  std::vector<std::string_view> fields;
  std::size_t begin = 0;
  while (true) {
    const auto pos = line.find(delimiter, begin);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(begin));
      break;
    }
    fields.push_back(line.substr(begin, pos - begin));
    begin = pos + delimiter.size();
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// FNV-1a, 64 bit.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (const unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(std::uint64_t v) {
    char buf[8];
    for (int k = 0; k < 8; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    update(std::string_view(buf, 8));
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace detail

/// Parses interaction rows from a stream. Row numbers in errors are 1-based line numbers.
inline std::vector<RawInteraction> parse_interactions(std::istream& in, const Schema& schema) {
  std::vector<RawInteraction> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && schema.has_header) continue;
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    const auto fields = detail::split_fields(view, schema.delimiter);
    if (fields.size() < schema.columns.size()) {
      throw DataError("row " + std::to_string(line_no) + ": expected " + std::to_string(schema.columns.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    RawInteraction row;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const std::string_view field = detail::trim(fields[c]);
      switch (schema.columns[c]) {
        case Column::kUser:
          row.user_token = std::string(field);
          break;
        case Column::kItem:
          row.item_token = std::string(field);
          break;
        case Column::kRating: {
          const auto rating = detail::parse_number<double>(field);
          if (!rating) throw DataError("row " + std::to_string(line_no) + ": non-numeric rating '" + std::string(field) + "'");
          row.rating = *rating;
          break;
        }
        case Column::kTimestamp: {
          if (auto ts = detail::parse_number<std::int64_t>(field)) {
            row.timestamp = *ts;
          } else if (auto tsf = detail::parse_number<double>(field)) {
            row.timestamp = static_cast<std::int64_t>(*tsf);
          } else {
            throw DataError("row " + std::to_string(line_no) + ": non-numeric timestamp '" + std::string(field) + "'");
          }
          break;
        }
        case Column::kSkip:
          break;
      }
    }
    if (row.user_token.empty() || row.item_token.empty()) {
      throw DataError("row " + std::to_string(line_no) + ": empty user or item token");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<RawInteraction> load_interactions(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read interaction file " + path.string());
  return parse_interactions(in, schema);
}

using TokenPair = std::pair<std::string, std::string>;

/// Keeps rows rated strictly above `threshold` (unrated rows pass) and collapses duplicate pairs.
inline std::vector<TokenPair> binarize(std::span<const RawInteraction> raw, double threshold) {
  std::vector<TokenPair> out;
  std::set<TokenPair> seen;
  for (const auto& row : raw) {
    if (row.rating && !(*row.rating > threshold)) continue;
    TokenPair pair{row.user_token, row.item_token};
    if (seen.insert(pair).second) out.push_back(std::move(pair));
  }
  return out;
}

/// Iterated degree filter; the result is the maximal subgraph where every user and item has
/// degree >= min_count.
inline std::vector<TokenPair> kcore_filter(std::vector<TokenPair> pairs, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  while (true) {
    std::unordered_map<std::string, int> user_deg;
    std::unordered_map<std::string, int> item_deg;
    for (const auto& [u, i] : pairs) {
      ++user_deg[u];
      ++item_deg[i];
    }
    const auto before = pairs.size();
    std::erase_if(pairs, [&](const TokenPair& p) {
      return user_deg[p.first] < min_count || item_deg[p.second] < min_count;
    });
    if (pairs.size() == before) return pairs;
  }
}

struct Interaction {
  Index user = 0;
  Index item = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

struct SplitRatios {
  double train = 8.0;
  double valid = 1.0;
  double test = 1.0;
};

/// Dense re-indexed interactions with train/valid/test splits.
struct ImplicitDataset {
  Index num_users = 0;
  Index num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
  std::vector<std::string> user_tokens;
  std::vector<std::string> item_tokens;
  std::unordered_map<std::string, Index> user_index;
  std::unordered_map<std::string, Index> item_index;
  // Sorted train positives per user.
  std::vector<std::vector<Index>> train_positives;

  bool is_train_positive(Index user, Index item) const {
    const auto& pos = train_positives[static_cast<std::size_t>(user)];
    return std::binary_search(pos.begin(), pos.end(), item);
  }

  Index num_nodes() const { return num_users + num_items; }

  void rebuild_indexes() {
    user_index.clear();
    item_index.clear();
    for (std::size_t u = 0; u < user_tokens.size(); ++u) user_index.emplace(user_tokens[u], static_cast<Index>(u));
    for (std::size_t i = 0; i < item_tokens.size(); ++i) item_index.emplace(item_tokens[i], static_cast<Index>(i));
    train_positives.assign(static_cast<std::size_t>(num_users), {});
    for (const auto& e : train) train_positives[static_cast<std::size_t>(e.user)].push_back(e.item);
    for (auto& pos : train_positives) std::sort(pos.begin(), pos.end());
  }

  /// Per-user sorted item lists of a split.
  std::vector<std::vector<Index>> by_user(std::span<const Interaction> split) const {
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_users));
    for (const auto& e : split) out[static_cast<std::size_t>(e.user)].push_back(e.item);
    for (auto& items : out) std::sort(items.begin(), items.end());
    return out;
  }

  std::uint64_t fingerprint() const {
    detail::Fnv1a h;
    h.update(static_cast<std::uint64_t>(num_users));
    h.update(static_cast<std::uint64_t>(num_items));
    for (const auto& t : user_tokens) h.update(t + '\n');
    for (const auto& t : item_tokens) h.update(t + '\n');
    for (const auto* split : {&train, &valid, &test}) {
      h.update(static_cast<std::uint64_t>(split->size()));
      for (const auto& e : *split) {
        h.update(static_cast<std::uint64_t>(e.user));
        h.update(static_cast<std::uint64_t>(e.item));
      }
    }
    return h.digest();
  }
};

/// Global per-interaction shuffle under `seed`, cumulative-ratio partition, dense re-indexing
/// from the train split. Users or items unseen in train are dropped from valid/test.
inline ImplicitDataset split(std::span<const TokenPair> pairs, const SplitRatios& ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.valid + ratios.test;
  if (!(total > 0.0) || ratios.train < 0 || ratios.valid < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative with a positive sum");
  }
  std::vector<TokenPair> unique;
  {
    std::set<TokenPair> seen;
    for (const auto& p : pairs) {
      if (seen.insert(p).second) unique.push_back(p);
    }
  }
  if (unique.empty()) throw DataError("cannot split an empty interaction list");

  std::mt19937_64 rng(seed);
  std::shuffle(unique.begin(), unique.end(), rng);

  const auto n = static_cast<double>(unique.size());
  const auto boundary = [&](double cum) {
    return static_cast<std::size_t>(std::floor(n * cum / total + 1e-9));
  };
  const std::size_t train_end = boundary(ratios.train);
  const std::size_t valid_end = boundary(ratios.train + ratios.valid);

  ImplicitDataset ds;
  for (std::size_t k = 0; k < train_end; ++k) {
    const auto& [u, i] = unique[k];
    auto [uit, unew] = ds.user_index.try_emplace(u, static_cast<Index>(ds.user_tokens.size()));
    if (unew) ds.user_tokens.push_back(u);
    auto [iit, inew] = ds.item_index.try_emplace(i, static_cast<Index>(ds.item_tokens.size()));
    if (inew) ds.item_tokens.push_back(i);
    ds.train.push_back({uit->second, iit->second});
  }
  const auto place = [&](std::size_t from, std::size_t to, std::vector<Interaction>& out) {
    for (std::size_t k = from; k < to; ++k) {
      const auto uit = ds.user_index.find(unique[k].first);
      const auto iit = ds.item_index.find(unique[k].second);
      if (uit == ds.user_index.end() || iit == ds.item_index.end()) continue;
      out.push_back({uit->second, iit->second});
    }
  };
  place(train_end, valid_end, ds.valid);
  place(valid_end, unique.size(), ds.test);
  ds.num_users = static_cast<Index>(ds.user_tokens.size());
  ds.num_items = static_cast<Index>(ds.item_tokens.size());
  ds.rebuild_indexes();
  return ds;
}

inline constexpr std::string_view kDatasetMagic = "rgcl-dataset";
inline constexpr int kDatasetVersion = 1;

/// Plain-text cache: magic + version header, token tables, then the three edge lists.
inline void save_dataset(const ImplicitDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset cache " + path.string());
  out << kDatasetMagic << ' ' << kDatasetVersion << '\n';
  out << "users " << ds.num_users << '\n';
  for (const auto& t : ds.user_tokens) out << t << '\n';
  out << "items " << ds.num_items << '\n';
  for (const auto& t : ds.item_tokens) out << t << '\n';
  const auto write_split = [&](std::string_view name, const std::vector<Interaction>& split) {
    out << name << ' ' << split.size() << '\n';
    for (const auto& e : split) out << e.user << ' ' << e.item << '\n';
  };
  write_split("train", ds.train);
  write_split("valid", ds.valid);
  write_split("test", ds.test);
  if (!out) throw DataError("failed writing dataset cache " + path.string());
}

inline ImplicitDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read dataset cache " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kDatasetMagic) throw DataError(path.string() + " is not a dataset cache");
  if (version != kDatasetVersion) throw DataError("unsupported dataset cache version " + std::to_string(version));

  const auto expect_section = [&](std::string_view name) {
    std::string tag;
    long long count = -1;
    if (!(in >> tag >> count) || tag != name || count < 0) {
      throw DataError("dataset cache: missing section '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(count);
  };
  ImplicitDataset ds;
  const auto read_tokens = [&](std::size_t count, std::vector<std::string>& tokens) {
    std::string line;
    std::getline(in, line);
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(in, line)) throw DataError("dataset cache: truncated token table");
      tokens.push_back(line);
    }
  };
  read_tokens(expect_section("users"), ds.user_tokens);
  read_tokens(expect_section("items"), ds.item_tokens);
  ds.num_users = static_cast<Index>(ds.user_tokens.size());
  ds.num_items = static_cast<Index>(ds.item_tokens.size());
  const auto read_split = [&](std::string_view name, std::vector<Interaction>& split) {
    const auto count = expect_section(name);
    split.resize(count);
    for (auto& e : split) {
      if (!(in >> e.user >> e.item)) throw DataError("dataset cache: truncated split " + std::string(name));
      if (e.user < 0 || e.user >= ds.num_users || e.item < 0 || e.item >= ds.num_items) {
        throw DataError("dataset cache: index out of range in split " + std::string(name));
      }
    }
  };
  read_split("train", ds.train);
  read_split("valid", ds.valid);
  read_split("test", ds.test);
  ds.rebuild_indexes();
  return ds;
}

struct Triple {
  Index user = 0;
  Index pos = 0;
  Index neg = 0;
};

struct TrainBatch {
  std::vector<Triple> triples;
  // Distinct users / items in first-appearance order (items: positives and negatives).
  std::vector<Index> users;
  std::vector<Index> items;
  // Pairs whose user has every item as a positive; no negative exists.
  std::size_t skipped = 0;

  void index_nodes() {
    users.clear();
    items.clear();
    std::unordered_set<Index> seen_u;
    std::unordered_set<Index> seen_i;
    for (const auto& t : triples) {
      if (seen_u.insert(t.user).second) users.push_back(t.user);
    }
    for (const auto& t : triples) {
      if (seen_i.insert(t.pos).second) items.push_back(t.pos);
    }
    for (const auto& t : triples) {
      if (seen_i.insert(t.neg).second) items.push_back(t.neg);
    }
  }
};

/// Uniform draw from {0..num_items-1} minus `positives` (sorted) by rejection.
/// Returns nullopt when the complement is empty.
template <typename Rng>
std::optional<Index> sample_negative(std::span<const Index> positives, Index num_items, Rng& rng) {
  if (static_cast<Index>(positives.size()) >= num_items) return std::nullopt;
  std::uniform_int_distribution<Index> pick(0, num_items - 1);
  while (true) {
    const Index candidate = pick(rng);
    if (!std::binary_search(positives.begin(), positives.end(), candidate)) return candidate;
  }
}

/// Walks the train split in a fresh random order each epoch, pairing every positive with a
/// newly drawn negative.
class EpochSampler {
 public:
  EpochSampler(const ImplicitDataset& ds, Index batch_size, std::uint64_t seed)
      : ds_(&ds), batch_size_(batch_size), rng_(seed) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (ds.train.empty()) throw DataError("train split is empty");
    order_.resize(ds.train.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    cursor_ = order_.size();
  }

  /// The epoch order depends only on the RNG state, so a restored RNG replays the same epoch.
  void start_epoch() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  bool epoch_done() const { return cursor_ >= order_.size(); }

  std::size_t batches_per_epoch() const {
    return (order_.size() + static_cast<std::size_t>(batch_size_) - 1) / static_cast<std::size_t>(batch_size_);
  }

  /// Next batch of the current epoch; empty triples once the epoch is exhausted.
  TrainBatch next_batch() {
    TrainBatch batch;
    const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
    for (; cursor_ < end; ++cursor_) {
      const auto& e = ds_->train[order_[cursor_]];
      const auto neg = sample_negative(std::span<const Index>(ds_->train_positives[static_cast<std::size_t>(e.user)]),
                                       ds_->num_items, rng_);
      if (!neg) {
        ++batch.skipped;
        continue;
      }
      batch.triples.push_back({e.user, e.item, *neg});
    }
    batch.index_nodes();
    return batch;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  const ImplicitDataset* ds_;
  Index batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

struct DatasetStats {
  Index users = 0;
  Index items = 0;
  std::size_t interactions = 0;
  double sparsity = 0.0;  // 1 - interactions / (users * items)
};

inline DatasetStats stats(const ImplicitDataset& ds) {
  DatasetStats s;
  s.users = ds.num_users;
  s.items = ds.num_items;
  s.interactions = ds.train.size() + ds.valid.size() + ds.test.size();
  const double cells = static_cast<double>(ds.num_users) * static_cast<double>(ds.num_items);
  s.sparsity = cells > 0 ? 1.0 - static_cast<double>(s.interactions) / cells : 0.0;
  return s;
}

}  // namespace rgcl::data
