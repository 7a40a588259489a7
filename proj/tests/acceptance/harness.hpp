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
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rgcl/rgcl.hpp"

namespace rgcl::acceptance {

/// Large temporaries (similarity matrices) otherwise go through mmap/munmap on every step.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

enum class Status { kPass, kFail, kSkip };

struct Line {
  std::string id;
  Status status;
  std::string text;
};

class Report {
 public:
  void add(std::string id, Status s, std::string text) {
    const char* tag = s == Status::kPass ? "PASS" : (s == Status::kFail ? "FAIL" : "SKIP");
    std::printf("[%s] %s %s\n", tag, id.c_str(), text.c_str());
    std::fflush(stdout);
    lines_.push_back({std::move(id), s, std::move(text)});
  }
  void check(std::string id, bool ok, std::string text) { add(std::move(id), ok ? Status::kPass : Status::kFail, std::move(text)); }

  int failures() const {
    int n = 0;
    for (const auto& l : lines_) n += l.status == Status::kFail;
    return n;
  }
  int skips() const {
    int n = 0;
    for (const auto& l : lines_) n += l.status == Status::kSkip;
    return n;
  }

 private:
  std::vector<Line> lines_;
};

inline std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

/// splitmix64; only used to draw many comparison directions cheaply.
struct FastUniform {
  std::uint64_t s;
  double operator()() {  // U(-1, 1)
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
  }
};

/// Per-step audit of the perturbation constraints: |r~| <= |Δ| elementwise for every view,
/// ||η||_inf <= δ per node and layer, and <G, η> >= <G, η'> for random feasible η'.
struct ConstraintAudit {
  int samples = 1000;
  std::uint64_t seed = 1;
  std::size_t steps = 0;
  std::size_t box_checks = 0;
  std::size_t box_violations = 0;
  std::size_t eta_checks = 0;
  std::size_t eta_violations = 0;
  std::size_t fgsm_checks = 0;
  std::size_t fgsm_violations = 0;
  double seconds = 0.0;

  void operator()(const data::TrainBatch&, const model::LayerStack&, const Matrix&, const train::StepPerturbations& p) {
    Stopwatch sw;
    ++steps;
    FastUniform unit{seed + 0x1234567ULL * steps};
    for (const auto* side : {&p.users, &p.items}) {
      const auto& b = side->boundary;
      const auto box = [&](const augment::RandomNoise& n) {
        for (std::size_t l = 0; l < n.constrained.size(); ++l) {
          const Matrix& r = n.constrained[l];
          const Matrix& d = b.delta[l];
          for (Index i = 0; i < r.rows(); ++i) {
            for (Index c = 0; c < r.cols(); ++c) {
              ++box_checks;
              box_violations += std::abs(r(i, c)) > std::abs(d(i, c));
            }
          }
        }
      };
      box(side->first);
      box(side->second);
      box(side->third);
      if (!side->ac) continue;
      const Matrix& g = side->ac->gradient;
      for (std::size_t l = 0; l < side->ac->eta.size(); ++l) {
        const Matrix& eta = side->ac->eta[l];
        const Vector& bound = b.bound[l];
        for (Index i = 0; i < eta.rows(); ++i) {
          ++eta_checks;
          eta_violations += eta.row(i).cwiseAbs().maxCoeff() > bound(i);
        }
        const double best = (g.array() * eta.array()).sum();
        for (int s = 0; s < samples; ++s) {
          double other = 0.0;
          for (Index i = 0; i < g.rows(); ++i) {
            double row = 0.0;
            for (Index c = 0; c < g.cols(); ++c) row += g(i, c) * unit();
            other += bound(i) * row;
          }
          ++fgsm_checks;
          fgsm_violations += other > best;
        }
      }
    }
    seconds += sw.seconds();
  }

  std::size_t violations() const { return box_violations + eta_violations + fgsm_violations; }
};

}  // namespace rgcl::acceptance
