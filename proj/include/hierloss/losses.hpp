/*
 * Copyright 2026 The hierloss Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hierloss/common.hpp"

namespace hierloss {

enum class LossKind : std::uint8_t { kLeaf, kPerLevel, kBinary, kTriplet };

// Display order; also the order components are combined in.
inline constexpr std::array<LossKind, 4> kAllLossKinds = {LossKind::kLeaf, LossKind::kPerLevel,
                                                         LossKind::kBinary, LossKind::kTriplet};

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kLeaf: return "L";
    case LossKind::kPerLevel: return "PL";
    case LossKind::kBinary: return "B";
    case LossKind::kTriplet: return "T";
  }
  return "?";
}

// A subset of {L, PL, B, T}, written like "PL+B+T".
class LossSet {
 public:
  constexpr LossSet() = default;
  constexpr LossSet(std::initializer_list<LossKind> kinds) {
    for (auto k : kinds) insert(k);
  }

  static LossSet parse(std::string_view text) {
    LossSet out;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = std::min(text.find('+', start), text.size());
      const auto token = text.substr(start, end - start);
      bool matched = false;
      for (auto k : kAllLossKinds) {
        if (token == hierloss::to_string(k)) {
          detail::require(!out.contains(k), "losses: '", token, "' repeated in '", text, "'");
          out.insert(k);
          matched = true;
        }
      }
      detail::require(matched, "losses: unknown loss '", token, "' in '", text, "'");
      start = end + 1;
    }
    return out;
  }

  constexpr void insert(LossKind k) { bits_ |= bit(k); }
  constexpr bool contains(LossKind k) const { return (bits_ & bit(k)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }

  std::string to_string() const {
    std::string out;
    for (auto k : kAllLossKinds) {
      if (!contains(k)) continue;
      if (!out.empty()) out += '+';
      out += hierloss::to_string(k);
    }
    return out;
  }

  constexpr bool operator==(const LossSet&) const = default;

 private:
  static constexpr std::uint8_t bit(LossKind k) { return std::uint8_t{1} << static_cast<int>(k); }
  std::uint8_t bits_ = 0;
};

struct LossConfig {
  LossSet active;
  double margin = 0.3;

  void validate() const {
    detail::require(!active.empty(), "losses: no active loss");
    detail::require(margin > 0.0, "losses: margin must be positive, got ", margin);
  }
};

struct LossValue {
  double total = 0.0;
  std::map<LossKind, double> per_component;
};

// Uniform weighting: plain sum of the active components.
inline LossValue combine(const std::map<LossKind, double>& components, LossSet active) {
  LossValue out;
  for (auto k : kAllLossKinds) {
    if (!active.contains(k)) continue;
    auto it = components.find(k);
    detail::require(it != components.end(), "losses: missing component ", to_string(k));
    out.per_component[k] = it->second;
    out.total += it->second;
  }
  return out;
}

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

namespace detail {

inline double dot(std::span<const double> u, std::span<const double> v) {
  return std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace detail

struct CosineDistance {
  double value = 0.0;
  std::vector<double> grad_u, grad_v;
};

// -(u.v)/(|u||v|); gradients included.
inline CosineDistance cosine_distance_grad(std::span<const double> u, std::span<const double> v) {
  detail::require(u.size() == v.size(), "losses: vector sizes differ (", u.size(), " vs ", v.size(), ")");
  const double nu = std::sqrt(detail::dot(u, u));
  const double nv = std::sqrt(detail::dot(v, v));
  detail::require(nu > 0.0 && nv > 0.0, "losses: cosine distance of a zero vector");
  const double cos = detail::dot(u, v) / (nu * nv);
  CosineDistance out{-cos, std::vector<double>(u.size()), std::vector<double>(v.size())};
  for (std::size_t i = 0; i < u.size(); ++i) {
    out.grad_u[i] = -(v[i] / nv - cos * u[i] / nu) / nu;
    out.grad_v[i] = -(u[i] / nu - cos * v[i] / nv) / nv;
  }
  return out;
}

inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  detail::require(u.size() == v.size(), "losses: vector sizes differ (", u.size(), " vs ", v.size(), ")");
  const double nu = std::sqrt(detail::dot(u, u));
  const double nv = std::sqrt(detail::dot(v, v));
  detail::require(nu > 0.0 && nv > 0.0, "losses: cosine distance of a zero vector");
  return -detail::dot(u, v) / (nu * nv);
}

inline double triplet_hinge(double d_ap, double d_an, double margin) {
  return std::max(0.0, d_ap - d_an + margin);
}

struct TripletLoss {
  double value = 0.0;
  std::vector<double> grad_a, grad_p, grad_n;
};

// max(0, d_ap - d_an + margin) with cosine distances. The subgradient at the
// kink is zero.
inline TripletLoss triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                                std::span<const double> negative, double margin) {
  detail::require(margin > 0.0, "losses: margin must be positive, got ", margin);
  const auto ap = cosine_distance_grad(anchor, positive);
  const auto an = cosine_distance_grad(anchor, negative);
  TripletLoss out;
  const double h = ap.value - an.value + margin;
  const auto dim = anchor.size();
  out.grad_a.assign(dim, 0.0);
  out.grad_p.assign(dim, 0.0);
  out.grad_n.assign(dim, 0.0);
  if (h <= 0.0) return out;
  out.value = h;
  for (std::size_t i = 0; i < dim; ++i) {
    out.grad_a[i] = ap.grad_u[i] - an.grad_u[i];
    out.grad_p[i] = ap.grad_v[i];
    out.grad_n[i] = -an.grad_v[i];
  }
  return out;
}

// Mean over nodes of weighted binary cross-entropy on sigmoid(logit); the
// node weight scales the positive (member) term only.
inline LossGrad binary_node_loss(std::span<const double> logits, std::span<const std::uint8_t> membership,
                                 std::span<const double> weights) {
  detail::require(logits.size() == membership.size() && logits.size() == weights.size(),
                  "losses: binary head size mismatch (logits ", logits.size(), ", membership ",
                  membership.size(), ", weights ", weights.size(), ")");
  detail::require(!logits.empty(), "losses: binary head over zero nodes");
  const double inv = 1.0 / static_cast<double>(logits.size());
  LossGrad out{0.0, std::vector<double>(logits.size())};
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double z = logits[j];
    if (membership[j]) {
      out.value += weights[j] * detail::softplus(-z);
      out.grad[j] = weights[j] * (detail::sigmoid(z) - 1.0) * inv;
    } else {
      out.value += detail::softplus(z);
      out.grad[j] = detail::sigmoid(z) * inv;
    }
  }
  out.value *= inv;
  return out;
}

// w_target * -log softmax(logits)[target], in log-sum-exp form.
inline LossGrad multiclass_loss(std::span<const double> logits, std::size_t target,
                                std::span<const double> weights) {
  detail::require(!logits.empty() && logits.size() == weights.size(), "losses: head size mismatch (logits ",
                  logits.size(), ", weights ", weights.size(), ")");
  detail::require(target < logits.size(), "losses: target ", target, " out of range for ", logits.size(),
                  " classes");
  const double lse = detail::log_sum_exp(logits);
  const double w = weights[target];
  LossGrad out{w * (lse - logits[target]), std::vector<double>(logits.size())};
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = w * std::exp(logits[i] - lse);
  out.grad[target] -= w;
  return out;
}

// Leaf loss is the multi-class loss over the seen-leaf class set.
inline LossGrad leaf_loss(std::span<const double> logits, std::size_t target_leaf,
                          std::span<const double> weights) {
  return multiclass_loss(logits, target_leaf, weights);
}

struct LevelHeadInput {
  std::span<const double> logits;
  std::size_t target = 0;
  std::span<const double> weights;
};

struct PerLevelLoss {
  double value = 0.0;
  std::vector<std::vector<double>> grads;  // one per level
};

// Unnormalised sum of one multi-class loss per retained level.
inline PerLevelLoss per_level_loss(std::span<const LevelHeadInput> heads, std::size_t expected_levels) {
  detail::require(heads.size() == expected_levels, "losses: ", heads.size(), " level heads for ",
                  expected_levels, " levels");
  PerLevelLoss out;
  for (const auto& h : heads) {
    auto term = multiclass_loss(h.logits, h.target, h.weights);
    out.value += term.value;
    out.grads.push_back(std::move(term.grad));
  }
  return out;
}

// Inverse-frequency weights scaled to mean 1.
inline std::vector<double> class_weights(std::span<const std::size_t> counts) {
  detail::require(!counts.empty(), "losses: no classes to weight");
  std::vector<double> w;
  w.reserve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    detail::require(counts[i] > 0, "losses: class ", i, " has zero samples");
    w.push_back(1.0 / static_cast<double>(counts[i]));
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (auto& v : w) v /= mean;
  return w;
}

}  // namespace hierloss
