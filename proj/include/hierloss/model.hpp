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

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/random.hpp"
#include "json.hpp"

namespace hierloss {

// Layer sizes. A zero-sized leaf/binary head and an empty level list mean
// "no such head".
struct ModelShape {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {64};
  std::size_t embedding_dim = 32;
  std::size_t leaf_classes = 0;
  std::vector<std::size_t> level_classes;
  std::size_t binary_nodes = 0;

  bool operator==(const ModelShape&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelShape& s) {
  j = nlohmann::json{{"input_dim", s.input_dim},       {"hidden", s.hidden},
                     {"embedding_dim", s.embedding_dim}, {"leaf_classes", s.leaf_classes},
                     {"level_classes", s.level_classes}, {"binary_nodes", s.binary_nodes}};
}

inline void from_json(const nlohmann::json& j, ModelShape& s) {
  j.at("input_dim").get_to(s.input_dim);
  j.at("hidden").get_to(s.hidden);
  j.at("embedding_dim").get_to(s.embedding_dim);
  j.at("leaf_classes").get_to(s.leaf_classes);
  j.at("level_classes").get_to(s.level_classes);
  j.at("binary_nodes").get_to(s.binary_nodes);
}

// Affine map y = W x + b over a slice of the flat parameter vector; W is
// row-major (out x in) and b follows it.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;

  std::size_t size() const { return out * in + out; }

  void apply(std::span<const double> params, std::span<const double> x, std::span<double> y) const {
    const double* w = params.data() + offset;
    const double* b = w + out * in;
    for (std::size_t r = 0; r < out; ++r) {
      double acc = b[r];
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  }

  // Accumulates dL/dW, dL/db into `grad` and adds W^T dy to `dx` (if given).
  void backward(std::span<const double> params, std::span<const double> x, std::span<const double> dy,
                std::span<double> grad, std::span<double> dx) const {
    const double* w = params.data() + offset;
    double* gw = grad.data() + offset;
    double* gb = gw + out * in;
    for (std::size_t r = 0; r < out; ++r) {
      const double g = dy[r];
      if (g == 0.0) continue;
      gb[r] += g;
      double* grow = gw + r * in;
      const double* row = w + r * in;
      for (std::size_t c = 0; c < in; ++c) grow[c] += g * x[c];
      if (!dx.empty()) {
        for (std::size_t c = 0; c < in; ++c) dx[c] += g * row[c];
      }
    }
  }
};

// Feed-forward embedder (tanh between affine layers, linear last layer) with
// linear prediction heads on the embedding.
class EmbeddingModel {
 public:
  struct Output {
    std::vector<double> embedding;
    std::vector<double> leaf;
    std::vector<std::vector<double>> levels;
    std::vector<double> binary;
  };

  // dL/d(output); empty vectors mean "no gradient from this head".
  using OutputGrad = Output;

  // Per-layer activations kept for backward().
  struct Trace {
    std::vector<std::vector<double>> inputs;  // input of each embedder layer
    Output output;
  };

  EmbeddingModel() = default;

  EmbeddingModel(ModelShape shape, std::uint64_t seed) : shape_(std::move(shape)), seed_(seed) {
    layout();
    auto rng = make_rng(seed, Stream::kModelInit);
    // Xavier-uniform weights, zero biases; layer order fixes the draw order.
    auto init = [&](const DenseLayer& l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
      for (std::size_t i = 0; i < l.out * l.in; ++i) params_[l.offset + i] = uniform_real(rng, -limit, limit);
    };
    for (const auto& l : embedder_) init(l);
    if (leaf_head_) init(*leaf_head_);
    for (const auto& l : level_heads_) init(l);
    if (binary_head_) init(*binary_head_);
  }

  const ModelShape& shape() const { return shape_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }
  std::size_t num_parameters() const { return params_.size(); }
  bool has_leaf_head() const { return leaf_head_.has_value(); }
  bool has_level_heads() const { return !level_heads_.empty(); }
  bool has_binary_head() const { return binary_head_.has_value(); }

  Output forward(std::span<const double> x) const {
    Trace trace;
    forward(x, trace);
    return std::move(trace.output);
  }

  void forward(std::span<const double> x, Trace& trace) const {
    detail::require(x.size() == shape_.input_dim, "model: input has ", x.size(), " features, expected ",
                    shape_.input_dim);
    trace.inputs.assign(1, std::vector<double>(x.begin(), x.end()));
    for (std::size_t i = 0; i < embedder_.size(); ++i) {
      std::vector<double> y(embedder_[i].out);
      embedder_[i].apply(params_, trace.inputs.back(), y);
      if (i + 1 < embedder_.size()) {
        for (auto& v : y) v = std::tanh(v);
        trace.inputs.push_back(std::move(y));
      } else {
        trace.output.embedding = std::move(y);
      }
    }
    auto& out = trace.output;
    const auto& e = out.embedding;
    auto head = [&](const DenseLayer& l) {
      std::vector<double> z(l.out);
      l.apply(params_, e, z);
      return z;
    };
    out.leaf = leaf_head_ ? head(*leaf_head_) : std::vector<double>{};
    out.levels.clear();
    for (const auto& l : level_heads_) out.levels.push_back(head(l));
    out.binary = binary_head_ ? head(*binary_head_) : std::vector<double>{};
  }

  // Accumulates the parameter gradient of a scalar loss into `grad`.
  void backward(const Trace& trace, const OutputGrad& d, std::span<double> grad) const {
    detail::require(grad.size() == params_.size(), "model: gradient buffer has wrong size");
    const auto& e = trace.output.embedding;
    std::vector<double> de(shape_.embedding_dim, 0.0);
    if (!d.embedding.empty()) de = d.embedding;
    if (leaf_head_ && !d.leaf.empty()) leaf_head_->backward(params_, e, d.leaf, grad, de);
    for (std::size_t i = 0; i < level_heads_.size() && i < d.levels.size(); ++i) {
      if (!d.levels[i].empty()) level_heads_[i].backward(params_, e, d.levels[i], grad, de);
    }
    if (binary_head_ && !d.binary.empty()) binary_head_->backward(params_, e, d.binary, grad, de);

    std::vector<double> dy = std::move(de);
    for (std::size_t i = embedder_.size(); i-- > 0;) {
      const auto& x = trace.inputs[i];
      std::vector<double> dx(i > 0 ? x.size() : 0, 0.0);
      embedder_[i].backward(params_, x, dy, grad, dx);
      if (i == 0) break;
      // x = tanh(z) for every layer input after the first.
      for (std::size_t c = 0; c < dx.size(); ++c) dx[c] *= 1.0 - x[c] * x[c];
      dy = std::move(dx);
    }
  }

  // Shapes plus every tensor as a flat array.
  nlohmann::json to_json() const {
    nlohmann::json tensors = nlohmann::json::array();
    auto dump = [&](const std::string& name, const DenseLayer& l) {
      const auto first = params_.begin() + static_cast<std::ptrdiff_t>(l.offset);
      tensors.push_back({{"name", name + ".weight"},
                         {"shape", {l.out, l.in}},
                         {"values", std::vector<double>(first, first + static_cast<std::ptrdiff_t>(l.out * l.in))}});
      const auto bias = first + static_cast<std::ptrdiff_t>(l.out * l.in);
      tensors.push_back({{"name", name + ".bias"},
                         {"shape", {l.out}},
                         {"values", std::vector<double>(bias, bias + static_cast<std::ptrdiff_t>(l.out))}});
    };
    for (std::size_t i = 0; i < embedder_.size(); ++i) dump("embedder." + std::to_string(i), embedder_[i]);
    if (leaf_head_) dump("head.leaf", *leaf_head_);
    for (std::size_t i = 0; i < level_heads_.size(); ++i) dump("head.level." + std::to_string(i), level_heads_[i]);
    if (binary_head_) dump("head.binary", *binary_head_);
    return {{"shape", shape_}, {"seed", seed_}, {"tensors", tensors}};
  }

  static EmbeddingModel from_json(const nlohmann::json& j) {
    EmbeddingModel m;
    try {
      m.shape_ = j.at("shape").get<ModelShape>();
      m.seed_ = j.at("seed").get<std::uint64_t>();
      m.layout();
      std::size_t pos = 0;
      for (const auto& t : j.at("tensors")) {
        const auto values = t.at("values").get<std::vector<double>>();
        detail::require(pos + values.size() <= m.params_.size(), "model: checkpoint has too many values");
        std::copy(values.begin(), values.end(), m.params_.begin() + static_cast<std::ptrdiff_t>(pos));
        pos += values.size();
      }
      detail::require(pos == m.params_.size(), "model: checkpoint has ", pos, " values, expected ",
                      m.params_.size());
    } catch (const nlohmann::json::exception& e) {
      detail::fail("model: malformed checkpoint: ", e.what());
    }
    return m;
  }

 private:
  void layout() {
    detail::require(shape_.input_dim > 0 && shape_.embedding_dim > 0, "model: zero-sized input or embedding");
    std::size_t offset = 0;
    auto add = [&](std::size_t in, std::size_t out) {
      DenseLayer l{in, out, offset};
      offset += l.size();
      return l;
    };
    embedder_.clear();
    std::size_t prev = shape_.input_dim;
    for (auto h : shape_.hidden) {
      detail::require(h > 0, "model: zero-sized hidden layer");
      embedder_.push_back(add(prev, h));
      prev = h;
    }
    embedder_.push_back(add(prev, shape_.embedding_dim));
    const auto e = shape_.embedding_dim;
    leaf_head_.reset();
    binary_head_.reset();
    level_heads_.clear();
    if (shape_.leaf_classes > 0) leaf_head_ = add(e, shape_.leaf_classes);
    for (auto c : shape_.level_classes) level_heads_.push_back(add(e, c));
    if (shape_.binary_nodes > 0) binary_head_ = add(e, shape_.binary_nodes);
    params_.assign(offset, 0.0);
  }

  ModelShape shape_;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> embedder_;
  std::optional<DenseLayer> leaf_head_;
  std::vector<DenseLayer> level_heads_;
  std::optional<DenseLayer> binary_head_;
  std::vector<double> params_;
};

}  // namespace hierloss
