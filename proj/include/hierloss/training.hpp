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
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/dataset.hpp"
#include "hierloss/datasplit.hpp"
#include "hierloss/losses.hpp"
#include "hierloss/model.hpp"
#include "hierloss/random.hpp"
#include "hierloss/sampler.hpp"
#include "hierloss/taxonomy.hpp"

namespace hierloss {

// Class sets of each prediction head, as node ids of the pruned tree.
struct HeadLayout {
  std::vector<NodeId> leaf_classes;  // empty without L
  std::vector<Level> levels;         // empty without PL
  std::vector<NodeId> binary_nodes;  // empty without B; every non-root node

  static HeadLayout build(const Taxonomy& tree, LossSet active) {
    HeadLayout h;
    if (active.contains(LossKind::kLeaf)) h.leaf_classes = tree.leaves();
    if (active.contains(LossKind::kPerLevel)) {
      h.levels = tree.levels();
      detail::require(!h.levels.empty(), "training: per-level loss needs a tree with two or more leaves");
    }
    if (active.contains(LossKind::kBinary)) {
      for (NodeId n = 1; n < tree.size(); ++n) h.binary_nodes.push_back(n);
      detail::require(!h.binary_nodes.empty(), "training: binary loss needs a non-root node");
    }
    return h;
  }
};

// Per-sample targets for every head of a layout.
struct SampleTargets {
  std::size_t leaf = 0;
  std::vector<std::size_t> levels;
  std::vector<std::uint8_t> membership;
};

struct HeadWeights {
  std::vector<double> leaf;
  std::vector<std::vector<double>> levels;
  std::vector<double> binary;
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {64};
  std::size_t embedding_dim = 32;
};

// Everything a training run needs that is fixed for one fold and one loss
// combination. Holds references: `taxonomy` and `data` must outlive it.
class TrainingProblem {
 public:
  TrainingProblem(const Taxonomy& taxonomy, const Dataset& data, SplitAssignment split, LossConfig config)
      : taxonomy_(&taxonomy),
        data_(&data),
        split_(std::move(split)),
        config_(config),
        pruned_(pruned_seen_taxonomy(taxonomy, split_)) {
    config_.validate();
    detail::require(!data.empty(), "training: empty dataset");
    detail::require(split_.partition.size() == data.size(), "training: split covers ", split_.partition.size(),
                    " samples, dataset has ", data.size());
    const auto& tree = pruned_.tree;
    layout_ = HeadLayout::build(tree, config_.active);
    triples_ = enumerate_node_triples(tree);

    const auto train = split_.indices(Subset::kTrain);
    train_members_ = members_by_node(tree, data, train);
    valid_members_ = members_by_node(tree, data, split_.indices(Subset::kValid));

    targets_.resize(data.size());
    for (SampleIndex i = 0; i < data.size(); ++i) {
      if (split_.partition[i] == Subset::kPrediction) continue;
      const NodeId leaf = tree.id_of(data[i].leaf);
      SampleTargets t;
      for (std::size_t c = 0; c < layout_.leaf_classes.size(); ++c) {
        if (layout_.leaf_classes[c] == leaf) t.leaf = c;
      }
      for (const auto& level : layout_.levels) {
        const NodeId target = tree.target_at_level(leaf, level.depth);
        t.levels.push_back(index_of(level.classes, target));
      }
      for (NodeId n : layout_.binary_nodes) t.membership.push_back(tree.is_ancestor_or_self(n, leaf) ? 1 : 0);
      targets_[i] = std::move(t);
    }

    // Inverse-frequency weights from training-set label counts.
    if (!layout_.leaf_classes.empty()) {
      std::vector<std::size_t> counts(layout_.leaf_classes.size(), 0);
      for (auto i : train) ++counts[targets_[i]->leaf];
      weights_.leaf = class_weights(counts);
    }
    for (std::size_t l = 0; l < layout_.levels.size(); ++l) {
      std::vector<std::size_t> counts(layout_.levels[l].classes.size(), 0);
      for (auto i : train) ++counts[targets_[i]->levels[l]];
      weights_.levels.push_back(class_weights(counts));
    }
    if (!layout_.binary_nodes.empty()) {
      std::vector<std::size_t> counts;
      for (NodeId n : layout_.binary_nodes) counts.push_back(train_members_[n].size());
      weights_.binary = class_weights(counts);
    }
  }

  const Taxonomy& taxonomy() const { return *taxonomy_; }
  const Dataset& data() const { return *data_; }
  const SplitAssignment& split() const { return split_; }
  const LossConfig& config() const { return config_; }
  const PrunedTaxonomy& pruned() const { return pruned_; }
  const HeadLayout& layout() const { return layout_; }
  const HeadWeights& weights() const { return weights_; }
  const std::vector<NodeTriple>& node_triples() const { return triples_; }
  const std::vector<std::vector<SampleIndex>>& train_members() const { return train_members_; }
  const std::vector<std::vector<SampleIndex>>& valid_members() const { return valid_members_; }

  const SampleTargets& targets(SampleIndex i) const {
    detail::require(i < targets_.size() && targets_[i].has_value(), "training: sample ", i,
                    " has no training targets (unseen leaf)");
    return *targets_[i];
  }

  ModelShape model_shape(const ModelConfig& m) const {
    ModelShape s;
    s.input_dim = data_->front().features.size();
    s.hidden = m.hidden;
    s.embedding_dim = m.embedding_dim;
    s.leaf_classes = layout_.leaf_classes.size();
    for (const auto& l : layout_.levels) s.level_classes.push_back(l.classes.size());
    s.binary_nodes = layout_.binary_nodes.size();
    return s;
  }

 private:
  static std::size_t index_of(const std::vector<NodeId>& v, NodeId n) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == n) return i;
    }
    detail::fail("training: node ", n, " not in class set");
  }

  const Taxonomy* taxonomy_;
  const Dataset* data_;
  SplitAssignment split_;
  LossConfig config_;
  PrunedTaxonomy pruned_;
  HeadLayout layout_;
  HeadWeights weights_;
  std::vector<NodeTriple> triples_;
  std::vector<std::vector<SampleIndex>> train_members_;
  std::vector<std::vector<SampleIndex>> valid_members_;
  std::vector<std::optional<SampleTargets>> targets_;
};

// Classification terms (L / PL / B) of one sample and their output gradients.
struct ClassificationTerms {
  std::map<LossKind, double> values;
  EmbeddingModel::OutputGrad grad;
};

inline ClassificationTerms classification_terms(const TrainingProblem& problem,
                                                const EmbeddingModel::Output& out,
                                                const SampleTargets& targets) {
  ClassificationTerms terms;
  const auto active = problem.config().active;
  const auto& w = problem.weights();
  if (active.contains(LossKind::kLeaf)) {
    auto l = leaf_loss(out.leaf, targets.leaf, w.leaf);
    terms.values[LossKind::kLeaf] = l.value;
    terms.grad.leaf = std::move(l.grad);
  }
  if (active.contains(LossKind::kPerLevel)) {
    std::vector<LevelHeadInput> heads;
    for (std::size_t l = 0; l < out.levels.size(); ++l) heads.push_back({out.levels[l], targets.levels[l], w.levels[l]});
    auto pl = per_level_loss(heads, problem.layout().levels.size());
    terms.values[LossKind::kPerLevel] = pl.value;
    terms.grad.levels = std::move(pl.grads);
  }
  if (active.contains(LossKind::kBinary)) {
    auto b = binary_node_loss(out.binary, targets.membership, w.binary);
    terms.values[LossKind::kBinary] = b.value;
    terms.grad.binary = std::move(b.grad);
  }
  return terms;
}

struct BatchObjective {
  LossValue loss;
  std::vector<double> grad;  // d total / d parameters
};

namespace detail {

inline void scale_into(std::vector<double>& dst, const std::vector<double>& src, double s) {
  if (src.empty()) return;
  if (dst.empty()) dst.assign(src.size(), 0.0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += s * src[i];
}

}  // namespace detail

// Total = mean triplet loss over the batch (if T is active) + each
// classification component averaged over the 3 * |batch| member samples.
inline BatchObjective batch_objective(const EmbeddingModel& model, const TrainingProblem& problem,
                                      std::span<const TripletInstance> batch) {
  detail::require(!batch.empty(), "training: empty batch");
  const auto& data = problem.data();
  const auto active = problem.config().active;
  const std::size_t slots = 3 * batch.size();

  std::vector<EmbeddingModel::Trace> traces(slots);
  std::vector<SampleIndex> ids(slots);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    ids[3 * b] = batch[b].anchor;
    ids[3 * b + 1] = batch[b].positive;
    ids[3 * b + 2] = batch[b].negative;
  }
  for (std::size_t s = 0; s < slots; ++s) model.forward(data[ids[s]].features, traces[s]);

  std::vector<EmbeddingModel::OutputGrad> grads(slots);
  std::map<LossKind, double> components;
  for (auto k : kAllLossKinds) {
    if (active.contains(k)) components[k] = 0.0;
  }

  if (active.contains(LossKind::kTriplet)) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto t = triplet_loss(traces[3 * b].output.embedding, traces[3 * b + 1].output.embedding,
                            traces[3 * b + 2].output.embedding, problem.config().margin);
      components[LossKind::kTriplet] += inv * t.value;
      detail::scale_into(grads[3 * b].embedding, t.grad_a, inv);
      detail::scale_into(grads[3 * b + 1].embedding, t.grad_p, inv);
      detail::scale_into(grads[3 * b + 2].embedding, t.grad_n, inv);
    }
  }

  const double inv_slots = 1.0 / static_cast<double>(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    auto terms = classification_terms(problem, traces[s].output, problem.targets(ids[s]));
    for (const auto& [k, v] : terms.values) components[k] += inv_slots * v;
    detail::scale_into(grads[s].leaf, terms.grad.leaf, inv_slots);
    if (!terms.grad.levels.empty()) {
      grads[s].levels.resize(terms.grad.levels.size());
      for (std::size_t l = 0; l < terms.grad.levels.size(); ++l) {
        detail::scale_into(grads[s].levels[l], terms.grad.levels[l], inv_slots);
      }
    }
    detail::scale_into(grads[s].binary, terms.grad.binary, inv_slots);
  }

  BatchObjective out{combine(components, active), std::vector<double>(model.num_parameters(), 0.0)};
  for (std::size_t s = 0; s < slots; ++s) model.backward(traces[s], grads[s], out.grad);
  return out;
}

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamOptions options) : options_(options), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * grad[i];
      v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
      params[i] -= options_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.epsilon);
    }
  }

  std::uint64_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainState {
  EmbeddingModel model;
  Adam optimiser;
  std::size_t epoch = 0;
  EmbeddingModel best;
  double best_validation = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

// One optimiser update on a batch of triplets.
inline LossValue train_step(TrainState& state, const TrainingProblem& problem,
                            std::span<const TripletInstance> batch) {
  auto obj = batch_objective(state.model, problem, batch);
  if (!std::isfinite(obj.loss.total)) {
    std::ostringstream oss;
    for (const auto& [k, v] : obj.loss.per_component) oss << ' ' << to_string(k) << '=' << v;
    detail::fail("training: non-finite loss at epoch ", state.epoch, " (", problem.config().active.to_string(),
                 ":", oss.str(), ")");
  }
  state.optimiser.step(state.model.mutable_parameters(), obj.grad);
  return obj.loss;
}

// Validation triplets for a problem, drawn once; node triples whose nodes lack
// validation samples are dropped.
inline std::vector<TripletInstance> validation_triplets(const TrainingProblem& problem, std::uint64_t seed) {
  return instantiate_triplets(problem.pruned().tree, problem.valid_members(), problem.node_triples(),
                              mix_seed(seed ^ static_cast<std::uint64_t>(Stream::kValidationTriplets)),
                              ShortagePolicy::kSkip);
}

// Classification terms averaged over all validation samples, plus the mean
// triplet loss over `triplets` when T is active.
inline LossValue validation_loss(const EmbeddingModel& model, const TrainingProblem& problem,
                                 std::span<const TripletInstance> triplets) {
  const auto active = problem.config().active;
  std::map<LossKind, double> components;
  for (auto k : kAllLossKinds) {
    if (active.contains(k)) components[k] = 0.0;
  }
  const auto valid = problem.split().indices(Subset::kValid);
  if (!valid.empty()) {
    const double inv = 1.0 / static_cast<double>(valid.size());
    for (auto i : valid) {
      auto out = model.forward(problem.data()[i].features);
      for (const auto& [k, v] : classification_terms(problem, out, problem.targets(i)).values) {
        components[k] += inv * v;
      }
    }
  }
  if (active.contains(LossKind::kTriplet) && !triplets.empty()) {
    const double inv = 1.0 / static_cast<double>(triplets.size());
    for (const auto& t : triplets) {
      const auto a = model.forward(problem.data()[t.anchor].features).embedding;
      const auto p = model.forward(problem.data()[t.positive].features).embedding;
      const auto n = model.forward(problem.data()[t.negative].features).embedding;
      components[LossKind::kTriplet] +=
          inv * triplet_hinge(cosine_distance(a, p), cosine_distance(a, n), problem.config().margin);
    }
  }
  return combine(components, active);
}

struct LogEntry {
  std::size_t epoch = 0;
  std::string component;  // "train.<loss>", "valid.<loss>", "train.total", ...
  double value = 0.0;

  bool operator==(const LogEntry&) const = default;
};

struct TrainingLog {
  std::vector<LogEntry> entries;

  void add(std::size_t epoch, const std::string& split, const LossValue& v) {
    for (const auto& [k, value] : v.per_component) {
      entries.push_back({epoch, split + "." + std::string(to_string(k)), value});
    }
    entries.push_back({epoch, split + ".total", v.total});
  }

  void write_csv(std::ostream& os) const {
    os << "epoch,component,value\n";
    char buf[64];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%.17g", e.value);
      os << e.epoch << ',' << e.component << ',' << buf << '\n';
    }
  }
};

struct FitOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 0;  // fold seed
};

struct FitResult {
  EmbeddingModel model;  // best-validation snapshot
  TrainingLog log;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
};

// Epoch e (1-based in the log) resamples triplets with seed `seed + e - 1`,
// shuffles them into batches, then scores the validation set. Epoch 0 in the
// log is the initial model.
inline FitResult fit(const TrainingProblem& problem, const ModelConfig& model_config, const FitOptions& options) {
  detail::require(options.batch_size > 0, "training: batch size must be positive");
  detail::require(!problem.split().indices(Subset::kTrain).empty(), "training: empty training partition");
  detail::require(!problem.split().indices(Subset::kValid).empty(), "training: empty validation partition");

  TrainState state;
  state.model = EmbeddingModel(problem.model_shape(model_config), options.seed);
  state.optimiser = Adam(state.model.num_parameters(), options.adam);
  const auto valid_triplets = validation_triplets(problem, options.seed);

  FitResult result;
  auto score = [&](std::size_t epoch) {
    const auto v = validation_loss(state.model, problem, valid_triplets);
    result.log.add(epoch, "valid", v);
    if (v.total < state.best_validation) {
      state.best_validation = v.total;
      state.best = state.model;
      state.best_epoch = epoch;
    }
  };
  score(0);

  for (std::size_t e = 0; e < options.epochs; ++e) {
    state.epoch = e + 1;
    const std::uint64_t epoch_seed = options.seed + e;
    auto triplets = instantiate_triplets(problem.pruned().tree, problem.train_members(), problem.node_triples(),
                                         epoch_seed);
    auto rng = make_rng(epoch_seed, Stream::kBatchShuffle);
    shuffle(std::span(triplets), rng);

    std::map<LossKind, double> sums;
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < triplets.size(); start += options.batch_size) {
      const auto len = std::min(options.batch_size, triplets.size() - start);
      const auto loss = train_step(state, problem, std::span(triplets).subspan(start, len));
      for (const auto& [k, v] : loss.per_component) sums[k] += v;
      total += loss.total;
      ++steps;
    }
    LossValue mean;
    for (const auto& [k, v] : sums) mean.per_component[k] = v / static_cast<double>(steps);
    mean.total = total / static_cast<double>(steps);
    result.log.add(state.epoch, "train", mean);
    score(state.epoch);
  }

  result.model = std::move(state.best);
  result.best_epoch = state.best_epoch;
  result.best_validation = state.best_validation;
  return result;
}

// Embeddings for `samples`, in order.
inline std::vector<std::vector<double>> embed_all(const EmbeddingModel& model, std::span<const LabeledSample> data,
                                                  std::span<const SampleIndex> samples) {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (auto i : samples) out.push_back(model.forward(data[i].features).embedding);
  return out;
}

}  // namespace hierloss
