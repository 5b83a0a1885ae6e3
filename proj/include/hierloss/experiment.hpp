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

// File-staged experiment pipeline. Each stage reads only what earlier stages
// wrote, and run_experiment() is their composition.
//
// Seeds: split_leaves uses the base seed; fold i uses fold seed base + i for
// its within-leaf split and model initialisation; epoch e of fold i samples
// triplets with fold seed + e.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hierloss/common.hpp"
#include "hierloss/dataset.hpp"
#include "hierloss/datasplit.hpp"
#include "hierloss/evaluate.hpp"
#include "hierloss/losses.hpp"
#include "hierloss/metrics.hpp"
#include "hierloss/sampler.hpp"
#include "hierloss/synthdata.hpp"
#include "hierloss/taxonomy.hpp"
#include "hierloss/training.hpp"
#include "json.hpp"

namespace hierloss {

namespace fs = std::filesystem;

// The six combinations, in report order.
inline const std::vector<LossSet>& default_combinations() {
  static const std::vector<LossSet> kCombos = {
      {LossKind::kLeaf},
      {LossKind::kLeaf, LossKind::kTriplet},
      {LossKind::kPerLevel},
      {LossKind::kPerLevel, LossKind::kTriplet},
      {LossKind::kPerLevel, LossKind::kBinary},
      {LossKind::kPerLevel, LossKind::kBinary, LossKind::kTriplet},
  };
  return kCombos;
}

inline bool is_valid_combination(LossSet s) {
  const auto& all = default_combinations();
  return std::find(all.begin(), all.end(), s) != all.end();
}

// ---------------------------------------------------------------------------
// Flat key = value configuration.

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& is) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    detail::require(eq != std::string::npos, "config: line ", line_no, ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  detail::require(in.good(), "config: cannot open '", path.string(), "'");
  return parse_key_values(in);
}

namespace detail {

inline std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    // stoull accepts "-3" and wraps it; insist on a leading digit.
    require(!v.empty() && std::isdigit(static_cast<unsigned char>(v.front())), "");
    std::size_t pos = 0;
    const auto out = std::stoull(v, &pos);
    require(pos == v.size(), "");
    return static_cast<std::size_t>(out);
  } catch (const std::exception&) {
    fail("config: '", key, "' expects a non-negative integer, got '", v, "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto out = std::stod(v, &pos);
    require(pos == v.size(), "");
    return out;
  } catch (const std::exception&) {
    fail("config: '", key, "' expects a number, got '", v, "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline IntRange to_range(const std::string& key, const std::string& v) {
  const auto dash = v.find('-');
  if (dash == std::string::npos) {
    const auto n = to_size(key, v);
    return {n, n};
  }
  return {to_size(key, v.substr(0, dash)), to_size(key, v.substr(dash + 1))};
}

}  // namespace detail

struct ExperimentConfig {
  std::optional<fs::path> taxonomy;  // with `dataset`; otherwise data is synthesised
  std::optional<fs::path> dataset;
  SynthConfig synth;
  std::size_t folds = 5;
  std::optional<std::size_t> run_folds;  // train only the first n folds
  std::vector<LossSet> combinations = default_combinations();
  ModelConfig model;
  double margin = 0.3;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  std::size_t folds_to_run() const { return std::min(folds, run_folds.value_or(folds)); }

  LossConfig loss_config(LossSet combo) const { return {combo, margin}; }

  FitOptions fit_options(std::size_t fold) const {
    FitOptions o;
    o.epochs = epochs;
    o.batch_size = batch_size;
    o.adam.learning_rate = learning_rate;
    o.seed = seed + fold;
    return o;
  }

  // Applies known keys; unknown keys are an error. Synthetic-data keys use the
  // "synth." prefix.
  void apply(const KeyValues& kv) {
    bool synth_seed_set = false;
    for (const auto& [key, v] : kv) {
      if (key == "taxonomy") taxonomy = v;
      else if (key == "dataset") dataset = v;
      else if (key == "folds") folds = detail::to_size(key, v);
      else if (key == "run_folds") run_folds = detail::to_size(key, v);
      else if (key == "combinations") {
        combinations.clear();
        for (const auto& c : detail::split_list(v, ',')) combinations.push_back(LossSet::parse(c));
      } else if (key == "hidden") {
        model.hidden.clear();
        for (const auto& h : detail::split_list(v, ',')) model.hidden.push_back(detail::to_size(key, h));
      } else if (key == "embedding_dim") model.embedding_dim = detail::to_size(key, v);
      else if (key == "margin") margin = detail::to_double(key, v);
      else if (key == "epochs") epochs = detail::to_size(key, v);
      else if (key == "batch_size") batch_size = detail::to_size(key, v);
      else if (key == "learning_rate") learning_rate = detail::to_double(key, v);
      else if (key == "seed") seed = detail::to_size(key, v);
      else if (key == "synth.depth") synth.depth = detail::to_size(key, v);
      else if (key == "synth.branching") {
        synth.branching.clear();
        for (const auto& r : detail::split_list(v, ',')) synth.branching.push_back(detail::to_range(key, r));
      } else if (key == "synth.samples_per_leaf") synth.samples_per_leaf = detail::to_range(key, v);
      else if (key == "synth.feature_dim") synth.feature_dim = detail::to_size(key, v);
      else if (key == "synth.offset_scale") synth.offset_scale = detail::to_double(key, v);
      else if (key == "synth.decay") synth.decay = detail::to_double(key, v);
      else if (key == "synth.leaf_noise") synth.leaf_noise = detail::to_double(key, v);
      else if (key == "synth.seed") {
        synth.seed = detail::to_size(key, v);
        synth_seed_set = true;
      } else if (key == "splits" || key == "out") {
        // stage-level keys, read by the CLI
      } else {
        detail::fail("config: unknown key '", key, "'");
      }
    }
    if (!synth_seed_set) synth.seed = seed;
  }

  void validate() const {
    detail::require(folds >= 2, "config: folds must be at least 2");
    detail::require(taxonomy.has_value() == dataset.has_value(), "config: 'taxonomy' and 'dataset' go together");
    if (taxonomy) {
      detail::require(fs::exists(*taxonomy), "config: taxonomy file '", taxonomy->string(), "' does not exist");
      detail::require(fs::exists(*dataset), "config: dataset file '", dataset->string(), "' does not exist");
    } else {
      synth.validate();
    }
    detail::require(!combinations.empty(), "config: no loss combinations");
    for (auto c : combinations) {
      detail::require(is_valid_combination(c), "config: '", c.to_string(),
                      "' is not one of L, L+T, PL, PL+T, PL+B, PL+B+T");
    }
    detail::require(margin > 0.0, "config: margin must be positive");
    detail::require(batch_size > 0, "config: batch_size must be positive");
    detail::require(learning_rate > 0.0, "config: learning_rate must be positive");
  }
};

// ---------------------------------------------------------------------------
// File helpers.

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(in.good(), "missing file '", path.string(), "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  detail::require(out.good(), "cannot write '", path.string(), "'");
  out << text;
}

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    detail::fail("malformed JSON in '", path.string(), "': ", e.what());
  }
}

inline Taxonomy load_taxonomy(const fs::path& path) { return Taxonomy::parse(read_text(path)); }

inline Dataset load_dataset(const fs::path& path) {
  std::ifstream in(path);
  detail::require(in.good(), "missing file '", path.string(), "'");
  return read_dataset(in);
}

inline fs::path split_path(const fs::path& dir, std::size_t fold) {
  return dir / ("split_fold_" + std::to_string(fold) + ".json");
}

// ---------------------------------------------------------------------------
// Stages.

// gen-data: taxonomy.json + dataset.jsonl.
inline SyntheticData gen_data_stage(const SynthConfig& config, const fs::path& out_dir) {
  auto data = generate(config);
  write_text(out_dir / "taxonomy.json", data.taxonomy.to_json().dump(2) + "\n");
  std::ostringstream ss;
  write_dataset(ss, data.samples);
  write_text(out_dir / "dataset.jsonl", ss.str());
  return data;
}

// split: one split_fold_<i>.json per fold.
inline std::vector<SplitAssignment> split_stage(const Taxonomy& t, const Dataset& data, std::size_t folds,
                                                std::uint64_t seed, const fs::path& out_dir) {
  const auto counts = leaf_counts(t, data);
  const auto leaves = split_leaves(t, counts, folds, seed);
  std::vector<SplitAssignment> out;
  for (std::size_t f = 0; f < folds; ++f) {
    out.push_back(make_split(t, data, leaves[f], f, seed + f));
    write_text(split_path(out_dir, f), split_to_json(t, data, out.back()).dump(2) + "\n");
  }
  return out;
}

// sample-triplets: one JSON line per triplet of the epoch.
inline std::size_t sample_triplets_stage(const Taxonomy& t, const Dataset& data, const SplitAssignment& split,
                                         std::uint64_t epoch_seed, std::ostream& out) {
  const auto pruned = pruned_seen_taxonomy(t, split);
  const auto triples = enumerate_node_triples(pruned.tree);
  const auto instances = instantiate_epoch(pruned.tree, data, split, triples, epoch_seed);
  for (const auto& inst : instances) {
    nlohmann::json j{{"anchor", data[inst.anchor].id},
                     {"positive", data[inst.positive].id},
                     {"negative", data[inst.negative].id},
                     {"anchor_node", pruned.tree.name(inst.nodes.anchor)},
                     {"positive_node", pruned.tree.name(inst.nodes.positive)},
                     {"negative_node", pruned.tree.name(inst.nodes.negative)}};
    out << j.dump() << '\n';
  }
  return instances.size();
}

struct Checkpoint {
  Taxonomy taxonomy;
  LossConfig loss;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  EmbeddingModel model;
  std::optional<std::string> dataset_path;  // where the training data came from, if known

  nlohmann::json to_json() const {
    nlohmann::json j{{"format", "hierloss-checkpoint"},
            {"version", 1},
            {"losses", loss.active.to_string()},
            {"margin", loss.margin},
            {"fold", fold},
            {"seed", seed},
            {"best_epoch", best_epoch},
            {"best_validation", best_validation},
            {"taxonomy", taxonomy.to_json()},
            {"model", model.to_json()}};
    if (dataset_path) j["dataset"] = *dataset_path;
    return j;
  }

  static Checkpoint from_json(const nlohmann::json& j) {
    try {
      detail::require(j.value("format", "") == "hierloss-checkpoint", "checkpoint: unrecognised format");
      std::optional<std::string> dataset;
      if (j.contains("dataset")) dataset = j.at("dataset").get<std::string>();
      return Checkpoint{Taxonomy::from_json(j.at("taxonomy")),
                        {LossSet::parse(j.at("losses").get<std::string>()), j.at("margin").get<double>()},
                        j.at("fold").get<std::size_t>(),
                        j.at("seed").get<std::uint64_t>(),
                        j.at("best_epoch").get<std::size_t>(),
                        j.at("best_validation").get<double>(),
                        EmbeddingModel::from_json(j.at("model")),
                        dataset};
    } catch (const nlohmann::json::exception& e) {
      detail::fail("checkpoint: malformed document: ", e.what());
    }
  }
};

// train: checkpoint.json + log.csv for one fold and one loss combination.
inline Checkpoint train_stage(const Taxonomy& t, const Dataset& data, const SplitAssignment& split,
                              const LossConfig& loss, const ModelConfig& model, const FitOptions& options,
                              const fs::path& out_dir, std::optional<std::string> dataset_path = std::nullopt) {
  const TrainingProblem problem(t, data, split, loss);
  auto fitted = fit(problem, model, options);
  Checkpoint ckpt{t, loss, split.fold_index, options.seed, fitted.best_epoch, fitted.best_validation,
                  std::move(fitted.model), std::move(dataset_path)};
  write_text(out_dir / "checkpoint.json", ckpt.to_json().dump() + "\n");
  std::ostringstream log;
  fitted.log.write_csv(log);
  write_text(out_dir / "log.csv", log.str());
  return ckpt;
}

// evaluate: MetricsReport JSON for the test or prediction set.
inline MetricsReport evaluate_stage(const Checkpoint& ckpt, const Dataset& data, const SplitAssignment& split,
                                    Subset set, const std::optional<fs::path>& out_file) {
  const TrainingProblem problem(ckpt.taxonomy, data, split, ckpt.loss);
  auto report = evaluate_set(ckpt.model, problem, set);
  if (out_file) write_text(*out_file, to_json(report).dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation.

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
  std::size_t n = 0;
};

inline MeanSem mean_sem(const std::vector<double>& v) {
  MeanSem out;
  out.n = v.size();
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.sem = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  return out;
}

struct ReportColumn {
  const char* header;
  bool prediction_set;
  std::optional<double> MetricsReport::*field;
};

inline const std::vector<ReportColumn>& report_columns() {
  static const std::vector<ReportColumn> kColumns = {
      {"test_leaf_f1", false, &MetricsReport::leaf_f1},
      {"test_leaf_rp@5", false, &MetricsReport::leaf_rp_at_5},
      {"test_mnr", false, &MetricsReport::mnr},
      {"test_ndcg_sum", false, &MetricsReport::ndcg_sum},
      {"test_ndcg_max", false, &MetricsReport::ndcg_max},
      {"pred_acc_blind", true, &MetricsReport::acc_blind},
      {"pred_acc_aware", true, &MetricsReport::acc_aware},
      {"pred_blind/aware", true, &MetricsReport::ratio_blind_aware},
      {"pred_ndcg_sum", true, &MetricsReport::ndcg_sum},
      {"pred_ndcg_max", true, &MetricsReport::ndcg_max},
  };
  return kColumns;
}

struct RunReports {
  MetricsReport test;
  MetricsReport prediction;
};

// combination -> per-fold reports, combinations in report order.
struct AggregateReport {
  std::vector<std::pair<std::string, std::vector<RunReports>>> rows;

  std::optional<MeanSem> cell(const std::string& combo, const ReportColumn& col) const {
    for (const auto& [name, runs] : rows) {
      if (name != combo) continue;
      std::vector<double> values;
      for (const auto& r : runs) {
        const auto& v = (col.prediction_set ? r.prediction : r.test).*col.field;
        if (v) values.push_back(*v);
      }
      if (values.empty()) return std::nullopt;
      return mean_sem(values);
    }
    return std::nullopt;
  }

  std::optional<MeanSem> cell(const std::string& combo, std::string_view header) const {
    for (const auto& col : report_columns()) {
      if (header == col.header) return cell(combo, col);
    }
    detail::fail("report: unknown column '", header, "'");
  }

  // Percent cells "mean (sem)", "-" where a metric is undefined.
  std::string to_csv() const {
    std::string out = "combination";
    for (const auto& col : report_columns()) out += std::string(",") + col.header;
    out += '\n';
    char buf[64];
    for (const auto& [name, runs] : rows) {
      out += name;
      for (const auto& col : report_columns()) {
        out += ',';
        if (auto c = cell(name, col)) {
          std::snprintf(buf, sizeof buf, "%.1f (%.1f)", 100.0 * c->mean, 100.0 * c->sem);
          out += buf;
        } else {
          out += '-';
        }
      }
      out += '\n';
    }
    return out;
  }
};

// report: gathers <runs>/fold_<i>/<combo>/{test,prediction}.json.
inline AggregateReport report_stage(const fs::path& runs_dir, const std::optional<fs::path>& out_file) {
  std::vector<std::pair<std::size_t, fs::path>> folds;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("fold_", 0) != 0) continue;
    folds.emplace_back(detail::to_size("fold", name.substr(5)), entry.path());
  }
  std::sort(folds.begin(), folds.end());
  detail::require(!folds.empty(), "report: no fold_<i> directories under '", runs_dir.string(), "'");

  std::map<std::string, std::vector<RunReports>> by_combo;
  for (const auto& [index, dir] : folds) {
    std::vector<fs::path> combos;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory()) combos.push_back(entry.path());
    }
    std::sort(combos.begin(), combos.end());
    for (const auto& c : combos) {
      by_combo[c.filename().string()].push_back(
          {metrics_from_json(read_json(c / "test.json")), metrics_from_json(read_json(c / "prediction.json"))});
    }
  }

  AggregateReport report;
  for (auto combo : default_combinations()) {
    auto it = by_combo.find(combo.to_string());
    if (it == by_combo.end()) continue;
    report.rows.emplace_back(it->first, std::move(it->second));
    by_combo.erase(it);
  }
  for (auto& [name, runs] : by_combo) report.rows.emplace_back(name, std::move(runs));
  if (out_file) write_text(*out_file, report.to_csv());
  return report;
}

// Full pipeline under `out_dir`:
//   data/{taxonomy.json,dataset.jsonl}, splits/split_fold_<i>.json,
//   fold_<i>/<combo>/{checkpoint.json,log.csv,test.json,prediction.json},
//   aggregate.csv
inline AggregateReport run_experiment(const ExperimentConfig& config, const fs::path& out_dir,
                                      std::ostream* progress = nullptr) {
  config.validate();
  Taxonomy taxonomy = config.taxonomy ? load_taxonomy(*config.taxonomy) : gen_data_stage(config.synth, out_dir / "data").taxonomy;
  if (config.taxonomy) {
    write_text(out_dir / "data" / "taxonomy.json", taxonomy.to_json().dump(2) + "\n");
    write_text(out_dir / "data" / "dataset.jsonl", read_text(*config.dataset));
  }
  const Dataset data = load_dataset(out_dir / "data" / "dataset.jsonl");
  resolve_leaves(taxonomy, data);
  const auto splits = split_stage(taxonomy, data, config.folds, config.seed, out_dir / "splits");

  for (std::size_t f = 0; f < config.folds_to_run(); ++f) {
    for (auto combo : config.combinations) {
      const auto dir = out_dir / ("fold_" + std::to_string(f)) / combo.to_string();
      try {
        if (progress) *progress << "fold " << f << " " << combo.to_string() << "\n" << std::flush;
        const auto ckpt = train_stage(taxonomy, data, splits[f], config.loss_config(combo), config.model,
                                      config.fit_options(f), dir, (out_dir / "data" / "dataset.jsonl").string());
        evaluate_stage(ckpt, data, splits[f], Subset::kTest, dir / "test.json");
        evaluate_stage(ckpt, data, splits[f], Subset::kPrediction, dir / "prediction.json");
      } catch (const Error& e) {
        detail::fail("fold ", f, ", ", combo.to_string(), ": ", e.what());
      }
    }
  }
  return report_stage(out_dir, out_dir / "aggregate.csv");
}

}  // namespace hierloss
