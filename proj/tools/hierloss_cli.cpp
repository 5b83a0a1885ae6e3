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

// hierloss: experiment pipeline driver.
//
//   hierloss gen-data --config synth.cfg --out data/
//   hierloss split --taxonomy data/taxonomy.json --dataset data/dataset.jsonl --folds 5 --seed 0 --out splits/
//   hierloss sample-triplets --taxonomy ... --dataset ... --split splits/split_fold_0.json --epoch-seed 0 --out t.jsonl
//   hierloss train --config exp.cfg --fold 0 --losses PL+T --out runs/fold_0/PL+T
//   hierloss evaluate --checkpoint runs/fold_0/PL+T/checkpoint.json --split splits/split_fold_0.json --set test --out runs/fold_0/PL+T/test.json
//   hierloss report --runs runs/ --out runs/aggregate.csv
//   hierloss run --config exp.cfg --out runs/

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hierloss/hierloss.hpp"

namespace {

using namespace hierloss;

// Config file values with CLI flags layered on top.
ExperimentConfig load_config(const std::string& path, const KeyValues& overrides) {
  KeyValues kv;
  if (!path.empty()) kv = read_key_values(path);
  for (const auto& [k, v] : overrides) kv[k] = v;
  ExperimentConfig config;
  config.apply(kv);
  return config;
}

void set_if(KeyValues& kv, const char* key, const std::optional<std::string>& v) {
  if (v) kv[key] = *v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchy-aware embedding learning experiments"};
  app.require_subcommand(1);

  // gen-data
  std::string gen_config, gen_out;
  std::optional<std::string> gen_seed;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic taxonomy and dataset");
  gen->add_option("--config", gen_config, "Config file (synth.* keys)");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Base seed");

  // split
  std::string split_tax, split_data, split_out;
  std::size_t split_folds = 5;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Seen/unseen leaf folds and 8:1:1 sample split");
  split->add_option("--taxonomy", split_tax)->required();
  split->add_option("--dataset", split_data)->required();
  split->add_option("--folds", split_folds);
  split->add_option("--seed", split_seed);
  split->add_option("--out", split_out, "Output directory")->required();

  // sample-triplets
  std::string st_tax, st_data, st_split, st_out;
  std::uint64_t st_seed = 0;
  std::optional<std::uint64_t> st_epoch_seed;
  auto* sample = app.add_subcommand("sample-triplets", "Dump one epoch of training triplets as JSON Lines");
  sample->add_option("--taxonomy", st_tax)->required();
  sample->add_option("--dataset", st_data)->required();
  sample->add_option("--split", st_split)->required();
  sample->add_option("--epoch-seed", st_epoch_seed, "Defaults to --seed");
  sample->add_option("--seed", st_seed);
  sample->add_option("--out", st_out, "Output file ('-' for stdout)")->required();

  // train
  std::string tr_config, tr_losses, tr_out;
  std::size_t tr_fold = 0;
  std::optional<std::string> tr_tax, tr_data, tr_split, tr_splits, tr_seed, tr_epochs;
  auto* train = app.add_subcommand("train", "Train one loss combination on one fold");
  train->add_option("--config", tr_config, "Experiment config file");
  train->add_option("--fold", tr_fold);
  train->add_option("--losses", tr_losses, "One of L, L+T, PL, PL+T, PL+B, PL+B+T")->required();
  train->add_option("--taxonomy", tr_tax);
  train->add_option("--dataset", tr_data);
  train->add_option("--split", tr_split, "Split file (default: <splits>/split_fold_<fold>.json)");
  train->add_option("--splits", tr_splits, "Directory written by 'split'");
  train->add_option("--seed", tr_seed, "Base seed");
  train->add_option("--epochs", tr_epochs);
  train->add_option("--out", tr_out, "Output directory")->required();

  // evaluate
  std::string ev_ckpt, ev_split, ev_set, ev_out;
  std::optional<std::string> ev_data;
  std::optional<std::uint64_t> ev_seed;
  auto* evaluate = app.add_subcommand("evaluate", "Metrics of a checkpoint on the test or prediction set");
  evaluate->add_option("--checkpoint", ev_ckpt)->required();
  evaluate->add_option("--split", ev_split)->required();
  evaluate->add_option("--set", ev_set)->required()->check(CLI::IsMember({"test", "prediction"}));
  evaluate->add_option("--dataset", ev_data, "Defaults to the path recorded in the checkpoint");
  evaluate->add_option("--seed", ev_seed, "Unused; evaluation is deterministic");
  evaluate->add_option("--out", ev_out, "Output JSON file")->required();

  // report
  std::string rp_runs, rp_out;
  std::optional<std::uint64_t> rp_seed;
  auto* report = app.add_subcommand("report", "Aggregate per-fold metrics into a CSV");
  report->add_option("--runs", rp_runs)->required();
  report->add_option("--seed", rp_seed, "Unused");
  report->add_option("--out", rp_out)->required();

  // run
  std::string run_config, run_out;
  std::optional<std::string> run_seed, run_epochs, run_folds;
  auto* run = app.add_subcommand("run", "Full pipeline: data, splits, training, evaluation, report");
  run->add_option("--config", run_config, "Experiment config file");
  run->add_option("--seed", run_seed);
  run->add_option("--epochs", run_epochs);
  run->add_option("--run-folds", run_folds, "Train only the first n folds");
  run->add_option("--out", run_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      KeyValues o;
      set_if(o, "seed", gen_seed);
      const auto config = load_config(gen_config, o);
      const auto data = gen_data_stage(config.synth, gen_out);
      std::cout << data.taxonomy.size() << " nodes, " << data.taxonomy.leaves().size() << " leaves, "
                << data.samples.size() << " samples\n";
    } else if (split->parsed()) {
      const auto t = load_taxonomy(split_tax);
      const auto data = load_dataset(split_data);
      const auto splits = split_stage(t, data, split_folds, split_seed, split_out);
      for (const auto& s : splits) {
        std::cout << "fold " << s.fold_index << ": " << s.seen_leaves.size() << " seen, " << s.unseen_leaves.size()
                  << " unseen leaves\n";
      }
    } else if (sample->parsed()) {
      const auto t = load_taxonomy(st_tax);
      const auto data = load_dataset(st_data);
      const auto s = split_from_json(t, data, read_json(st_split));
      const auto seed = st_epoch_seed.value_or(st_seed);
      if (st_out == "-") {
        sample_triplets_stage(t, data, s, seed, std::cout);
      } else {
        std::ostringstream ss;
        const auto n = sample_triplets_stage(t, data, s, seed, ss);
        write_text(st_out, ss.str());
        std::cout << n << " triplets\n";
      }
    } else if (train->parsed()) {
      KeyValues o;
      set_if(o, "taxonomy", tr_tax);
      set_if(o, "dataset", tr_data);
      set_if(o, "seed", tr_seed);
      set_if(o, "epochs", tr_epochs);
      KeyValues kv = tr_config.empty() ? KeyValues{} : read_key_values(tr_config);
      for (const auto& [k, v] : o) kv[k] = v;
      if (tr_splits) kv["splits"] = *tr_splits;
      ExperimentConfig config;
      config.apply(kv);
      if (!config.taxonomy || !config.dataset) throw Error("train: need 'taxonomy' and 'dataset'");
      fs::path split_file;
      if (tr_split) {
        split_file = *tr_split;
      } else if (kv.count("splits")) {
        split_file = split_path(kv.at("splits"), tr_fold);
      } else {
        throw Error("train: need --split, --splits or a 'splits' config key");
      }
      const auto t = load_taxonomy(*config.taxonomy);
      const auto data = load_dataset(*config.dataset);
      const auto s = split_from_json(t, data, read_json(split_file));
      const auto losses = LossSet::parse(tr_losses);
      const auto ckpt = train_stage(t, data, s, config.loss_config(losses), config.model,
                                    config.fit_options(s.fold_index), tr_out, config.dataset->string());
      std::cout << "best epoch " << ckpt.best_epoch << ", validation loss " << ckpt.best_validation << "\n";
    } else if (evaluate->parsed()) {
      const auto ckpt = Checkpoint::from_json(read_json(ev_ckpt));
      const auto data_path = ev_data ? *ev_data : ckpt.dataset_path.value_or("");
      if (data_path.empty()) throw Error("evaluate: checkpoint records no dataset; pass --dataset");
      const auto data = load_dataset(data_path);
      const auto s = split_from_json(ckpt.taxonomy, data, read_json(ev_split));
      const auto r = evaluate_stage(ckpt, data, s, subset_from_string(ev_set), fs::path(ev_out));
      std::cout << to_json(r).dump(2) << "\n";
    } else if (report->parsed()) {
      std::cout << report_stage(rp_runs, fs::path(rp_out)).to_csv();
    } else if (run->parsed()) {
      KeyValues o;
      set_if(o, "seed", run_seed);
      set_if(o, "epochs", run_epochs);
      set_if(o, "run_folds", run_folds);
      const auto config = load_config(run_config, o);
      std::cout << run_experiment(config, run_out, &std::cerr).to_csv();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
