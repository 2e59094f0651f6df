#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bitlab/runner.hpp"
#include "bitlab/textfmt.hpp"

namespace {

std::vector<double> parse_double_csv(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!bitlab::parse_double(item, v)) {
      throw CLI::ValidationError(flag, "expected comma-separated numbers");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(flag, "expected at least one number");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entropy-masking laboratory for discrete-representation contrastive models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bitlab::kToolVersion));

  // train
  auto* train = app.add_subcommand("train", "train a (rep_length, k) grid of models");
  std::string train_config;
  std::string train_manifest;
  std::string train_out = "experiment";
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  int train_jobs = 1;
  train->add_option("--config", train_config, "experiment config file");
  train->add_option("--manifest", train_manifest, "rerun an existing manifest");
  train->add_option("--out", train_out, "output directory")->capture_default_str();
  train->add_option("--seed", train_seed, "master seed override")
      ->each([&](const std::string&) { train_seed_set = true; });
  train->add_option("--jobs", train_jobs, "parallel training runs")->capture_default_str();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "masking sweep over converged checkpoints");
  std::string sweep_manifest;
  std::string sweep_out = "sweep";
  std::vector<std::string> sweep_shifts;
  std::string sweep_source;
  double sweep_cutoff = 0.25;
  std::string sweep_props;
  std::size_t sweep_samples = 0;
  int sweep_jobs = 1;
  sweep->add_option("--manifest", sweep_manifest, "manifest from a train run")->required();
  sweep->add_option("--out", sweep_out, "output directory")->capture_default_str();
  sweep->add_option("--shift", sweep_shifts,
                    "OOD shift descriptor (decouple | refrequency:f1,.. | noise:s); repeatable");
  sweep->add_option("--entropy-source", sweep_source, "train or eval (no default)")->required();
  sweep->add_option("--cutoff", sweep_cutoff, "max proportion pooled into shift tables")
      ->capture_default_str();
  sweep->add_option("--proportions", sweep_props, "override the proportion grid (comma list)");
  sweep->add_option("--eval-samples", sweep_samples, "override eval dataset size");
  sweep->add_option("--jobs", sweep_jobs, "parallel sweep workers")->capture_default_str();

  // entropy
  auto* entropy = app.add_subcommand("entropy", "per-bit entropy analysis");
  std::string entropy_bits;
  std::string entropy_ckpt;
  std::string entropy_config;
  std::size_t entropy_samples = 0;
  std::uint64_t entropy_seed = 1;
  std::string entropy_out = "entropy";
  std::string entropy_label = "entropy";
  entropy->add_option("--bits", entropy_bits, "bit dump file");
  entropy->add_option("--checkpoint", entropy_ckpt, "checkpoint file (with --config)");
  entropy->add_option("--config", entropy_config, "experiment config (with --checkpoint)");
  entropy->add_option("--samples", entropy_samples, "samples to encode");
  entropy->add_option("--seed", entropy_seed, "dataset seed")->capture_default_str();
  entropy->add_option("--out", entropy_out, "output directory")->capture_default_str();
  entropy->add_option("--label", entropy_label, "output file stem")->capture_default_str();

  // game
  auto* game = app.add_subcommand("game", "idealized contrastive game analytics");
  int game_b = 1;
  int game_k = 2;
  std::string game_f;
  std::string game_grid;
  std::uint64_t game_trials = 100000;
  std::uint64_t game_seed = 1;
  bool game_optimize = false;
  std::string game_init;
  double game_step = 0.1;
  int game_steps = 500;
  std::string game_out;
  game->add_option("--b", game_b, "number of features/bits")->capture_default_str();
  game->add_option("--k", game_k, "contrast-set size")->capture_default_str();
  game->add_option("--f", game_f, "feature frequencies (comma list)");
  game->add_option("--grid", game_grid, "frequency grid; evaluates grid^b protocols");
  game->add_option("--trials", game_trials, "Monte-Carlo trials")->capture_default_str();
  game->add_option("--seed", game_seed, "Monte-Carlo seed")->capture_default_str();
  game->add_flag("--optimize", game_optimize, "run projected gradient ascent");
  game->add_option("--init", game_init, "optimizer start frequencies (comma list)");
  game->add_option("--step-size", game_step, "ascent step size")->capture_default_str();
  game->add_option("--steps", game_steps, "ascent steps")->capture_default_str();
  game->add_option("--out", game_out, "CSV output path (default: stdout)");

  // report
  auto* report = app.add_subcommand("report", "re-aggregate a results CSV");
  std::string report_records;
  std::string report_out = "report";
  double report_cutoff = 0.25;
  std::string report_ind = "ind";
  report->add_option("--records", report_records, "results.csv from a sweep")->required();
  report->add_option("--out", report_out, "output directory")->capture_default_str();
  report->add_option("--cutoff", report_cutoff, "max pooled proportion")->capture_default_str();
  report->add_option("--ind-dataset", report_ind, "id of the in-distribution dataset")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (train_config.empty() == train_manifest.empty()) {
        std::cerr << "train: need exactly one of --config or --manifest\n";
        return 1;
      }
      bitlab::TrainOptions options;
      options.config_path = train_config;
      options.manifest_path = train_manifest;
      options.out_dir = train_out;
      if (train_seed_set) options.seed_override = train_seed;
      options.jobs = train_jobs;
      const bitlab::ExperimentManifest manifest = bitlab::cmd_train(options);
      std::size_t converged = 0;
      for (const auto& run : manifest.runs) converged += run.converged ? 1 : 0;
      std::cout << "trained " << manifest.runs.size() << " models, " << converged
                << " converged; manifest at " << (options.out_dir / "manifest.json").string()
                << "\n";
    } else if (sweep->parsed()) {
      bitlab::SweepOptions options;
      options.manifest_path = sweep_manifest;
      options.out_dir = sweep_out;
      options.shifts = sweep_shifts;
      options.entropy_source = bitlab::parse_entropy_source(sweep_source);
      options.cutoff = sweep_cutoff;
      if (!sweep_props.empty()) {
        options.proportions = parse_double_csv(sweep_props, "--proportions");
      }
      options.eval_samples = sweep_samples;
      options.jobs = sweep_jobs;
      bitlab::cmd_sweep(options);
      std::cout << "sweep written to " << sweep_out << "\n";
    } else if (entropy->parsed()) {
      bitlab::EntropyOptions options;
      options.bits_file = entropy_bits;
      options.checkpoint_file = entropy_ckpt;
      options.config_path = entropy_config;
      options.samples = entropy_samples;
      options.seed = entropy_seed;
      options.out_dir = entropy_out;
      options.label = entropy_label;
      bitlab::cmd_entropy(options);
      std::cout << "entropy analysis written to " << entropy_out << "\n";
    } else if (game->parsed()) {
      bitlab::GameOptions options;
      options.bits = game_b;
      options.contrast_size = game_k;
      if (!game_f.empty()) options.frequencies = parse_double_csv(game_f, "--f");
      if (!game_grid.empty()) options.grid = parse_double_csv(game_grid, "--grid");
      options.trials = game_trials;
      options.seed = game_seed;
      options.optimize = game_optimize;
      if (!game_init.empty()) options.init = parse_double_csv(game_init, "--init");
      options.step_size = game_step;
      options.steps = game_steps;
      options.out_csv = game_out;
      bitlab::cmd_game(options, std::cout);
    } else if (report->parsed()) {
      bitlab::ReportOptions options;
      options.records_csv = report_records;
      options.out_dir = report_out;
      options.cutoff = report_cutoff;
      options.ind_dataset_id = report_ind;
      bitlab::cmd_report(options);
      std::cout << "report written to " << report_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
