#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bitlab/config.hpp"
#include "bitlab/data.hpp"
#include "bitlab/eval.hpp"
#include "bitlab/nn.hpp"

namespace bitlab {

inline constexpr const char* kToolVersion = "0.1.0";

// One grid cell of an experiment: a single trained encoder-distinguisher
// pair.
struct RunRecord {
  std::string model_id;
  std::size_t rep_length = 0;
  int contrast_size = 2;
  std::size_t repeat = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t mask_seed = 0;
  bool converged = false;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  double best_heldout_accuracy = 0.0;
  std::string checkpoint_file;  // relative to the experiment directory
  std::string bitdump_file;
};

// Everything needed to reproduce an experiment bit for bit: the config
// snapshot, the master seed, every derived per-run seed, and the produced
// files with their convergence verdicts.
struct ExperimentManifest {
  std::string tool_version = kToolVersion;
  std::uint64_t master_seed = 0;
  std::map<std::string, std::string> config_snapshot;
  std::vector<RunRecord> runs;
  std::vector<std::string> output_files;
};

void save_manifest(const ExperimentManifest& manifest, const std::filesystem::path& path);
ExperimentManifest load_manifest(const std::filesystem::path& path);
KeyValueConfig config_from_manifest(const ExperimentManifest& manifest);

// Default desk-scale experiment: a separable synthetic distribution with
// nine half-frequency features plus one rare feature riding a spurious
// marker coordinate, swept over small representation lengths and contrast
// sizes. configs/desk.ini carries the same values for CLI use.
KeyValueConfig default_experiment_config();

// Config-derived experiment pieces.
SyntheticSpec spec_from_config(const KeyValueConfig& config);
TrainConfig train_config_from_config(const KeyValueConfig& config);
ModelDims model_dims_from_config(const KeyValueConfig& config, std::size_t rep_length,
                                 std::size_t input_dim);
SweepGrid sweep_grid_from_config(const KeyValueConfig& config);

struct TrainOptions {
  std::filesystem::path config_path;    // one of config_path / manifest_path
  std::filesystem::path manifest_path;  // rerun an existing manifest
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed_override;
  int jobs = 1;
};

// Trains repeats x (rep_length, k) grid models, applies the convergence
// filter, writes checkpoints, held-out bit dumps, and the manifest.
ExperimentManifest cmd_train(const TrainOptions& options);

struct SweepOptions {
  std::filesystem::path manifest_path;
  std::filesystem::path out_dir;
  std::vector<std::string> shifts;  // shift descriptors for OOD datasets
  EntropySource entropy_source = EntropySource::Train;
  double cutoff = 0.25;
  std::optional<std::vector<double>> proportions;  // overrides the config grid
  std::size_t eval_samples = 0;                    // 0: config value
  int jobs = 1;
};

// Masking sweeps over every converged checkpoint, shift tables at the
// cutoff, and effective-robustness analyses per OOD dataset.
void cmd_sweep(const SweepOptions& options);

struct GameOptions {
  int bits = 1;
  int contrast_size = 2;
  std::vector<double> frequencies;       // explicit protocol
  std::vector<double> grid;              // or all protocols in grid^b
  std::uint64_t trials = 100000;
  std::uint64_t seed = 1;
  bool optimize = false;
  std::vector<double> init;              // optimizer start, defaults to frequencies
  double step_size = 0.1;
  int steps = 500;
  std::filesystem::path out_csv;
};

void cmd_game(const GameOptions& options, std::ostream& console);

struct EntropyOptions {
  std::filesystem::path bits_file;        // either a bit dump ...
  std::filesystem::path checkpoint_file;  // ... or checkpoint + config
  std::filesystem::path config_path;
  std::size_t samples = 0;  // 0: config eval_samples
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;
  std::string label = "entropy";
};

// Per-bit entropy CSVs (by index and by percentile) plus the percentile
// curve SVG.
void cmd_entropy(const EntropyOptions& options);

struct ReportOptions {
  std::filesystem::path records_csv;
  std::filesystem::path out_dir;
  double cutoff = 0.25;
  std::string ind_dataset_id = "ind";
};

// Re-aggregates an existing results CSV into shift tables and
// effective-robustness outputs.
void cmd_report(const ReportOptions& options);

}  // namespace bitlab
