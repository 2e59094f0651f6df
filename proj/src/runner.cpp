#include "bitlab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "bitlab/error.hpp"
#include "bitlab/game.hpp"
#include "bitlab/stats.hpp"
#include "bitlab/svg.hpp"
#include "bitlab/textfmt.hpp"

namespace bitlab {

namespace {

// Master-seed streams. Every derived seed is a pure function of the master
// seed and fixed counters, so adding runs or datasets never perturbs
// existing ones.
constexpr std::uint64_t kDataStream = 1;  // dataset draws
constexpr std::uint64_t kTaskStream = 2;  // contrast-task construction
constexpr std::uint64_t kInitStream = 3;  // per-run model init
constexpr std::uint64_t kTrainStream = 4; // per-run training
constexpr std::uint64_t kMaskStream = 5;  // per-run random masks

// Dataset counters within kDataStream.
constexpr std::uint64_t kTrainData = 0;
constexpr std::uint64_t kHeldoutData = 1;
constexpr std::uint64_t kEvalData = 2;  // shared by InD and shifted draws (coupled latents)

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  const std::size_t worker_count = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  for (std::size_t w = 0; w < worker_count; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& worker : workers) worker.join();
  if (error) std::rethrow_exception(error);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
}

std::string sanitize_id(const std::string& text) {
  std::string out;
  for (char c : text) {
    out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
  }
  return out;
}

std::string strategy_color(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::Random: return "#1f77b4";
    case MaskStrategy::TopEntropy: return "#d62728";
    case MaskStrategy::BottomEntropy: return "#ff7f0e";
    case MaskStrategy::None: return "#2ca02c";
  }
  return "#333333";
}

}  // namespace

void save_manifest(const ExperimentManifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "bitlab-manifest-v1";
  j["tool_version"] = manifest.tool_version;
  j["master_seed"] = manifest.master_seed;
  j["config"] = manifest.config_snapshot;
  j["output_files"] = manifest.output_files;
  nlohmann::json runs = nlohmann::json::array();
  for (const RunRecord& run : manifest.runs) {
    runs.push_back({{"model_id", run.model_id},
                    {"rep_length", run.rep_length},
                    {"contrast_size", run.contrast_size},
                    {"repeat", run.repeat},
                    {"init_seed", run.init_seed},
                    {"train_seed", run.train_seed},
                    {"mask_seed", run.mask_seed},
                    {"converged", run.converged},
                    {"initial_loss", run.initial_loss},
                    {"best_loss", run.best_loss},
                    {"best_heldout_accuracy", run.best_heldout_accuracy},
                    {"checkpoint_file", run.checkpoint_file},
                    {"bitdump_file", run.bitdump_file}});
  }
  j["runs"] = runs;
  write_text_file(path, j.dump(2) + "\n");
}

ExperimentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "bitlab-manifest-v1") {
    throw std::runtime_error("load_manifest: unsupported format tag in " + path.string());
  }
  ExperimentManifest manifest;
  manifest.tool_version = j.at("tool_version").get<std::string>();
  manifest.master_seed = j.at("master_seed").get<std::uint64_t>();
  manifest.config_snapshot = j.at("config").get<std::map<std::string, std::string>>();
  manifest.output_files = j.at("output_files").get<std::vector<std::string>>();
  for (const auto& entry : j.at("runs")) {
    RunRecord run;
    run.model_id = entry.at("model_id").get<std::string>();
    run.rep_length = entry.at("rep_length").get<std::size_t>();
    run.contrast_size = entry.at("contrast_size").get<int>();
    run.repeat = entry.at("repeat").get<std::size_t>();
    run.init_seed = entry.at("init_seed").get<std::uint64_t>();
    run.train_seed = entry.at("train_seed").get<std::uint64_t>();
    run.mask_seed = entry.at("mask_seed").get<std::uint64_t>();
    run.converged = entry.at("converged").get<bool>();
    run.initial_loss = entry.at("initial_loss").get<double>();
    run.best_loss = entry.at("best_loss").get<double>();
    run.best_heldout_accuracy = entry.at("best_heldout_accuracy").get<double>();
    run.checkpoint_file = entry.at("checkpoint_file").get<std::string>();
    run.bitdump_file = entry.at("bitdump_file").get<std::string>();
    manifest.runs.push_back(std::move(run));
  }
  return manifest;
}

KeyValueConfig config_from_manifest(const ExperimentManifest& manifest) {
  KeyValueConfig config;
  for (const auto& [key, value] : manifest.config_snapshot) config.set(key, value);
  return config;
}

KeyValueConfig default_experiment_config() {
  KeyValueConfig config;
  config.set("data.latent_features", "10");
  config.set("data.frequencies", "0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.2");
  config.set("data.observable_dim", "16");
  config.set("data.mixing_seed", "7");
  config.set("data.mixing_scale", "1");
  config.set("data.observation_noise_std", "0.1");
  config.set("data.marker_feature", "9");
  config.set("data.marker_coord", "15");
  config.set("data.marker_scale", "4");
  config.set("data.train_samples", "2000");
  config.set("data.heldout_samples", "600");
  config.set("data.eval_samples", "1500");

  config.set("model.rep_lengths", "16,32,64");
  config.set("model.embed_dim", "16");
  config.set("model.encoder_hidden", "32");
  config.set("model.embedder_hidden", "32");
  config.set("model.scorer_hidden", "32");
  config.set("model.scorer_context_mean", "false");

  config.set("train.ks", "3,5,10");
  config.set("train.repeats", "3");
  config.set("train.epochs", "20");
  config.set("train.batch_size", "32");
  config.set("train.learning_rate", "0.001");
  config.set("train.master_seed", "1");

  config.set("sweep.proportions", "0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5");
  config.set("sweep.cutoff", "0.25");
  return config;
}

SyntheticSpec spec_from_config(const KeyValueConfig& config) {
  SyntheticSpec spec;
  spec.latent_features = static_cast<std::size_t>(config.get_int("data.latent_features"));
  spec.frequencies = config.get_double_list("data.frequencies");
  spec.observable_dim = static_cast<std::size_t>(config.get_int("data.observable_dim"));
  spec.observation_noise_std = config.get_double("data.observation_noise_std", 0.1);

  const auto mixing_seed = static_cast<std::uint64_t>(config.get_int("data.mixing_seed", 7));
  const double mixing_scale = config.get_double("data.mixing_scale", 1.0);
  const std::string mixing_kind = config.get_string("data.mixing", "dense");
  spec.mixing.assign(spec.latent_features * spec.observable_dim, 0.0);
  if (mixing_kind == "dense") {
    Rng rng(mixing_seed);
    for (double& m : spec.mixing) m = mixing_scale * rng.normal();
  } else if (mixing_kind == "identity") {
    // Feature f lives on coordinate f; observable_dim must leave room.
    if (spec.observable_dim < spec.latent_features) {
      throw ConfigError("data.mixing", "identity mixing needs observable_dim >= latent_features");
    }
    for (std::size_t f = 0; f < spec.latent_features; ++f) {
      spec.mixing[f * spec.observable_dim + f] = mixing_scale;
    }
  } else {
    throw ConfigError("data.mixing", "expected dense or identity");
  }

  const std::int64_t marker_feature = config.get_int("data.marker_feature", -1);
  if (marker_feature >= 0) {
    SpuriousMarker marker;
    marker.feature_index = static_cast<std::size_t>(marker_feature);
    marker.offset.assign(spec.observable_dim, 0.0);
    const double marker_scale = config.get_double("data.marker_scale", 4.0);
    const std::string shape = config.get_string("data.marker_offset", "coord");
    if (shape == "coord") {
      const auto coord = static_cast<std::size_t>(
          config.get_int("data.marker_coord", static_cast<std::int64_t>(spec.observable_dim) - 1));
      if (coord >= spec.observable_dim) {
        throw ConfigError("data.marker_coord", "coordinate out of range");
      }
      marker.offset[coord] = marker_scale;
    } else if (shape == "dense") {
      // A fixed direction touching every coordinate, norm marker_scale.
      Rng offset_rng(mixing_seed + 0x5eed);
      double norm = 0.0;
      for (double& v : marker.offset) {
        v = offset_rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (double& v : marker.offset) v *= marker_scale / norm;
    } else if (shape == "block") {
      // marker_scale on every coordinate beyond the latent features.
      if (spec.observable_dim <= spec.latent_features) {
        throw ConfigError("data.marker_offset",
                          "block offset needs observable_dim > latent_features");
      }
      for (std::size_t d = spec.latent_features; d < spec.observable_dim; ++d) {
        marker.offset[d] = marker_scale;
      }
    } else {
      throw ConfigError("data.marker_offset", "expected coord, dense, or block");
    }
    // The marked feature's own mixing row can be attenuated so the marker
    // carries most of the in-distribution evidence for it.
    const double rare_scale = config.get_double("data.rare_mixing_scale", 1.0);
    double* row = spec.mixing.data() + marker.feature_index * spec.observable_dim;
    for (std::size_t d = 0; d < spec.observable_dim; ++d) row[d] *= rare_scale;
    spec.spurious_marker = std::move(marker);
  }
  spec.validate();
  return spec;
}

TrainConfig train_config_from_config(const KeyValueConfig& config) {
  TrainConfig tc;
  tc.learning_rate = config.get_double("train.learning_rate", 0.001);
  tc.adam_beta1 = config.get_double("train.adam_beta1", 0.9);
  tc.adam_beta2 = config.get_double("train.adam_beta2", 0.999);
  tc.adam_epsilon = config.get_double("train.adam_epsilon", 1e-8);
  tc.batch_size = static_cast<std::size_t>(config.get_int("train.batch_size", 32));
  tc.epochs = static_cast<std::size_t>(config.get_int("train.epochs", 12));
  tc.augmentation.scale_jitter = config.get_double("train.augment_scale_jitter", 0.1);
  tc.augmentation.additive_noise_std = config.get_double("train.augment_noise_std", 0.0);
  tc.augmentation.dropout_prob = config.get_double("train.augment_dropout", 0.0);
  return tc;
}

ModelDims model_dims_from_config(const KeyValueConfig& config, std::size_t rep_length,
                                 std::size_t input_dim) {
  ModelDims dims;
  dims.input_dim = input_dim;
  dims.rep_length = rep_length;
  dims.embed_dim = static_cast<std::size_t>(config.get_int("model.embed_dim", 16));
  // A hidden width of 0 selects a purely linear stage.
  const auto hidden = [&](const std::string& key, std::int64_t fallback) {
    std::vector<std::size_t> out;
    for (std::int64_t h :
         config.has(key) ? config.get_int_list(key) : std::vector<std::int64_t>{fallback}) {
      if (h > 0) out.push_back(static_cast<std::size_t>(h));
    }
    return out;
  };
  dims.encoder_hidden = hidden("model.encoder_hidden", 32);
  dims.embedder_hidden = hidden("model.embedder_hidden", 32);
  dims.scorer_hidden = hidden("model.scorer_hidden", 32);
  dims.scorer_context_mean = config.get_bool("model.scorer_context_mean", false);
  return dims;
}

SweepGrid sweep_grid_from_config(const KeyValueConfig& config) {
  SweepGrid grid = default_sweep_grid();
  if (config.has("sweep.proportions")) {
    grid.proportions = config.get_double_list("sweep.proportions");
  }
  grid.validate();
  return grid;
}

namespace {

// Effective config snapshot: every key the experiment consumed, defaults
// applied, so the manifest alone reproduces the run.
std::map<std::string, std::string> effective_snapshot(const KeyValueConfig& config) {
  KeyValueConfig out;
  out.set("data.latent_features", std::to_string(config.get_int("data.latent_features")));
  {
    std::string freqs;
    for (double f : config.get_double_list("data.frequencies")) {
      if (!freqs.empty()) freqs += ',';
      freqs += fmt_double(f);
    }
    out.set("data.frequencies", freqs);
  }
  out.set("data.observable_dim", std::to_string(config.get_int("data.observable_dim")));
  out.set("data.observation_noise_std",
          fmt_double(config.get_double("data.observation_noise_std", 0.1)));
  out.set("data.mixing", config.get_string("data.mixing", "dense"));
  out.set("data.mixing_seed", std::to_string(config.get_int("data.mixing_seed", 7)));
  out.set("data.mixing_scale", fmt_double(config.get_double("data.mixing_scale", 1.0)));
  out.set("data.marker_feature", std::to_string(config.get_int("data.marker_feature", -1)));
  if (config.get_int("data.marker_feature", -1) >= 0) {
    out.set("data.marker_coord",
            std::to_string(config.get_int("data.marker_coord",
                                          config.get_int("data.observable_dim") - 1)));
    out.set("data.marker_scale", fmt_double(config.get_double("data.marker_scale", 4.0)));
    out.set("data.marker_offset", config.get_string("data.marker_offset", "coord"));
    out.set("data.rare_mixing_scale", fmt_double(config.get_double("data.rare_mixing_scale", 1.0)));
  }
  out.set("data.train_samples", std::to_string(config.get_int("data.train_samples", 2000)));
  out.set("data.heldout_samples", std::to_string(config.get_int("data.heldout_samples", 600)));
  out.set("data.eval_samples", std::to_string(config.get_int("data.eval_samples", 1500)));

  {
    std::string reps;
    for (std::int64_t r : config.get_int_list("model.rep_lengths")) {
      if (!reps.empty()) reps += ',';
      reps += std::to_string(r);
    }
    out.set("model.rep_lengths", reps);
  }
  out.set("model.embed_dim", std::to_string(config.get_int("model.embed_dim", 16)));
  const auto copy_list = [&](const std::string& key, const std::string& fallback) {
    out.set(key, config.get_string(key, fallback));
  };
  copy_list("model.encoder_hidden", "32");
  copy_list("model.embedder_hidden", "32");
  copy_list("model.scorer_hidden", "32");
  out.set("model.scorer_context_mean",
          config.get_bool("model.scorer_context_mean", false) ? "true" : "false");

  {
    std::string ks;
    for (std::int64_t k : config.get_int_list("train.ks")) {
      if (!ks.empty()) ks += ',';
      ks += std::to_string(k);
    }
    out.set("train.ks", ks);
  }
  out.set("train.repeats", std::to_string(config.get_int("train.repeats", 3)));
  const TrainConfig tc = train_config_from_config(config);
  out.set("train.learning_rate", fmt_double(tc.learning_rate));
  out.set("train.adam_beta1", fmt_double(tc.adam_beta1));
  out.set("train.adam_beta2", fmt_double(tc.adam_beta2));
  out.set("train.adam_epsilon", fmt_double(tc.adam_epsilon));
  out.set("train.batch_size", std::to_string(tc.batch_size));
  out.set("train.epochs", std::to_string(tc.epochs));
  out.set("train.augment_scale_jitter", fmt_double(tc.augmentation.scale_jitter));
  out.set("train.augment_noise_std", fmt_double(tc.augmentation.additive_noise_std));
  out.set("train.augment_dropout", fmt_double(tc.augmentation.dropout_prob));
  out.set("train.master_seed", std::to_string(config.get_int("train.master_seed", 1)));

  {
    std::string props;
    for (double p : sweep_grid_from_config(config).proportions) {
      if (!props.empty()) props += ',';
      props += fmt_double(p);
    }
    out.set("sweep.proportions", props);
    out.set("sweep.cutoff", fmt_double(config.get_double("sweep.cutoff", 0.25)));
  }
  return out.entries();
}

}  // namespace

ExperimentManifest cmd_train(const TrainOptions& options) {
  KeyValueConfig config;
  std::uint64_t master_seed = 0;
  if (!options.manifest_path.empty()) {
    const ExperimentManifest prior = load_manifest(options.manifest_path);
    config = config_from_manifest(prior);
    master_seed = prior.master_seed;
  } else {
    config = KeyValueConfig::parse_file(options.config_path);
    master_seed = static_cast<std::uint64_t>(config.get_int("train.master_seed", 1));
  }
  if (options.seed_override) master_seed = *options.seed_override;

  std::filesystem::create_directories(options.out_dir);

  const SyntheticSpec spec = spec_from_config(config);
  const TrainConfig base_train = train_config_from_config(config);
  const auto train_samples = static_cast<std::size_t>(config.get_int("data.train_samples", 2000));
  const auto heldout_samples =
      static_cast<std::size_t>(config.get_int("data.heldout_samples", 600));
  const std::vector<std::int64_t> rep_lengths = config.get_int_list("model.rep_lengths");
  const std::vector<std::int64_t> ks = config.get_int_list("train.ks");
  const auto repeats = static_cast<std::size_t>(config.get_int("train.repeats", 3));

  const std::uint64_t data_stream = derive_seed(master_seed, kDataStream);
  const std::uint64_t task_stream = derive_seed(master_seed, kTaskStream);
  const std::uint64_t init_stream = derive_seed(master_seed, kInitStream);
  const std::uint64_t train_stream = derive_seed(master_seed, kTrainStream);
  const std::uint64_t mask_stream = derive_seed(master_seed, kMaskStream);

  const LabeledDataset train_data =
      gen_synthetic(spec, train_samples, derive_seed(data_stream, kTrainData));
  const LabeledDataset heldout_data =
      gen_synthetic(spec, heldout_samples, derive_seed(data_stream, kHeldoutData));

  std::map<int, std::vector<ContrastTask>> train_tasks;
  std::map<int, std::vector<ContrastTask>> heldout_tasks;
  for (std::int64_t k64 : ks) {
    const int k = static_cast<int>(k64);
    train_tasks[k] = make_tasks(train_data, k, derive_seed(task_stream, 2 * k64));
    heldout_tasks[k] = make_tasks(heldout_data, k, derive_seed(task_stream, 2 * k64 + 1));
  }

  ExperimentManifest manifest;
  manifest.master_seed = master_seed;
  manifest.config_snapshot = effective_snapshot(config);

  struct Cell {
    std::size_t rep_length;
    int k;
    std::size_t repeat;
  };
  std::vector<Cell> cells;
  for (std::int64_t r : rep_lengths) {
    for (std::int64_t k : ks) {
      for (std::size_t s = 0; s < repeats; ++s) {
        cells.push_back({static_cast<std::size_t>(r), static_cast<int>(k), s});
      }
    }
  }

  manifest.runs.resize(cells.size());
  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const Cell& cell = cells[i];
    RunRecord run;
    run.rep_length = cell.rep_length;
    run.contrast_size = cell.k;
    run.repeat = cell.repeat;
    run.model_id = "r" + std::to_string(cell.rep_length) + "_k" + std::to_string(cell.k) + "_s" +
                   std::to_string(cell.repeat);
    run.init_seed = derive_seed(init_stream, i);
    run.train_seed = derive_seed(train_stream, i);
    run.mask_seed = derive_seed(mask_stream, i);

    const ModelDims dims = model_dims_from_config(config, cell.rep_length, spec.observable_dim);
    ContrastiveModel model = make_model(dims, run.init_seed);
    TrainConfig tc = base_train;
    tc.seed = run.train_seed;
    tc.contrast_size = cell.k;

    const TrainResult result =
        train(std::move(model), train_tasks.at(cell.k), heldout_tasks.at(cell.k), tc);
    run.converged = converged(result.history);
    run.initial_loss = result.history.initial_loss;
    run.best_loss = result.history.best_loss();
    run.best_heldout_accuracy = result.history.best_heldout_accuracy();

    run.checkpoint_file = "ckpt_" + run.model_id + ".json";
    run.bitdump_file = "dump_" + run.model_id + ".bits";
    save_checkpoint(result.model, tc, options.out_dir / run.checkpoint_file);
    save_bitdump(hard_encode_dataset(result.model, heldout_data),
                 options.out_dir / run.bitdump_file);
    manifest.runs[i] = std::move(run);
  });

  for (const RunRecord& run : manifest.runs) {
    manifest.output_files.push_back(run.checkpoint_file);
    manifest.output_files.push_back(run.bitdump_file);
  }
  save_manifest(manifest, options.out_dir / "manifest.json");
  return manifest;
}

namespace {

struct Aggregation {
  std::vector<AccuracyRecord> baselines;
  std::vector<AccuracyRecord> masked;
  std::vector<std::string> dataset_ids;  // insertion order, InD first when present
};

Aggregation split_records(const std::vector<AccuracyRecord>& records,
                          const std::string& ind_dataset_id) {
  Aggregation agg;
  std::set<std::string> seen;
  if (std::any_of(records.begin(), records.end(), [&](const AccuracyRecord& r) {
        return r.dataset_id == ind_dataset_id;
      })) {
    agg.dataset_ids.push_back(ind_dataset_id);
    seen.insert(ind_dataset_id);
  }
  for (const AccuracyRecord& rec : records) {
    (rec.strategy == MaskStrategy::None ? agg.baselines : agg.masked).push_back(rec);
    if (seen.insert(rec.dataset_id).second) agg.dataset_ids.push_back(rec.dataset_id);
  }
  return agg;
}

// Per (strategy, dataset, model): mean masked accuracy over proportions
// <= cutoff. These are the intervention points of the robustness plots.
std::map<std::string, double> masked_mean_by_model(const std::vector<AccuracyRecord>& masked,
                                                   MaskStrategy strategy,
                                                   const std::string& dataset_id, double cutoff) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  for (const AccuracyRecord& rec : masked) {
    if (rec.strategy != strategy || rec.dataset_id != dataset_id || rec.p_mask > cutoff) continue;
    auto& [sum, count] = sums[rec.model_id];
    sum += rec.accuracy;
    ++count;
  }
  std::map<std::string, double> out;
  for (const auto& [model, entry] : sums) out[model] = entry.first / entry.second;
  return out;
}

void emit_aggregates(const std::vector<AccuracyRecord>& records, double cutoff,
                     const std::string& ind_dataset_id, const std::filesystem::path& out_dir,
                     std::vector<std::string>& files) {
  const Aggregation agg = split_records(records, ind_dataset_id);

  const std::vector<ShiftSummary> shifts = mean_accuracy_shift(agg.masked, agg.baselines, cutoff);
  write_text_file(out_dir / "shift_table.csv", shift_table_csv(shifts, cutoff));
  files.push_back("shift_table.csv");

  std::map<std::string, double> ind_baseline;  // model -> unmasked InD accuracy
  for (const AccuracyRecord& rec : agg.baselines) {
    if (rec.dataset_id == ind_dataset_id) ind_baseline[rec.model_id] = rec.accuracy;
  }
  if (ind_baseline.empty()) return;

  const std::vector<MaskStrategy> strategies = {
      MaskStrategy::Random, MaskStrategy::TopEntropy, MaskStrategy::BottomEntropy};

  for (const std::string& dataset_id : agg.dataset_ids) {
    if (dataset_id == ind_dataset_id) continue;

    std::vector<RobustnessPoint> baseline_points;
    for (const AccuracyRecord& rec : agg.baselines) {
      if (rec.dataset_id != dataset_id) continue;
      const auto ind = ind_baseline.find(rec.model_id);
      if (ind == ind_baseline.end()) continue;
      baseline_points.push_back({rec.model_id, ind->second, rec.accuracy});
    }
    if (baseline_points.size() < 2) continue;
    std::sort(baseline_points.begin(), baseline_points.end(),
              [](const RobustnessPoint& a, const RobustnessPoint& b) {
                return a.model_id < b.model_id;
              });

    std::vector<InterventionSeries> interventions;
    for (MaskStrategy strategy : strategies) {
      const auto ind_means = masked_mean_by_model(agg.masked, strategy, ind_dataset_id, cutoff);
      const auto ood_means = masked_mean_by_model(agg.masked, strategy, dataset_id, cutoff);
      InterventionSeries series;
      series.label = to_string(strategy);
      for (const auto& [model, ood_acc] : ood_means) {
        const auto ind_it = ind_means.find(model);
        if (ind_it == ind_means.end()) continue;
        series.points.push_back({model, ind_it->second, ood_acc});
      }
      if (!series.points.empty()) interventions.push_back(std::move(series));
    }

    const RobustnessAnalysis analysis = effective_robustness(baseline_points, interventions);

    // CSV: fit metadata in comments, then all points with residuals.
    std::string csv;
    csv += "# effective robustness for dataset " + dataset_id + " (InD: " + ind_dataset_id + ")\n";
    csv += "# baseline fit: slope=" + fmt_double(analysis.baseline_fit.slope) +
           " intercept=" + fmt_double(analysis.baseline_fit.intercept) +
           " residual_std=" + fmt_double(analysis.baseline_fit.residual_std) +
           " points=" + std::to_string(analysis.baseline_fit.point_count) + "\n";
    csv += "# intervention points: per-model mean masked accuracy over p_mask <= " +
           fmt_double(cutoff) + "\n";
    for (const InterventionSummary& s : analysis.summaries) {
      csv += "# displacement " + s.label +
             ": vs_baseline=" + fmt_double(s.mean_residual_vs_baseline) +
             " vs_identity=" + fmt_double(s.mean_residual_vs_identity) + "\n";
    }
    csv += "series,model_id,ind_accuracy,ood_accuracy\n";
    for (const RobustnessPoint& p : analysis.baseline_points) {
      csv += "baseline," + p.model_id + ',' + fmt_double(p.ind_accuracy) + ',' +
             fmt_double(p.ood_accuracy) + '\n';
    }
    for (const InterventionSeries& series : analysis.interventions) {
      for (const RobustnessPoint& p : series.points) {
        csv += series.label + ',' + p.model_id + ',' + fmt_double(p.ind_accuracy) + ',' +
               fmt_double(p.ood_accuracy) + '\n';
      }
    }
    const std::string stem = "robustness_" + sanitize_id(dataset_id);
    write_text_file(out_dir / (stem + ".csv"), csv);
    files.push_back(stem + ".csv");

    // Chart: scatter per series, baseline OLS line, dashed y = x reference.
    svg::Chart chart;
    chart.title = "effective robustness: " + dataset_id;
    chart.x_label = "InD accuracy (" + ind_dataset_id + ")";
    chart.y_label = "OOD accuracy (" + dataset_id + ")";
    double lo = 1.0;
    double hi = 0.0;
    const auto widen = [&](const std::vector<RobustnessPoint>& pts) {
      for (const RobustnessPoint& p : pts) {
        lo = std::min({lo, p.ind_accuracy, p.ood_accuracy});
        hi = std::max({hi, p.ind_accuracy, p.ood_accuracy});
      }
    };
    widen(analysis.baseline_points);
    for (const auto& series : analysis.interventions) widen(series.points);

    svg::Series identity;
    identity.label = "y = x";
    identity.color = "#000000";
    identity.dashed = true;
    identity.points = {{lo, lo}, {hi, hi}};
    chart.series.push_back(identity);

    svg::Series fit_line;
    fit_line.label = "baseline fit";
    fit_line.color = strategy_color(MaskStrategy::None);
    fit_line.points = {{lo, analysis.baseline_fit.slope * lo + analysis.baseline_fit.intercept},
                       {hi, analysis.baseline_fit.slope * hi + analysis.baseline_fit.intercept}};
    chart.series.push_back(fit_line);

    svg::Series base_scatter;
    base_scatter.label = "no mask";
    base_scatter.color = strategy_color(MaskStrategy::None);
    base_scatter.line = false;
    base_scatter.markers = true;
    for (const RobustnessPoint& p : analysis.baseline_points) {
      base_scatter.points.push_back({p.ind_accuracy, p.ood_accuracy});
    }
    chart.series.push_back(base_scatter);

    for (const InterventionSeries& series : analysis.interventions) {
      svg::Series scatter;
      scatter.label = series.label;
      scatter.color = strategy_color(parse_mask_strategy(series.label));
      scatter.line = false;
      scatter.markers = true;
      for (const RobustnessPoint& p : series.points) {
        scatter.points.push_back({p.ind_accuracy, p.ood_accuracy});
      }
      chart.series.push_back(scatter);
    }
    chart.write(out_dir / (stem + ".svg"));
    files.push_back(stem + ".svg");
  }
}

}  // namespace

void cmd_sweep(const SweepOptions& options) {
  const ExperimentManifest manifest = load_manifest(options.manifest_path);
  const KeyValueConfig config = config_from_manifest(manifest);
  const std::filesystem::path experiment_dir = options.manifest_path.parent_path();
  std::filesystem::create_directories(options.out_dir);

  std::vector<const RunRecord*> converged_runs;
  for (const RunRecord& run : manifest.runs) {
    if (run.converged) converged_runs.push_back(&run);
  }
  if (converged_runs.empty()) {
    throw std::runtime_error("cmd_sweep: no converged models in the manifest");
  }

  const std::uint64_t master_seed = manifest.master_seed;
  const std::uint64_t data_stream = derive_seed(master_seed, kDataStream);
  const std::uint64_t task_stream = derive_seed(master_seed, kTaskStream);

  const SyntheticSpec spec = spec_from_config(config);
  const std::size_t eval_samples =
      options.eval_samples > 0
          ? options.eval_samples
          : static_cast<std::size_t>(config.get_int("data.eval_samples", 1500));

  // InD and shifted datasets share the eval seed, so latent draws stay
  // coupled across the shift.
  struct DatasetSlot {
    std::string id;
    LabeledDataset data;
  };
  std::vector<DatasetSlot> slots;
  slots.push_back({"ind", gen_synthetic(spec, eval_samples, derive_seed(data_stream, kEvalData))});
  for (const std::string& desc : options.shifts) {
    const SyntheticSpec shifted = shift_distribution(spec, parse_shift(desc));
    slots.push_back({"ood_" + sanitize_id(desc),
                     gen_synthetic(shifted, eval_samples, derive_seed(data_stream, kEvalData))});
  }

  SweepGrid grid = sweep_grid_from_config(config);
  if (options.proportions) {
    grid.proportions = *options.proportions;
    grid.validate();
  }

  // Task sets per (dataset, k).
  std::set<int> ks;
  for (const RunRecord* run : converged_runs) ks.insert(run->contrast_size);
  std::map<int, std::vector<EvalDataset>> datasets_by_k;
  for (int k : ks) {
    std::vector<EvalDataset>& sets = datasets_by_k[k];
    for (std::size_t d = 0; d < slots.size(); ++d) {
      EvalDataset set;
      set.id = slots[d].id;
      set.data = slots[d].data;
      set.tasks = make_tasks(slots[d].data, k,
                             derive_seed(task_stream, 1000 + 100 * static_cast<std::uint64_t>(d) +
                                                          static_cast<std::uint64_t>(k)));
      sets.push_back(std::move(set));
    }
  }

  std::vector<std::vector<AccuracyRecord>> per_run(converged_runs.size());
  parallel_for(converged_runs.size(), options.jobs, [&](std::size_t i) {
    const RunRecord& run = *converged_runs[i];
    const Checkpoint ckpt = load_checkpoint(experiment_dir / run.checkpoint_file);
    const std::vector<EvalDataset>& sets = datasets_by_k.at(run.contrast_size);
    std::vector<const EvalDataset*> pointers;
    for (const EvalDataset& set : sets) pointers.push_back(&set);
    SweepResult sweep = mask_sweep(ckpt.model, run.model_id, pointers, sets.front(),
                                   options.entropy_source, grid, run.mask_seed);
    per_run[i] = std::move(sweep.records);
  });

  std::vector<AccuracyRecord> records;
  for (std::vector<AccuracyRecord>& part : per_run) {
    records.insert(records.end(), part.begin(), part.end());
  }
  std::sort(records.begin(), records.end(), [](const AccuracyRecord& a, const AccuracyRecord& b) {
    return std::tie(a.model_id, a.dataset_id, a.strategy, a.p_mask) <
           std::tie(b.model_id, b.dataset_id, b.strategy, b.p_mask);
  });

  std::vector<std::string> files;
  write_text_file(options.out_dir / "results.csv", records_csv(records));
  files.push_back("results.csv");
  emit_aggregates(records, options.cutoff, "ind", options.out_dir, files);

  nlohmann::json meta;
  meta["format"] = "bitlab-sweep-v1";
  meta["tool_version"] = kToolVersion;
  meta["manifest"] = options.manifest_path.string();
  meta["entropy_source"] = to_string(options.entropy_source);
  meta["cutoff"] = options.cutoff;
  meta["eval_samples"] = eval_samples;
  meta["shift_pooling"] =
      "all records with p_mask <= cutoff, one pair per (model,dataset,strategy,proportion)";
  meta["proportions"] = grid.proportions;
  {
    std::vector<std::string> strategy_names;
    for (MaskStrategy s : grid.strategies) strategy_names.push_back(to_string(s));
    meta["strategies"] = strategy_names;
  }
  meta["models"] = [&] {
    std::vector<std::string> ids;
    for (const RunRecord* run : converged_runs) ids.push_back(run->model_id);
    return ids;
  }();
  meta["output_files"] = files;
  write_text_file(options.out_dir / "sweep_meta.json", meta.dump(2) + "\n");
}

void cmd_game(const GameOptions& options, std::ostream& console) {
  std::vector<std::vector<double>> protocols;
  if (!options.frequencies.empty()) {
    if (options.bits != static_cast<int>(options.frequencies.size())) {
      throw std::domain_error("cmd_game: --f length must equal --b");
    }
    protocols.push_back(options.frequencies);
  } else if (!options.grid.empty()) {
    // All protocols in grid^b.
    std::vector<double> current(static_cast<std::size_t>(options.bits), options.grid.front());
    std::vector<std::size_t> idx(static_cast<std::size_t>(options.bits), 0);
    for (;;) {
      for (std::size_t i = 0; i < idx.size(); ++i) current[i] = options.grid[idx[i]];
      protocols.push_back(current);
      std::size_t pos = 0;
      while (pos < idx.size() && ++idx[pos] == options.grid.size()) {
        idx[pos] = 0;
        ++pos;
      }
      if (pos == idx.size()) break;
    }
  } else {
    throw std::domain_error("cmd_game: need --f or --grid");
  }

  const game::GameConfig config{options.contrast_size};
  std::string csv = "b,k,frequencies,p_win_exact,p_win_mc,mc_stderr,grad_norm\n";
  for (std::size_t pi = 0; pi < protocols.size(); ++pi) {
    const game::FeatureProtocol protocol{protocols[pi]};
    const game::WinEstimate exact = game::win_prob_exact(protocol, config);
    const game::WinEstimate mc =
        game::win_prob_monte_carlo(protocol, config, options.trials, derive_seed(options.seed, pi));
    const std::vector<double> grad = game::win_prob_gradient(protocol, config);
    double grad_norm = 0.0;
    for (double g : grad) grad_norm += g * g;
    grad_norm = std::sqrt(grad_norm);

    std::string freq_text;
    for (std::size_t i = 0; i < protocol.frequencies.size(); ++i) {
      if (i) freq_text += ';';
      freq_text += fmt_double(protocol.frequencies[i]);
    }
    csv += std::to_string(options.bits) + ',' + std::to_string(options.contrast_size) + ',' +
           freq_text + ',' + fmt_double(exact.value) + ',' + fmt_double(mc.value) + ',' +
           fmt_double(mc.std_error) + ',' + fmt_double(grad_norm) + '\n';
  }

  if (options.out_csv.empty()) {
    console << csv;
  } else {
    write_text_file(options.out_csv, csv);
    console << "wrote " << options.out_csv.string() << "\n";
  }

  if (options.optimize) {
    std::vector<double> init = options.init.empty() ? protocols.front() : options.init;
    if (init.size() != static_cast<std::size_t>(options.bits)) {
      throw std::domain_error("cmd_game: --init length must equal --b");
    }
    const game::FeatureProtocol terminal = game::optimize_protocol(
        config, game::FeatureProtocol{init}, options.step_size, options.steps);
    const game::WinEstimate at_terminal = game::win_prob_exact(terminal, config);
    console << "optimized protocol:";
    for (double f : terminal.frequencies) console << ' ' << fmt_double(f);
    console << "  p_win=" << fmt_double(at_terminal.value) << "\n";
  }
}

void cmd_entropy(const EntropyOptions& options) {
  std::filesystem::create_directories(options.out_dir);
  EntropyProfile profile;
  if (!options.bits_file.empty()) {
    profile = entropy_profile(load_bitdump(options.bits_file));
  } else if (!options.checkpoint_file.empty() && !options.config_path.empty()) {
    const Checkpoint ckpt = load_checkpoint(options.checkpoint_file);
    const KeyValueConfig config = KeyValueConfig::parse_file(options.config_path);
    const SyntheticSpec spec = spec_from_config(config);
    const std::size_t n = options.samples > 0
                              ? options.samples
                              : static_cast<std::size_t>(config.get_int("data.eval_samples", 1500));
    const LabeledDataset data = gen_synthetic(spec, n, options.seed);
    profile = entropy_profile(hard_encode_dataset(ckpt.model, data));
  } else {
    throw std::domain_error("cmd_entropy: need --bits, or --checkpoint with --config");
  }

  std::vector<std::string> files;
  write_text_file(options.out_dir / (options.label + ".csv"), entropy_profile_csv(profile));

  // Percentile view: bits sorted by entropy, descending.
  std::vector<std::size_t> order(profile.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return profile.entropies[a] > profile.entropies[b];
  });
  std::string csv = "percentile,bit_index,frequency,entropy\n";
  svg::Series curve;
  curve.label = "entropy";
  curve.markers = true;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double pct = order.size() > 1
                           ? 100.0 * static_cast<double>(i) / static_cast<double>(order.size() - 1)
                           : 0.0;
    csv += fmt_double(pct) + ',' + std::to_string(order[i]) + ',' +
           fmt_double(profile.frequencies[order[i]]) + ',' +
           fmt_double(profile.entropies[order[i]]) + '\n';
    curve.points.push_back({pct, profile.entropies[order[i]]});
  }
  write_text_file(options.out_dir / (options.label + "_percentile.csv"), csv);

  svg::Chart chart;
  chart.title = "bit entropy by percentile";
  chart.x_label = "entropy percentile";
  chart.y_label = "entropy (bits)";
  chart.series.push_back(curve);
  chart.write(options.out_dir / (options.label + "_percentile.svg"));
}

void cmd_report(const ReportOptions& options) {
  std::ifstream in(options.records_csv);
  if (!in) throw std::runtime_error("cmd_report: cannot open " + options.records_csv.string());
  const std::vector<AccuracyRecord> records = parse_records_csv(in);
  if (records.empty()) throw std::runtime_error("cmd_report: no records in input");
  std::filesystem::create_directories(options.out_dir);
  std::vector<std::string> files;
  emit_aggregates(records, options.cutoff, options.ind_dataset_id, options.out_dir, files);
}

}  // namespace bitlab
