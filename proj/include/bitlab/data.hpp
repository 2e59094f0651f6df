#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bitlab/bitrep.hpp"

namespace bitlab {

// A distinctive observable offset applied whenever the designated (rare)
// latent feature is present in-distribution. Models a feature that is only
// recognizable through an incidental correlate. Once decoupled, the offset
// keeps its marginal rate but fires independently of the feature.
struct SpuriousMarker {
  std::size_t feature_index = 0;
  std::vector<double> offset;  // length observable_dim
  bool decoupled = false;
};

struct SyntheticSpec {
  std::size_t latent_features = 0;                // F
  std::vector<double> frequencies;                // per-feature presence, length F
  std::size_t observable_dim = 0;                 // D
  std::vector<double> mixing;                     // F x D, row-major
  double observation_noise_std = 0.0;
  std::optional<SpuriousMarker> spurious_marker;

  void validate() const;
};

struct LabeledDataset {
  std::vector<std::vector<double>> samples;        // observables
  std::vector<std::vector<std::uint8_t>> latents;  // ground truth, analysis only

  std::size_t size() const { return samples.size(); }
};

struct ContrastTask {
  std::vector<std::vector<double>> candidates;  // k observable vectors
  std::vector<int> source_rows;                 // dataset row of each candidate
  int correct_index = 0;

  int contrast_size() const { return static_cast<int>(candidates.size()); }
};

struct AugmentationSpec {
  double additive_noise_std = 0.0;
  double scale_jitter = 0.1;   // multiply by 1 + u, u uniform in +-scale_jitter
  double dropout_prob = 0.0;   // per-coordinate zeroing

  bool is_identity() const {
    return additive_noise_std == 0.0 && scale_jitter == 0.0 && dropout_prob == 0.0;
  }
};

// Distribution shifts: Decouple breaks the marker/feature co-occurrence
// (the marker becomes an independent draw at the feature's frequency),
// Refrequency replaces the latent frequency vector, NoiseShift changes the
// observation noise.
struct Decouple {};
struct Refrequency {
  std::vector<double> frequencies;
};
struct NoiseShift {
  double observation_noise_std = 0.0;
};
using ShiftDescriptor = std::variant<Decouple, Refrequency, NoiseShift>;

// Parses "decouple", "refrequency:f1,f2,..." or "noise:<std>".
ShiftDescriptor parse_shift(const std::string& text);
std::string to_string(const ShiftDescriptor& shift);

// Draw latents by frequency, apply the marker rule, mix into observables,
// add Gaussian noise. One derived RNG stream per sample.
LabeledDataset gen_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed);

SyntheticSpec shift_distribution(const SyntheticSpec& spec, const ShiftDescriptor& shift);

// One task per sample: the sample plus k-1 distinct distractors drawn
// without replacement from the other rows, candidates shuffled.
std::vector<ContrastTask> make_tasks(const LabeledDataset& dataset, int k, std::uint64_t seed);

// Scale jitter, then additive noise, then dropout.
std::vector<double> augment(const std::vector<double>& input, const AugmentationSpec& spec,
                            std::uint64_t seed);

// Bit-dump text format: header "bits L=<L> N=<N>", then N rows of L
// space-separated 0/1 characters.
void save_bitdump(const BitMatrix& bits, std::ostream& out);
void save_bitdump(const BitMatrix& bits, const std::filesystem::path& path);
BitMatrix load_bitdump(std::istream& in);
BitMatrix load_bitdump(const std::filesystem::path& path);

}  // namespace bitlab
