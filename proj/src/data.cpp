#include "bitlab/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bitlab/error.hpp"
#include "bitlab/rng.hpp"
#include "bitlab/textfmt.hpp"

namespace bitlab {

void SyntheticSpec::validate() const {
  if (latent_features == 0) throw std::domain_error("SyntheticSpec: need at least one feature");
  if (observable_dim == 0) throw std::domain_error("SyntheticSpec: need observable_dim >= 1");
  if (frequencies.size() != latent_features) {
    throw std::domain_error("SyntheticSpec: frequencies length must equal latent_features");
  }
  for (double f : frequencies) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::domain_error("SyntheticSpec: frequencies must lie in [0, 1]");
    }
  }
  if (mixing.size() != latent_features * observable_dim) {
    throw std::domain_error("SyntheticSpec: mixing must be F x D");
  }
  if (!(observation_noise_std >= 0.0)) {
    throw std::domain_error("SyntheticSpec: observation noise std must be >= 0");
  }
  if (spurious_marker) {
    if (spurious_marker->feature_index >= latent_features) {
      throw std::domain_error("SyntheticSpec: marker feature index out of range");
    }
    if (spurious_marker->offset.size() != observable_dim) {
      throw std::domain_error("SyntheticSpec: marker offset length must equal observable_dim");
    }
  }
}

ShiftDescriptor parse_shift(const std::string& text) {
  if (text == "decouple") return Decouple{};
  if (text.rfind("refrequency:", 0) == 0) {
    Refrequency shift;
    std::stringstream ss(text.substr(12));
    std::string item;
    while (std::getline(ss, item, ',')) {
      double f = 0.0;
      if (!parse_double(item, f)) {
        throw std::domain_error("parse_shift: bad frequency '" + item + "'");
      }
      shift.frequencies.push_back(f);
    }
    if (shift.frequencies.empty()) {
      throw std::domain_error("parse_shift: refrequency needs at least one frequency");
    }
    return shift;
  }
  if (text.rfind("noise:", 0) == 0) {
    double std_dev = 0.0;
    if (!parse_double(text.substr(6), std_dev) || std_dev < 0.0) {
      throw std::domain_error("parse_shift: bad noise std in '" + text + "'");
    }
    return NoiseShift{std_dev};
  }
  throw std::domain_error("parse_shift: unknown shift descriptor '" + text + "'");
}

std::string to_string(const ShiftDescriptor& shift) {
  if (std::holds_alternative<Decouple>(shift)) return "decouple";
  if (const auto* re = std::get_if<Refrequency>(&shift)) {
    std::string out = "refrequency:";
    for (std::size_t i = 0; i < re->frequencies.size(); ++i) {
      if (i) out += ',';
      out += fmt_double(re->frequencies[i]);
    }
    return out;
  }
  return "noise:" + fmt_double(std::get<NoiseShift>(shift).observation_noise_std);
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw std::domain_error("gen_synthetic: n must be >= 1");
  const std::size_t dim = spec.observable_dim;
  LabeledDataset out;
  out.samples.resize(n);
  out.latents.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng(derive_seed(seed, s));
    std::vector<std::uint8_t> latent(spec.latent_features);
    for (std::size_t f = 0; f < spec.latent_features; ++f) {
      latent[f] = rng.bernoulli(spec.frequencies[f]) ? 1 : 0;
    }
    std::vector<double> obs(dim, 0.0);
    for (std::size_t f = 0; f < spec.latent_features; ++f) {
      if (!latent[f]) continue;
      const double* row = spec.mixing.data() + f * dim;
      for (std::size_t d = 0; d < dim; ++d) obs[d] += row[d];
    }
    // The marker draw consumes one uniform whether or not it is used, so a
    // coupled spec and its decoupled shift produce identical latents and
    // noise under the same seed.
    const double marker_draw = rng.uniform();
    if (spec.spurious_marker) {
      const SpuriousMarker& marker = *spec.spurious_marker;
      const bool active = marker.decoupled
                              ? marker_draw < spec.frequencies[marker.feature_index]
                              : latent[marker.feature_index] != 0;
      if (active) {
        for (std::size_t d = 0; d < dim; ++d) obs[d] += marker.offset[d];
      }
    }
    for (std::size_t d = 0; d < dim; ++d) obs[d] += rng.normal(spec.observation_noise_std);
    out.samples[s] = std::move(obs);
    out.latents[s] = std::move(latent);
  }
  return out;
}

SyntheticSpec shift_distribution(const SyntheticSpec& spec, const ShiftDescriptor& shift) {
  spec.validate();
  SyntheticSpec out = spec;
  if (std::holds_alternative<Decouple>(shift)) {
    if (out.spurious_marker) out.spurious_marker->decoupled = true;
  } else if (const auto* re = std::get_if<Refrequency>(&shift)) {
    if (re->frequencies.size() != spec.latent_features) {
      throw std::domain_error("shift_distribution: refrequency length must equal F");
    }
    out.frequencies = re->frequencies;
  } else {
    const auto& noise = std::get<NoiseShift>(shift);
    if (!(noise.observation_noise_std >= 0.0)) {
      throw std::domain_error("shift_distribution: noise std must be >= 0");
    }
    out.observation_noise_std = noise.observation_noise_std;
  }
  return out;
}

std::vector<ContrastTask> make_tasks(const LabeledDataset& dataset, int k, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  if (k < 2) throw std::domain_error("make_tasks: k must be at least 2");
  if (n < static_cast<std::size_t>(k)) {
    throw std::domain_error("make_tasks: dataset smaller than k");
  }
  std::vector<ContrastTask> tasks(n);
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng(derive_seed(seed, s));
    // Distractors: k-1 distinct rows drawn from [0, n-1) and remapped to
    // skip the correct row s.
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(k));
    rows.push_back(static_cast<int>(s));
    while (rows.size() < static_cast<std::size_t>(k)) {
      auto candidate = static_cast<std::size_t>(rng.below(n - 1));
      if (candidate >= s) ++candidate;
      if (std::find(rows.begin(), rows.end(), static_cast<int>(candidate)) == rows.end()) {
        rows.push_back(static_cast<int>(candidate));
      }
    }
    for (std::size_t i = rows.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i + 1));
      std::swap(rows[i], rows[j]);
    }
    ContrastTask& task = tasks[s];
    task.source_rows = rows;
    task.candidates.reserve(rows.size());
    for (int row : rows) task.candidates.push_back(dataset.samples[static_cast<std::size_t>(row)]);
    task.correct_index = static_cast<int>(
        std::find(rows.begin(), rows.end(), static_cast<int>(s)) - rows.begin());
  }
  return tasks;
}

std::vector<double> augment(const std::vector<double>& input, const AugmentationSpec& spec,
                            std::uint64_t seed) {
  if (!(spec.additive_noise_std >= 0.0) || !(spec.scale_jitter >= 0.0) ||
      !(spec.dropout_prob >= 0.0 && spec.dropout_prob <= 1.0)) {
    throw std::domain_error("augment: invalid augmentation spec");
  }
  Rng rng(seed);
  std::vector<double> out = input;
  if (spec.scale_jitter > 0.0) {
    const double scale = 1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter);
    for (double& x : out) x *= scale;
  }
  if (spec.additive_noise_std > 0.0) {
    for (double& x : out) x += rng.normal(spec.additive_noise_std);
  }
  if (spec.dropout_prob > 0.0) {
    for (double& x : out) {
      if (rng.bernoulli(spec.dropout_prob)) x = 0.0;
    }
  }
  return out;
}

void save_bitdump(const BitMatrix& bits, std::ostream& out) {
  out << "bits L=" << bits.cols() << " N=" << bits.rows() << "\n";
  for (std::size_t r = 0; r < bits.rows(); ++r) {
    for (std::size_t c = 0; c < bits.cols(); ++c) {
      if (c) out << ' ';
      out << static_cast<int>(bits.at(r, c));
    }
    out << "\n";
  }
}

void save_bitdump(const BitMatrix& bits, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_bitdump: cannot open " + path.string());
  save_bitdump(bits, out);
}

BitMatrix load_bitdump(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("bit dump: empty file", 1);
  std::size_t len = 0;
  std::size_t n = 0;
  {
    std::istringstream header(line);
    std::string tag;
    std::string l_field;
    std::string n_field;
    header >> tag >> l_field >> n_field;
    if (tag != "bits" || l_field.rfind("L=", 0) != 0 || n_field.rfind("N=", 0) != 0) {
      throw ParseError("bit dump: malformed header, expected 'bits L=<L> N=<N>'", 1);
    }
    try {
      len = std::stoul(l_field.substr(2));
      n = std::stoul(n_field.substr(2));
    } catch (const std::exception&) {
      throw ParseError("bit dump: malformed header dimensions", 1);
    }
    if (len == 0 || n == 0) throw ParseError("bit dump: dimensions must be >= 1", 1);
  }
  BitMatrix bits(n, len);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t line_no = r + 2;
    if (!std::getline(in, line)) {
      throw ParseError("bit dump: expected " + std::to_string(n) + " rows", line_no);
    }
    std::istringstream row(line);
    std::string token;
    std::size_t c = 0;
    while (row >> token) {
      if (c >= len) throw ParseError("bit dump: row longer than L=" + std::to_string(len), line_no);
      if (token == "0") {
        bits.set(r, c, 0);
      } else if (token == "1") {
        bits.set(r, c, 1);
      } else {
        throw ParseError("bit dump: non-binary entry '" + token + "'", line_no);
      }
      ++c;
    }
    if (c != len) {
      throw ParseError("bit dump: row has " + std::to_string(c) + " entries, expected " +
                           std::to_string(len),
                       line_no);
    }
  }
  return bits;
}

BitMatrix load_bitdump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_bitdump: cannot open " + path.string());
  return load_bitdump(in);
}

}  // namespace bitlab
