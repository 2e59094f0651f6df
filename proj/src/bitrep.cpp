#include "bitlab/bitrep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bitlab/rng.hpp"
#include "bitlab/textfmt.hpp"

namespace bitlab {

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("binary_entropy: p must lie in [0, 1], got " + fmt_double(p));
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

BitMatrix::BitMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0) {
  if (rows == 0 || cols == 0) {
    throw std::domain_error("BitMatrix: dimensions must be at least 1x1");
  }
}

void BitMatrix::set(std::size_t r, std::size_t c, std::uint8_t bit) {
  if (bit > 1) throw std::domain_error("BitMatrix: entries must be 0 or 1");
  values_[r * cols_ + c] = bit;
}

EntropyProfile entropy_profile(const BitMatrix& bits) {
  const std::size_t n = bits.rows();
  const std::size_t len = bits.cols();
  EntropyProfile profile;
  profile.frequencies.resize(len);
  profile.entropies.resize(len);
  for (std::size_t c = 0; c < len; ++c) {
    std::size_t ones = 0;
    for (std::size_t r = 0; r < n; ++r) ones += bits.at(r, c);
    const double freq = static_cast<double>(ones) / static_cast<double>(n);
    profile.frequencies[c] = freq;
    profile.entropies[c] = binary_entropy(freq);
  }
  return profile;
}

std::string to_string(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::None: return "none";
    case MaskStrategy::Random: return "random";
    case MaskStrategy::TopEntropy: return "top_entropy";
    case MaskStrategy::BottomEntropy: return "bottom_entropy";
  }
  throw std::domain_error("to_string: unknown mask strategy");
}

MaskStrategy parse_mask_strategy(const std::string& name) {
  if (name == "none") return MaskStrategy::None;
  if (name == "random") return MaskStrategy::Random;
  if (name == "top_entropy") return MaskStrategy::TopEntropy;
  if (name == "bottom_entropy") return MaskStrategy::BottomEntropy;
  throw std::domain_error("unknown mask strategy '" + name + "'");
}

std::size_t Mask::masked_count() const {
  return static_cast<std::size_t>(
      std::count(variables.begin(), variables.end(), std::uint8_t{0}));
}

Mask identity_mask(std::size_t length) {
  Mask mask;
  mask.variables.assign(length, 1);
  mask.proportion = 0.0;
  mask.strategy = MaskStrategy::None;
  return mask;
}

Mask build_mask(const EntropyProfile& profile, MaskStrategy strategy, double p_mask,
                std::optional<std::uint64_t> seed) {
  if (!(p_mask >= 0.0 && p_mask <= 1.0)) {
    throw std::domain_error("build_mask: p_mask must lie in [0, 1]");
  }
  if ((strategy == MaskStrategy::Random) != seed.has_value()) {
    throw std::invalid_argument("build_mask: seed must be given iff strategy is random");
  }
  const std::size_t len = profile.size();
  const auto l_mask = static_cast<std::size_t>(
      std::floor(p_mask * static_cast<double>(len)));
  if (strategy == MaskStrategy::None && l_mask > 0) {
    throw std::invalid_argument("build_mask: strategy none cannot mask bits");
  }

  Mask mask;
  mask.variables.assign(len, 1);
  mask.proportion = p_mask;
  mask.strategy = strategy;
  mask.seed = seed;
  if (l_mask == 0) return mask;

  std::vector<std::size_t> order(len);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (strategy) {
    case MaskStrategy::TopEntropy:
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return profile.entropies[a] > profile.entropies[b];
      });
      break;
    case MaskStrategy::BottomEntropy:
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return profile.entropies[a] < profile.entropies[b];
      });
      break;
    case MaskStrategy::Random: {
      // Partial Fisher-Yates: the first l_mask slots become the draw
      // without replacement.
      Rng rng(*seed);
      for (std::size_t i = 0; i < l_mask; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(len - i));
        std::swap(order[i], order[j]);
      }
      break;
    }
    case MaskStrategy::None:
      break;  // unreachable: l_mask == 0 returned above
  }
  for (std::size_t i = 0; i < l_mask; ++i) mask.variables[order[i]] = 0;
  return mask;
}

MaskedRepresentation apply_mask(const std::vector<double>& values, const Mask& mask) {
  if (values.size() != mask.size()) {
    throw std::domain_error("apply_mask: value/mask length mismatch");
  }
  MaskedRepresentation out;
  out.values.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.values[i] = mask.variables[i] ? values[i] : 0.5;
  }
  return out;
}

std::string entropy_profile_csv(const EntropyProfile& profile) {
  std::string csv = "bit_index,frequency,entropy\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    csv += std::to_string(i);
    csv += ',';
    csv += fmt_double(profile.frequencies[i]);
    csv += ',';
    csv += fmt_double(profile.entropies[i]);
    csv += '\n';
  }
  return csv;
}

}  // namespace bitlab
