#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bitlab {

// Binary Shannon entropy of a Bernoulli(p) bit, in bits. Total on [0, 1]
// with the 0*log2(0) = 0 convention; throws std::domain_error outside.
double binary_entropy(double p);

// N x L matrix of hard bits: one row per sample, one column per
// representation bit.
class BitMatrix {
 public:
  BitMatrix(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::uint8_t at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, std::uint8_t bit);

  const std::vector<std::uint8_t>& values() const { return values_; }

  bool operator==(const BitMatrix& other) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> values_;
};

// Per-column bit statistics: frequencies[i] = P(bit i == 1) over the rows,
// entropies[i] = binary_entropy(frequencies[i]).
struct EntropyProfile {
  std::vector<double> frequencies;
  std::vector<double> entropies;

  std::size_t size() const { return entropies.size(); }
};

EntropyProfile entropy_profile(const BitMatrix& bits);

enum class MaskStrategy { None, Random, TopEntropy, BottomEntropy };

std::string to_string(MaskStrategy strategy);
MaskStrategy parse_mask_strategy(const std::string& name);

// Masking variables m_i: 0 marks a masked bit. Exactly floor(p_mask * L)
// variables are zero.
struct Mask {
  std::vector<std::uint8_t> variables;
  double proportion = 0.0;
  MaskStrategy strategy = MaskStrategy::None;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return variables.size(); }
  std::size_t masked_count() const;
};

// All-ones mask (strategy None); the unmasked baseline.
Mask identity_mask(std::size_t length);

// TopEntropy zeroes the l_mask highest-entropy bits, BottomEntropy the
// lowest, Random a seeded uniform draw without replacement. Entropy ties
// break toward the lower bit index. Seed is required iff strategy is Random.
Mask build_mask(const EntropyProfile& profile, MaskStrategy strategy, double p_mask,
                std::optional<std::uint64_t> seed = std::nullopt);

struct MaskedRepresentation {
  std::vector<double> values;  // masked positions read exactly 0.5
};

// r_hat_i = m_i * r_i + (1 - m_i) * 0.5. Accepts soft channel outputs as
// well as hard bits.
MaskedRepresentation apply_mask(const std::vector<double>& values, const Mask& mask);

// CSV with header bit_index,frequency,entropy.
std::string entropy_profile_csv(const EntropyProfile& profile);

}  // namespace bitlab
