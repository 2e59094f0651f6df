#pragma once

#include <cstdint>
#include <vector>

namespace bitlab::game {

// Per-feature occurrence frequencies f_1..f_b of the abstract contrastive
// game; one communicated bit per feature.
struct FeatureProtocol {
  std::vector<double> frequencies;

  std::size_t bits() const { return frequencies.size(); }
};

struct GameConfig {
  int contrast_size = 2;  // k: inputs shown to the distinguisher, correct one included
};

// Which features the correct input carries, plus the number of shown inputs
// consistent with the communicated message (correct input included).
struct PresencePattern {
  std::vector<bool> pattern;
  int match_count = 1;
};

struct WinEstimate {
  double value = 0.0;
  double std_error = 0.0;     // 0 for exact methods
  std::uint64_t trials = 0;   // 0 for exact methods
};

// Enumeration caps; beyond them the operations raise CapacityError.
inline constexpr int kMaxExactBits = 20;        // 2^b pattern terms
inline constexpr int kMaxBruteForceBits = 20;   // 2^(k*b) joint assignments

// Closed-form win probability:
//   P(win) = 2^b/k - (1/k) * sum over presence patterns of (1 - prod g_i)^k,
// g_i = f_i where the pattern has the feature and 1 - f_i where it does not.
WinEstimate win_prob_exact(const FeatureProtocol& protocol, const GameConfig& config);

// P(win | pattern) summed over the match count v = 1..k:
//   sum (1/v) q^(v-1) (1-q)^(k-v) C(k-1, v-1),  q = prod g_i,
// with q = 0 resolved to 1 by its v = 1 term.
double win_prob_conditional(const FeatureProtocol& protocol, const GameConfig& config,
                            const PresencePattern& pattern);

// Simulates the game: sample k inputs, communicate the correct input's
// features, pick uniformly among consistent inputs.
WinEstimate win_prob_monte_carlo(const FeatureProtocol& protocol, const GameConfig& config,
                                 std::uint64_t trials, std::uint64_t seed);

// Independent oracle: enumerates every joint assignment of b features to k
// inputs. Uses exact rational arithmetic when all frequencies are dyadic
// with denominator <= 2^30 (covers frequencies written as short decimals in
// binary), compensated floating-point summation otherwise.
double win_prob_bruteforce(const FeatureProtocol& protocol, const GameConfig& config);

// Analytic dP(win)/df_i for every feature.
std::vector<double> win_prob_gradient(const FeatureProtocol& protocol, const GameConfig& config);

// Projected gradient ascent on win_prob_exact; frequencies clamped to
// [1e-6, 1 - 1e-6]. Init frequencies must lie strictly inside (0, 1).
FeatureProtocol optimize_protocol(const GameConfig& config, const FeatureProtocol& init,
                                  double step_size, int steps);

}  // namespace bitlab::game
