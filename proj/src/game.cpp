#include "bitlab/game.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

#include "bitlab/error.hpp"
#include "bitlab/rng.hpp"

namespace bitlab::game {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

void validate(const FeatureProtocol& protocol, const GameConfig& config) {
  if (protocol.bits() == 0) throw std::domain_error("game: need at least one feature");
  for (double f : protocol.frequencies) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw std::domain_error("game: frequencies must lie in [0, 1]");
    }
  }
  if (config.contrast_size < 2) throw std::domain_error("game: k must be at least 2");
}

double ipow(double x, int n) {
  double result = 1.0;
  double base = x;
  for (int e = n; e > 0; e >>= 1) {
    if (e & 1) result *= base;
    base *= base;
  }
  return result;
}

// Neumaier compensated accumulator.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + comp; }
};

// Probability that one input's feature vector equals the given pattern.
double pattern_probability(const FeatureProtocol& protocol, std::uint64_t pattern_bits) {
  double q = 1.0;
  for (std::size_t i = 0; i < protocol.bits(); ++i) {
    const double f = protocol.frequencies[i];
    q *= (pattern_bits >> i & 1) ? f : 1.0 - f;
  }
  return q;
}

// f as num / 2^shift with shift <= 30, if the double is such a dyadic.
bool to_small_dyadic(double f, std::int64_t& num, int& shift) {
  for (int s = 0; s <= 30; ++s) {
    const double scaled = std::ldexp(f, s);
    if (scaled == std::floor(scaled)) {
      num = static_cast<std::int64_t>(scaled);
      shift = s;
      return true;
    }
  }
  return false;
}

struct BruteForceExact {
  // numerators[p] = integer weight of pattern p over the common denominator
  // 2^denom_shift (one input).
  std::vector<cpp_int> numerators;
  int denom_shift = 0;
  int k = 0;
  std::size_t pattern_count = 0;
  std::vector<cpp_int> per_match_sums;  // indexed by v - 1

  void recurse(std::size_t depth, std::size_t correct_pattern, int matches,
               const cpp_int& weight) {
    if (weight == 0) return;
    if (depth == static_cast<std::size_t>(k)) {
      per_match_sums[matches - 1] += weight;
      return;
    }
    for (std::size_t p = 0; p < pattern_count; ++p) {
      recurse(depth + 1, correct_pattern, matches + (p == correct_pattern ? 1 : 0),
              weight * numerators[p]);
    }
  }

  double run() {
    per_match_sums.assign(static_cast<std::size_t>(k), cpp_int(0));
    for (std::size_t p = 0; p < pattern_count; ++p) {
      recurse(1, p, 1, numerators[p]);
    }
    cpp_rational total(0);
    for (int v = 1; v <= k; ++v) {
      total += cpp_rational(per_match_sums[v - 1], v);
    }
    cpp_int denom(1);
    denom <<= denom_shift * k;
    total /= cpp_rational(denom);
    return static_cast<double>(total);
  }
};

struct BruteForceCompensated {
  std::vector<double> probabilities;
  int k = 0;
  std::size_t pattern_count = 0;
  CompensatedSum total;

  void recurse(std::size_t depth, std::size_t correct_pattern, int matches, double weight) {
    if (weight == 0.0) return;
    if (depth == static_cast<std::size_t>(k)) {
      total.add(weight / static_cast<double>(matches));
      return;
    }
    for (std::size_t p = 0; p < pattern_count; ++p) {
      recurse(depth + 1, correct_pattern, matches + (p == correct_pattern ? 1 : 0),
              weight * probabilities[p]);
    }
  }

  double run() {
    for (std::size_t p = 0; p < pattern_count; ++p) {
      recurse(1, p, 1, probabilities[p]);
    }
    return total.value();
  }
};

}  // namespace

WinEstimate win_prob_exact(const FeatureProtocol& protocol, const GameConfig& config) {
  validate(protocol, config);
  const auto b = static_cast<int>(protocol.bits());
  if (b > kMaxExactBits) {
    throw CapacityError("win_prob_exact: b exceeds the 2^b enumeration limit of " +
                        std::to_string(kMaxExactBits));
  }
  const int k = config.contrast_size;
  const std::uint64_t patterns = std::uint64_t{1} << b;
  CompensatedSum miss;
  for (std::uint64_t p = 0; p < patterns; ++p) {
    const double q = pattern_probability(protocol, p);
    miss.add(ipow(1.0 - q, k));
  }
  WinEstimate est;
  est.value = (static_cast<double>(patterns) - miss.value()) / static_cast<double>(k);
  return est;
}

double win_prob_conditional(const FeatureProtocol& protocol, const GameConfig& config,
                            const PresencePattern& pattern) {
  validate(protocol, config);
  if (pattern.pattern.size() != protocol.bits()) {
    throw std::domain_error("win_prob_conditional: pattern length must equal b");
  }
  const int k = config.contrast_size;
  if (pattern.match_count < 1 || pattern.match_count > k) {
    throw std::domain_error("win_prob_conditional: match_count must lie in [1, k]");
  }
  double q = 1.0;
  for (std::size_t i = 0; i < protocol.bits(); ++i) {
    const double f = protocol.frequencies[i];
    q *= pattern.pattern[i] ? f : 1.0 - f;
  }
  // The correct input always matches its own message, so q = 0 leaves the
  // v = 1 term with probability 1.
  if (q == 0.0) return 1.0;
  if (q == 1.0) return 1.0 / static_cast<double>(k);
  // Sum pmf(v - 1) / v over v = 1..k, where pmf is Binomial(k-1, q).
  double pmf = ipow(1.0 - q, k - 1);
  const double ratio = q / (1.0 - q);
  CompensatedSum sum;
  for (int v = 1; v <= k; ++v) {
    sum.add(pmf / static_cast<double>(v));
    pmf *= ratio * static_cast<double>(k - v) / static_cast<double>(v);
  }
  return sum.value();
}

WinEstimate win_prob_monte_carlo(const FeatureProtocol& protocol, const GameConfig& config,
                                 std::uint64_t trials, std::uint64_t seed) {
  validate(protocol, config);
  if (trials == 0) throw std::domain_error("win_prob_monte_carlo: trials must be >= 1");
  const std::size_t b = protocol.bits();
  const int k = config.contrast_size;
  Rng rng(seed);
  std::vector<std::uint8_t> correct(b);
  std::uint64_t wins = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      correct[i] = rng.bernoulli(protocol.frequencies[i]) ? 1 : 0;
    }
    int matches = 1;
    for (int d = 1; d < k; ++d) {
      bool same = true;
      for (std::size_t i = 0; i < b; ++i) {
        const bool present = rng.bernoulli(protocol.frequencies[i]);
        if (present != static_cast<bool>(correct[i])) same = false;
      }
      if (same) ++matches;
    }
    if (rng.below(static_cast<std::uint64_t>(matches)) == 0) ++wins;
  }
  WinEstimate est;
  est.trials = trials;
  est.value = static_cast<double>(wins) / static_cast<double>(trials);
  est.std_error = std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(trials));
  return est;
}

double win_prob_bruteforce(const FeatureProtocol& protocol, const GameConfig& config) {
  validate(protocol, config);
  const auto b = static_cast<int>(protocol.bits());
  const int k = config.contrast_size;
  if (k * b > kMaxBruteForceBits) {
    throw CapacityError("win_prob_bruteforce: k*b exceeds the 2^(k*b) limit of " +
                        std::to_string(kMaxBruteForceBits));
  }
  const std::size_t patterns = std::size_t{1} << b;

  std::vector<std::int64_t> nums(protocol.bits());
  std::vector<int> shifts(protocol.bits());
  bool dyadic = true;
  for (std::size_t i = 0; i < protocol.bits(); ++i) {
    if (!to_small_dyadic(protocol.frequencies[i], nums[i], shifts[i])) {
      dyadic = false;
      break;
    }
  }

  if (dyadic) {
    BruteForceExact brute;
    brute.k = k;
    brute.pattern_count = patterns;
    brute.denom_shift = 0;
    for (std::size_t i = 0; i < protocol.bits(); ++i) brute.denom_shift += shifts[i];
    brute.numerators.resize(patterns);
    for (std::size_t p = 0; p < patterns; ++p) {
      cpp_int w(1);
      for (std::size_t i = 0; i < protocol.bits(); ++i) {
        const std::int64_t present = nums[i];
        const std::int64_t absent = (std::int64_t{1} << shifts[i]) - nums[i];
        w *= (p >> i & 1) ? present : absent;
      }
      brute.numerators[p] = w;
    }
    return brute.run();
  }

  BruteForceCompensated brute;
  brute.k = k;
  brute.pattern_count = patterns;
  brute.probabilities.resize(patterns);
  for (std::size_t p = 0; p < patterns; ++p) {
    brute.probabilities[p] = pattern_probability(protocol, p);
  }
  return brute.run();
}

std::vector<double> win_prob_gradient(const FeatureProtocol& protocol,
                                      const GameConfig& config) {
  validate(protocol, config);
  const auto b = static_cast<int>(protocol.bits());
  if (b > kMaxExactBits) {
    throw CapacityError("win_prob_gradient: b exceeds the 2^b enumeration limit of " +
                        std::to_string(kMaxExactBits));
  }
  const int k = config.contrast_size;
  const std::uint64_t patterns = std::uint64_t{1} << b;
  std::vector<CompensatedSum> grad(protocol.bits());
  std::vector<double> prefix(protocol.bits() + 1);
  std::vector<double> suffix(protocol.bits() + 1);
  for (std::uint64_t p = 0; p < patterns; ++p) {
    prefix[0] = 1.0;
    for (int i = 0; i < b; ++i) {
      const double f = protocol.frequencies[static_cast<std::size_t>(i)];
      const double g = (p >> i & 1) ? f : 1.0 - f;
      prefix[i + 1] = prefix[i] * g;
    }
    suffix[b] = 1.0;
    for (int i = b - 1; i >= 0; --i) {
      const double f = protocol.frequencies[static_cast<std::size_t>(i)];
      const double g = (p >> i & 1) ? f : 1.0 - f;
      suffix[i] = suffix[i + 1] * g;
    }
    const double q = prefix[b];
    const double miss_pow = ipow(1.0 - q, k - 1);
    for (int i = 0; i < b; ++i) {
      const double others = prefix[i] * suffix[i + 1];  // prod of g_j, j != i
      const double sign = (p >> i & 1) ? 1.0 : -1.0;
      grad[static_cast<std::size_t>(i)].add(sign * others * miss_pow);
    }
  }
  std::vector<double> out(protocol.bits());
  for (std::size_t i = 0; i < protocol.bits(); ++i) out[i] = grad[i].value();
  return out;
}

FeatureProtocol optimize_protocol(const GameConfig& config, const FeatureProtocol& init,
                                  double step_size, int steps) {
  validate(init, config);
  for (double f : init.frequencies) {
    if (!(f > 0.0 && f < 1.0)) {
      throw std::domain_error("optimize_protocol: init frequencies must lie in (0, 1)");
    }
  }
  if (!(step_size > 0.0)) throw std::domain_error("optimize_protocol: step_size must be > 0");
  constexpr double kClamp = 1e-6;
  FeatureProtocol current = init;
  for (int s = 0; s < steps; ++s) {
    const std::vector<double> grad = win_prob_gradient(current, config);
    for (std::size_t i = 0; i < current.bits(); ++i) {
      double f = current.frequencies[i] + step_size * grad[i];
      f = std::min(1.0 - kClamp, std::max(kClamp, f));
      current.frequencies[i] = f;
    }
  }
  return current;
}

}  // namespace bitlab::game
