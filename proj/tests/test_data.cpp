#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "bitlab/data.hpp"
#include "bitlab/error.hpp"

using namespace bitlab;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.latent_features = 3;
  spec.frequencies = {1.0, 1.0, 1.0};
  spec.observable_dim = 2;
  spec.mixing = {1.0, 0.0,   //
                 0.0, 2.0,   //
                 0.5, 0.5};
  spec.observation_noise_std = 0.0;
  return spec;
}

}  // namespace

TEST_CASE("gen_synthetic: deterministic latents when frequencies are 1") {
  const LabeledDataset data = gen_synthetic(tiny_spec(), 4, 3);
  for (const auto& sample : data.samples) {
    CHECK(sample[0] == doctest::Approx(1.5));
    CHECK(sample[1] == doctest::Approx(2.5));
  }
  for (const auto& latent : data.latents) {
    CHECK(latent == std::vector<std::uint8_t>{1, 1, 1});
  }
}

TEST_CASE("gen_synthetic: same seed twice gives identical datasets") {
  SyntheticSpec spec = tiny_spec();
  spec.frequencies = {0.3, 0.6, 0.9};
  spec.observation_noise_std = 0.2;
  const LabeledDataset a = gen_synthetic(spec, 50, 11);
  const LabeledDataset b = gen_synthetic(spec, 50, 11);
  CHECK(a.samples == b.samples);
  CHECK(a.latents == b.latents);
  const LabeledDataset c = gen_synthetic(spec, 50, 12);
  CHECK(a.samples != c.samples);
}

TEST_CASE("gen_synthetic: empirical frequencies concentrate (3 sigma)") {
  SyntheticSpec spec = tiny_spec();
  spec.frequencies = {0.08, 0.5, 0.77};
  const std::size_t n = 100000;
  const LabeledDataset data = gen_synthetic(spec, n, 21);
  for (std::size_t f = 0; f < spec.latent_features; ++f) {
    std::size_t count = 0;
    for (const auto& latent : data.latents) count += latent[f];
    const double expect = spec.frequencies[f];
    const double sigma = std::sqrt(expect * (1 - expect) / static_cast<double>(n));
    CHECK(std::fabs(static_cast<double>(count) / n - expect) <= 3.0 * sigma);
  }
}

TEST_CASE("spurious marker: perfect co-occurrence in-distribution, independent after decouple") {
  SyntheticSpec spec;
  spec.latent_features = 2;
  spec.frequencies = {0.5, 0.1};
  spec.observable_dim = 2;
  spec.mixing = {1.0, 0.0,  //
                 0.0, 1.0};
  spec.observation_noise_std = 0.05;
  spec.spurious_marker = SpuriousMarker{1, {0.0, 10.0}, false};

  const std::size_t n = 20000;
  const LabeledDataset ind = gen_synthetic(spec, n, 8);
  std::size_t both = 0;
  std::size_t marker = 0;
  std::size_t feature = 0;
  const auto has_marker = [](const std::vector<double>& sample) {
    return sample[1] > 5.0;  // offset dominates mixing + noise
  };
  for (std::size_t s = 0; s < n; ++s) {
    const bool f = ind.latents[s][1] == 1;
    const bool m = has_marker(ind.samples[s]);
    feature += f;
    marker += m;
    both += f && m;
  }
  CHECK(both == feature);
  CHECK(marker == feature);

  // Decoupled: same marginal rate, but independent of the feature. Latents
  // are unchanged under the same seed.
  const SyntheticSpec decoupled = shift_distribution(spec, Decouple{});
  REQUIRE(decoupled.spurious_marker.has_value());
  CHECK(decoupled.spurious_marker->decoupled);
  const LabeledDataset ood = gen_synthetic(decoupled, n, 8);
  CHECK(ood.latents == ind.latents);

  std::size_t ood_both = 0;
  std::size_t ood_marker = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const bool f = ood.latents[s][1] == 1;
    const bool m = has_marker(ood.samples[s]);
    ood_marker += m;
    ood_both += f && m;
  }
  const double nd = static_cast<double>(n);
  const double p_f = static_cast<double>(feature) / nd;
  const double p_m = static_cast<double>(ood_marker) / nd;
  const double cooc = static_cast<double>(ood_both) / nd;
  const double product = p_f * p_m;
  const double sigma = std::sqrt(product * (1.0 - product) / nd);
  CHECK(std::fabs(cooc - product) <= 3.0 * sigma);
  // Marginal marker rate stays at the feature frequency.
  CHECK(std::fabs(p_m - 0.1) <= 3.0 * std::sqrt(0.1 * 0.9 / nd));
}

TEST_CASE("shift_distribution: refrequency, noise shift, and no-ops") {
  SyntheticSpec spec = tiny_spec();
  spec.frequencies = {0.2, 0.9, 0.4};

  const SyntheticSpec same = shift_distribution(spec, Decouple{});
  CHECK(same.frequencies == spec.frequencies);
  CHECK(same.mixing == spec.mixing);

  const SyntheticSpec refreq = shift_distribution(spec, Refrequency{{0.5, 0.5, 0.5}});
  const std::size_t n = 100000;
  const LabeledDataset data = gen_synthetic(refreq, n, 4);
  for (std::size_t f = 0; f < 3; ++f) {
    std::size_t count = 0;
    for (const auto& latent : data.latents) count += latent[f];
    CHECK(std::fabs(static_cast<double>(count) / n - 0.5) <= 3.0 * std::sqrt(0.25 / n));
  }

  const SyntheticSpec noise = shift_distribution(spec, NoiseShift{0.0});
  CHECK(noise.observation_noise_std == 0.0);
  CHECK(noise.frequencies == spec.frequencies);

  CHECK_THROWS_AS(shift_distribution(spec, Refrequency{{0.5}}), std::domain_error);
}

TEST_CASE("parse_shift: descriptors round-trip, unknown rejected") {
  CHECK(std::holds_alternative<Decouple>(parse_shift("decouple")));
  const auto refreq = parse_shift("refrequency:0.5,0.25");
  CHECK(std::get<Refrequency>(refreq).frequencies == std::vector<double>{0.5, 0.25});
  CHECK(std::get<NoiseShift>(parse_shift("noise:0.3")).observation_noise_std == 0.3);
  CHECK(to_string(parse_shift("noise:0.3")) == "noise:0.3");
  CHECK_THROWS_AS(parse_shift("warp:2"), std::domain_error);
  CHECK_THROWS_AS(parse_shift("noise:-1"), std::domain_error);
}

TEST_CASE("make_tasks: tiny dataset is forced to use every sample") {
  SyntheticSpec spec = tiny_spec();
  const LabeledDataset data = gen_synthetic(spec, 3, 5);
  const auto tasks = make_tasks(data, 3, 6);
  REQUIRE(tasks.size() == 3);
  for (const ContrastTask& task : tasks) {
    std::set<int> rows(task.source_rows.begin(), task.source_rows.end());
    CHECK(rows == std::set<int>{0, 1, 2});
    CHECK(task.candidates[static_cast<std::size_t>(task.correct_index)] ==
          data.samples[static_cast<std::size_t>(task.source_rows[static_cast<std::size_t>(
              task.correct_index)])]);
  }
}

TEST_CASE("make_tasks: correct_index is uniform and candidates are distinct") {
  SyntheticSpec spec = tiny_spec();
  spec.frequencies = {0.5, 0.5, 0.5};
  spec.observation_noise_std = 1.0;
  const LabeledDataset data = gen_synthetic(spec, 10000, 9);
  const int k = 4;
  const auto tasks = make_tasks(data, k, 10);
  REQUIRE(tasks.size() == data.size());

  std::vector<std::size_t> position_counts(static_cast<std::size_t>(k), 0);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const ContrastTask& task = tasks[t];
    ++position_counts[static_cast<std::size_t>(task.correct_index)];
    std::set<int> rows(task.source_rows.begin(), task.source_rows.end());
    CHECK(rows.size() == static_cast<std::size_t>(k));  // without replacement
    CHECK(task.source_rows[static_cast<std::size_t>(task.correct_index)] ==
          static_cast<int>(t));
    for (int row : task.source_rows) {
      CHECK(row >= 0);
      CHECK(row < static_cast<int>(data.size()));
    }
  }
  const double expect = static_cast<double>(tasks.size()) / k;
  const double sigma = std::sqrt(static_cast<double>(tasks.size()) * (1.0 / k) * (1.0 - 1.0 / k));
  for (std::size_t pos = 0; pos < static_cast<std::size_t>(k); ++pos) {
    CHECK(std::fabs(static_cast<double>(position_counts[pos]) - expect) <= 3.0 * sigma);
  }

  const auto again = make_tasks(data, k, 10);
  CHECK(again[0].source_rows == tasks[0].source_rows);
  CHECK_THROWS_AS(make_tasks(data, static_cast<int>(data.size()) + 1, 1), std::domain_error);
}

TEST_CASE("augment: identity, jitter bound, and zero-mean noise") {
  const std::vector<double> input{1.0, -2.0, 0.5};
  AugmentationSpec identity;
  identity.scale_jitter = 0.0;
  CHECK(augment(input, identity, 3) == input);

  AugmentationSpec jitter;
  jitter.scale_jitter = 0.1;
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    const std::vector<double> out = augment(input, jitter, seed);
    const double ratio = out[0] / input[0];
    for (std::size_t i = 0; i < input.size(); ++i) {
      CHECK(out[i] == doctest::Approx(input[i] * ratio).epsilon(1e-12));
    }
    CHECK(ratio >= 0.9);
    CHECK(ratio <= 1.1);
  }

  AugmentationSpec noisy;
  noisy.scale_jitter = 0.1;
  noisy.additive_noise_std = 0.2;
  const std::size_t trials = 10000;
  std::vector<double> mean(input.size(), 0.0);
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    const std::vector<double> out = augment(input, noisy, seed);
    for (std::size_t i = 0; i < input.size(); ++i) mean[i] += out[i] / trials;
  }
  for (std::size_t i = 0; i < input.size(); ++i) {
    // Var of one draw ~ (0.1 |x| / sqrt(3))^2 + 0.2^2.
    const double var = 0.01 * input[i] * input[i] / 3.0 + 0.04;
    CHECK(std::fabs(mean[i] - input[i]) <= 3.0 * std::sqrt(var / trials));
  }
}

TEST_CASE("bit dump: round trip and fixture") {
  BitMatrix bits(2, 3);
  bits.set(0, 0, 1);
  bits.set(0, 2, 1);
  bits.set(1, 1, 1);
  std::stringstream stream;
  save_bitdump(bits, stream);
  CHECK(stream.str() == "bits L=3 N=2\n1 0 1\n0 1 0\n");
  const BitMatrix back = load_bitdump(stream);
  CHECK(back == bits);

  std::stringstream fixture("bits L=2 N=1\n1 0\n");
  const BitMatrix parsed = load_bitdump(fixture);
  CHECK(parsed.rows() == 1);
  CHECK(parsed.cols() == 2);
  CHECK(parsed.at(0, 0) == 1);
  CHECK(parsed.at(0, 1) == 0);
}

TEST_CASE("bit dump: parse errors carry line numbers") {
  std::stringstream bad_header("bots L=2 N=1\n1 0\n");
  CHECK_THROWS_AS(load_bitdump(bad_header), ParseError);

  std::stringstream short_row("bits L=3 N=2\n1 0 1\n0 1\n");
  try {
    load_bitdump(short_row);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  std::stringstream bad_char("bits L=2 N=1\n1 x\n");
  try {
    load_bitdump(bad_char);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  std::stringstream truncated("bits L=2 N=3\n1 0\n");
  CHECK_THROWS_AS(load_bitdump(truncated), ParseError);
}
