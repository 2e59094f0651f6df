#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bitlab/error.hpp"
#include "bitlab/eval.hpp"
#include "bitlab/rng.hpp"

using namespace bitlab;

namespace {

// Two-candidate model whose logit is just the candidate's first coordinate;
// the representation is ignored, so every outcome is hand-computable.
ContrastiveModel first_coordinate_model() {
  ContrastiveModel model;
  model.rep_length = 2;
  model.encoder.layers = {{2, 2, {1.0, 0.0, 0.0, 1.0}, {0.0, 0.0}}};
  model.candidate_embedder.layers = {{2, 1, {1.0, 0.0}, {0.0}}};
  model.scorer.layers = {{3, 1, {1.0, 0.0, 0.0}, {0.0}}};
  model.validate();
  return model;
}

ContrastTask two_candidate_task(std::vector<double> correct, std::vector<double> distractor) {
  ContrastTask task;
  task.candidates = {std::move(correct), std::move(distractor)};
  task.correct_index = 0;
  task.source_rows = {0, 1};
  return task;
}

// Paired t-test fixtures frozen from an independent statistics oracle run
// before this module was built.
struct TTestFixture {
  std::vector<double> before;
  std::vector<double> after;
  double t;
  double p;
};

const std::vector<TTestFixture>& ttest_fixtures() {
  static const std::vector<TTestFixture> fixtures = {
      {{0, 0, 0, 0}, {1, 2, 3, 4}, 3.87298334620742, 0.030466291662171},
      {{0, 0, 0, 0, 0}, {0.5, -0.2, 0.3, 0.1, 0.4}, 1.77281052085584, 0.150944053669017},
      {{1, 2, 3, 4, 5, 6}, {3.1, 1.9, 5.0, 4.2, 4.8, 6.6}, 1.81830965459682, 0.128688787526619},
      {{10, 11, 9, 12, 8}, {9.2, 10.1, 9.4, 11.0, 7.7}, -2.0029651610055, 0.11572412265057},
      {{0.62, 0.58, 0.71, 0.44, 0.50, 0.66, 0.39, 0.55},
       {0.65, 0.61, 0.70, 0.49, 0.56, 0.64, 0.45, 0.58},
       2.71326906624554,
       0.0300566064142239},
      {{0, 0, 0}, {0.01, -0.02, 0.03}, 0.458831467741123, 0.691393300075816},
  };
  return fixtures;
}

}  // namespace

TEST_CASE("paired_t_test: matches the frozen oracle fixtures") {
  for (const TTestFixture& fixture : ttest_fixtures()) {
    const TTestResult result = paired_t_test(fixture.before, fixture.after);
    CHECK(std::fabs(result.t_statistic - fixture.t) <= 1e-9);
    CHECK(std::fabs(result.p_value - fixture.p) <= 1e-9);
    CHECK(result.degrees_of_freedom == static_cast<double>(fixture.before.size() - 1));
    CHECK_FALSE(result.degenerate);
  }
}

TEST_CASE("paired_t_test: identical vectors, sign symmetry, degenerate cases") {
  const std::vector<double> xs{0.4, 0.6, 0.5};
  const TTestResult same = paired_t_test(xs, xs);
  CHECK(same.t_statistic == 0.0);
  CHECK(same.p_value == 1.0);

  const std::vector<double> before{0, 0, 0, 0};
  const std::vector<double> after{1, 2, 3, 4};
  const TTestResult forward = paired_t_test(before, after);
  const TTestResult reverse = paired_t_test(after, before);
  CHECK(reverse.t_statistic == doctest::Approx(-forward.t_statistic).epsilon(1e-13));
  CHECK(reverse.p_value == doctest::Approx(forward.p_value).epsilon(1e-13));

  // Constant nonzero differences: zero variance, diverging statistic.
  const TTestResult degen = paired_t_test({1, 1, 1}, {2, 2, 2});
  CHECK(degen.degenerate);
  CHECK(degen.p_value == 0.0);
  CHECK(std::isinf(degen.t_statistic));

  CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), StatisticsError);
  CHECK_THROWS_AS(paired_t_test({1, 2}, {1, 2, 3}), StatisticsError);
}

TEST_CASE("ols_fit: two-point line and identity fixture") {
  const RegressionFit fit = ols_fit({0.5, 0.9}, {0.4, 0.8});
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(fit.point_count == 2);
  CHECK(fit.residual_std == 0.0);

  const RegressionFit identity = ols_fit({0.1, 0.4, 0.8}, {0.1, 0.4, 0.8});
  CHECK(identity.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(identity.intercept == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(ols_fit({0.5}, {0.5}), StatisticsError);
  CHECK_THROWS_AS(ols_fit({0.5, 0.5, 0.5}, {0.1, 0.2, 0.3}), StatisticsError);
}

TEST_CASE("ols_fit: residuals sum to zero and normal equations hold") {
  Rng rng(41);
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 25; ++i) {
    x.push_back(rng.uniform(0.0, 1.0));
    y.push_back(0.7 * x.back() + 0.1 + rng.normal(0.05));
  }
  const RegressionFit fit = ols_fit(x, y);
  double sum_r = 0.0;
  double sum_rx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    sum_r += r;
    sum_rx += r * x[i];
  }
  CHECK(std::fabs(sum_r) < 1e-10);
  CHECK(std::fabs(sum_rx) < 1e-10);
}

TEST_CASE("mean_accuracy_shift: hand-computed pairs") {
  const auto record = [](const std::string& model, const std::string& dataset,
                         MaskStrategy strategy, double p, double acc) {
    AccuracyRecord rec;
    rec.model_id = model;
    rec.dataset_id = dataset;
    rec.strategy = strategy;
    rec.p_mask = p;
    rec.entropy_source = "train";
    rec.accuracy = acc;
    return rec;
  };

  const std::vector<AccuracyRecord> baselines = {
      record("m0", "d", MaskStrategy::None, 0.0, 0.5),
      record("m1", "d", MaskStrategy::None, 0.0, 0.6),
  };
  const std::vector<AccuracyRecord> masked = {
      record("m0", "d", MaskStrategy::Random, 0.2, 0.6),
      record("m1", "d", MaskStrategy::Random, 0.2, 0.7),
      record("m0", "d", MaskStrategy::Random, 0.4, 0.0),  // above cutoff, must be ignored
  };
  const std::vector<ShiftSummary> summaries = mean_accuracy_shift(masked, baselines, 0.25);
  REQUIRE(summaries.size() == 1);
  CHECK(summaries[0].strategy == MaskStrategy::Random);
  CHECK(summaries[0].mean_shift_pp == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(summaries[0].std_shift_pp == doctest::Approx(0.0));
  CHECK(summaries[0].pair_count == 2);
  CHECK(summaries[0].t_test.degenerate);

  // Masked identical to baseline: zero shift, p = 1.
  const std::vector<AccuracyRecord> unchanged = {
      record("m0", "d", MaskStrategy::TopEntropy, 0.2, 0.5),
      record("m1", "d", MaskStrategy::TopEntropy, 0.2, 0.6),
  };
  const std::vector<ShiftSummary> zero = mean_accuracy_shift(unchanged, baselines, 0.25);
  CHECK(zero[0].mean_shift_pp == 0.0);
  CHECK(zero[0].t_test.t_statistic == 0.0);
  CHECK(zero[0].t_test.p_value == 1.0);

  // One pair only: statistics error.
  const std::vector<AccuracyRecord> lone = {record("m0", "d", MaskStrategy::Random, 0.2, 0.6)};
  CHECK_THROWS_AS(mean_accuracy_shift(lone, baselines, 0.25), StatisticsError);
  // No baseline for the model: statistics error.
  const std::vector<AccuracyRecord> orphan = {record("mX", "d", MaskStrategy::Random, 0.2, 0.6),
                                              record("m0", "d", MaskStrategy::Random, 0.2, 0.6)};
  CHECK_THROWS_AS(mean_accuracy_shift(orphan, baselines, 0.25), StatisticsError);
}

TEST_CASE("effective_robustness: identity baseline and displacement signs") {
  const std::vector<RobustnessPoint> baseline = {
      {"m0", 0.3, 0.3}, {"m1", 0.6, 0.6}, {"m2", 0.9, 0.9}};
  std::vector<InterventionSeries> interventions(1);
  interventions[0].label = "random";
  interventions[0].points = {{"m0", 0.3, 0.5}, {"m1", 0.6, 0.4}};

  const RobustnessAnalysis analysis = effective_robustness(baseline, interventions);
  CHECK(analysis.baseline_fit.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(analysis.baseline_fit.intercept == doctest::Approx(0.0).epsilon(1e-12));
  REQUIRE(analysis.summaries.size() == 1);
  CHECK(analysis.summaries[0].residuals_vs_baseline[0] == doctest::Approx(0.2).epsilon(1e-9));
  CHECK(analysis.summaries[0].residuals_vs_baseline[1] == doctest::Approx(-0.2).epsilon(1e-9));
  CHECK(analysis.summaries[0].residuals_vs_identity[0] == doctest::Approx(0.2).epsilon(1e-9));

  CHECK_THROWS_AS(effective_robustness({{"m0", 0.5, 0.5}}, {}), StatisticsError);
}

TEST_CASE("accuracy: hand-computable fixture and the identity mask") {
  const ContrastiveModel model = first_coordinate_model();

  // Task 1: correct candidate has the larger first coordinate -> right.
  // Task 2: correct candidate has the smaller one -> wrong. Accuracy 0.5.
  const std::vector<ContrastTask> tasks = {
      two_candidate_task({2.0, 0.0}, {1.0, 0.0}),
      two_candidate_task({-1.0, 0.0}, {3.0, 0.0}),
  };
  CHECK(accuracy(model, tasks, identity_mask(2)) == 0.5);

  // A scorer that ignores candidates scores every candidate identically;
  // ties break to index 0.
  ContrastiveModel blind = first_coordinate_model();
  blind.scorer.layers = {{3, 1, {0.0, 0.0, 0.0}, {0.0}}};
  const std::vector<ContrastTask> one = {two_candidate_task({5.0, 0.0}, {4.0, 0.0})};
  CHECK(accuracy(blind, one, identity_mask(2)) == 1.0);  // correct at index 0

  std::vector<ContrastTask> flipped = one;
  std::swap(flipped[0].candidates[0], flipped[0].candidates[1]);
  flipped[0].correct_index = 1;
  CHECK(accuracy(blind, flipped, identity_mask(2)) == 0.0);

  CHECK_THROWS_AS(accuracy(model, tasks, identity_mask(3)), std::domain_error);
  CHECK_THROWS_AS(accuracy(model, {}, identity_mask(2)), std::domain_error);
}

TEST_CASE("mask_sweep: counting contract, baseline equality, determinism") {
  ModelDims dims;
  dims.input_dim = 4;
  dims.rep_length = 16;
  dims.embed_dim = 6;
  dims.encoder_hidden = {8};
  dims.embedder_hidden = {8};
  dims.scorer_hidden = {8};
  const ContrastiveModel model = make_model(dims, 17);

  SyntheticSpec spec;
  spec.latent_features = 4;
  spec.frequencies = {0.5, 0.3, 0.8, 0.5};
  spec.observable_dim = 4;
  Rng mix_rng(5);
  spec.mixing.resize(16);
  for (double& m : spec.mixing) m = mix_rng.normal();
  spec.observation_noise_std = 0.1;

  std::vector<EvalDataset> sets(2);
  sets[0].id = "ind";
  sets[0].data = gen_synthetic(spec, 40, 1);
  sets[0].tasks = make_tasks(sets[0].data, 3, 2);
  sets[1].id = "ood";
  sets[1].data = gen_synthetic(spec, 40, 3);
  sets[1].tasks = make_tasks(sets[1].data, 3, 4);

  const SweepGrid grid = default_sweep_grid();
  const std::vector<const EvalDataset*> pointers{&sets[0], &sets[1]};
  const SweepResult sweep =
      mask_sweep(model, "m0", pointers, sets[0], EntropySource::Train, grid, 9);

  // 2 datasets x (3 strategies x 8 proportions + 1 baseline).
  CHECK(sweep.records.size() == 50);
  CHECK(sweep.profiles.size() == 1);  // single profile from the train source
  CHECK(sweep.profiles.count("ind") == 1);

  const SweepResult again =
      mask_sweep(model, "m0", pointers, sets[0], EntropySource::Train, grid, 9);
  for (std::size_t i = 0; i < sweep.records.size(); ++i) {
    CHECK(sweep.records[i].accuracy == again.records[i].accuracy);
  }

  const SweepResult per_eval =
      mask_sweep(model, "m0", pointers, sets[0], EntropySource::Eval, grid, 9);
  CHECK(per_eval.profiles.size() == 2);

  // A proportion whose floor(p*L) is zero must reproduce the baseline
  // accuracy exactly.
  SweepGrid tiny_grid;
  tiny_grid.strategies = {MaskStrategy::TopEntropy, MaskStrategy::Random};
  tiny_grid.proportions = {0.05};  // floor(0.05 * 16) = 0
  const SweepResult empty_mask =
      mask_sweep(model, "m0", {&sets[0]}, sets[0], EntropySource::Train, tiny_grid, 9);
  REQUIRE(empty_mask.records.size() == 3);
  const double baseline = empty_mask.records[0].accuracy;
  CHECK(empty_mask.records[1].accuracy == baseline);
  CHECK(empty_mask.records[2].accuracy == baseline);
}

TEST_CASE("records csv: round trip at full precision") {
  std::vector<AccuracyRecord> records(2);
  records[0] = {"m0", "ind", MaskStrategy::TopEntropy, 0.15, "train", 0.8412345678901234};
  records[1] = {"m1", "ood_decouple", MaskStrategy::None, 0.0, "eval", 1.0 / 3.0};
  const std::string csv = records_csv(records);
  std::stringstream stream(csv);
  const std::vector<AccuracyRecord> back = parse_records_csv(stream);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].model_id == records[i].model_id);
    CHECK(back[i].dataset_id == records[i].dataset_id);
    CHECK(back[i].strategy == records[i].strategy);
    CHECK(back[i].p_mask == records[i].p_mask);
    CHECK(back[i].entropy_source == records[i].entropy_source);
    CHECK(back[i].accuracy == records[i].accuracy);
  }

  std::stringstream bad("model_id,dataset_id,strategy,p_mask,entropy_source,accuracy\nm0,d,"
                        "sideways,0.1,train,0.5\n");
  CHECK_THROWS_AS(parse_records_csv(bad), ParseError);
}

TEST_CASE("sweep grid validation") {
  SweepGrid grid = default_sweep_grid();
  CHECK_NOTHROW(grid.validate());
  grid.proportions = {0.3, 0.2};
  CHECK_THROWS_AS(grid.validate(), std::domain_error);
  grid.proportions = {0.0};
  CHECK_THROWS_AS(grid.validate(), std::domain_error);
  grid = default_sweep_grid();
  grid.strategies = {MaskStrategy::None};
  CHECK_THROWS_AS(grid.validate(), std::domain_error);
}
