#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bitlab/bitrep.hpp"
#include "bitlab/data.hpp"
#include "bitlab/nn.hpp"

namespace bitlab {

struct AccuracyRecord {
  std::string model_id;
  std::string dataset_id;
  MaskStrategy strategy = MaskStrategy::None;
  double p_mask = 0.0;
  std::string entropy_source;  // "train" or "eval"
  double accuracy = 0.0;
};

struct SweepGrid {
  std::vector<MaskStrategy> strategies;
  std::vector<double> proportions;  // strictly increasing, each in (0, 1]

  void validate() const;
};

// All three strategies over proportions 0.15..0.50 at 0.05 steps.
SweepGrid default_sweep_grid();

// Whether mask-building entropies come from the training distribution or
// from each evaluated dataset's own encodings.
enum class EntropySource { Train, Eval };

std::string to_string(EntropySource source);
EntropySource parse_entropy_source(const std::string& name);

struct EvalDataset {
  std::string id;
  LabeledDataset data;
  std::vector<ContrastTask> tasks;
};

// Hard-encode the correct candidate, apply the mask, pick the argmax logit
// (ties toward the lowest index).
double accuracy(const ContrastiveModel& model, const std::vector<ContrastTask>& tasks,
                const Mask& mask);

struct SweepResult {
  std::vector<AccuracyRecord> records;
  // Entropy profile per source dataset id; exactly one entry when the
  // entropy source is the training distribution.
  std::map<std::string, EntropyProfile> profiles;
};

// One record per (dataset, strategy, proportion) plus an unmasked baseline
// per dataset. Random masks are fixed per (mask_seed, proportion) and reused
// across datasets so InD and OOD see the same mask.
SweepResult mask_sweep(const ContrastiveModel& model, const std::string& model_id,
                       const std::vector<const EvalDataset*>& datasets,
                       const EvalDataset& train_dataset, EntropySource source,
                       const SweepGrid& grid, std::uint64_t mask_seed);

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;
  double std_difference = 0.0;
  bool degenerate = false;  // zero variance with nonzero mean
};

// Two-sided paired t-test of after vs before.
TTestResult paired_t_test(const std::vector<double>& before, const std::vector<double>& after);

struct ShiftSummary {
  MaskStrategy strategy = MaskStrategy::None;
  std::string dataset_id;
  double mean_shift_pp = 0.0;  // percentage points
  double std_shift_pp = 0.0;   // n-1 denominator
  std::size_t pair_count = 0;
  TTestResult t_test;
};

// Pools masked records with proportion <= cutoff, one pair per
// (model, dataset, strategy, proportion), against the matching baseline
// record for the same (model, dataset).
std::vector<ShiftSummary> mean_accuracy_shift(const std::vector<AccuracyRecord>& masked,
                                              const std::vector<AccuracyRecord>& baselines,
                                              double cutoff);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_std = 0.0;
  std::size_t point_count = 0;
};

// Ordinary least squares of y on x.
RegressionFit ols_fit(const std::vector<double>& x, const std::vector<double>& y);

struct RobustnessPoint {
  std::string model_id;
  double ind_accuracy = 0.0;
  double ood_accuracy = 0.0;
};

struct InterventionSeries {
  std::string label;
  std::vector<RobustnessPoint> points;
};

struct InterventionSummary {
  std::string label;
  std::vector<double> residuals_vs_baseline;  // vertical offset above the fit
  std::vector<double> residuals_vs_identity;  // vertical offset above y = x
  double mean_residual_vs_baseline = 0.0;
  double mean_residual_vs_identity = 0.0;
};

struct RobustnessAnalysis {
  RegressionFit baseline_fit;
  std::vector<RobustnessPoint> baseline_points;
  std::vector<InterventionSeries> interventions;
  std::vector<InterventionSummary> summaries;
};

// Fits OOD accuracy on InD accuracy over the unmasked models and reports
// each intervention point's vertical displacement from that fit and from
// the y = x line.
RobustnessAnalysis effective_robustness(const std::vector<RobustnessPoint>& baseline,
                                        const std::vector<InterventionSeries>& interventions);

// CSV: model_id,dataset_id,strategy,p_mask,entropy_source,accuracy.
std::string records_csv(const std::vector<AccuracyRecord>& records);
std::vector<AccuracyRecord> parse_records_csv(std::istream& in);

// Shift-table CSV; metadata lines carry the cutoff and pooling rule.
std::string shift_table_csv(const std::vector<ShiftSummary>& summaries, double cutoff);

}  // namespace bitlab
