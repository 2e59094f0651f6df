#include "bitlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "bitlab/error.hpp"
#include "bitlab/stats.hpp"
#include "bitlab/textfmt.hpp"

namespace bitlab {

void SweepGrid::validate() const {
  if (strategies.empty()) throw std::domain_error("SweepGrid: need at least one strategy");
  for (MaskStrategy s : strategies) {
    if (s == MaskStrategy::None) {
      throw std::domain_error("SweepGrid: baseline records are implicit, strategy none not allowed");
    }
  }
  if (proportions.empty()) throw std::domain_error("SweepGrid: need at least one proportion");
  double prev = 0.0;
  for (double p : proportions) {
    if (!(p > prev && p <= 1.0)) {
      throw std::domain_error("SweepGrid: proportions must be strictly increasing in (0, 1]");
    }
    prev = p;
  }
}

SweepGrid default_sweep_grid() {
  SweepGrid grid;
  grid.strategies = {MaskStrategy::Random, MaskStrategy::TopEntropy, MaskStrategy::BottomEntropy};
  grid.proportions = {0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50};
  return grid;
}

std::string to_string(EntropySource source) {
  return source == EntropySource::Train ? "train" : "eval";
}

EntropySource parse_entropy_source(const std::string& name) {
  if (name == "train") return EntropySource::Train;
  if (name == "eval") return EntropySource::Eval;
  throw std::domain_error("unknown entropy source '" + name + "' (expected train or eval)");
}

double accuracy(const ContrastiveModel& model, const std::vector<ContrastTask>& tasks,
                const Mask& mask) {
  if (tasks.empty()) throw std::domain_error("accuracy: empty task list");
  if (mask.size() != model.rep_length) {
    throw std::domain_error("accuracy: mask length must equal rep_length");
  }
  std::size_t correct = 0;
  for (const ContrastTask& task : tasks) {
    const std::vector<double> rep =
        encode(model, task.candidates[static_cast<std::size_t>(task.correct_index)],
               EncodeMode::Hard);
    const MaskedRepresentation masked = apply_mask(rep, mask);
    const std::vector<double> logits = distinguish(model, masked.values, task.candidates);
    if (predict(logits) == task.correct_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(tasks.size());
}

SweepResult mask_sweep(const ContrastiveModel& model, const std::string& model_id,
                       const std::vector<const EvalDataset*>& datasets,
                       const EvalDataset& train_dataset, EntropySource source,
                       const SweepGrid& grid, std::uint64_t mask_seed) {
  grid.validate();
  if (datasets.empty()) throw std::domain_error("mask_sweep: need at least one dataset");

  SweepResult result;
  const std::string source_name = to_string(source);

  // Profile cache: computed once per source dataset and shared by every
  // strategy and proportion in the sweep.
  const auto profile_for = [&](const EvalDataset& dataset) -> const EntropyProfile& {
    const EvalDataset& src = source == EntropySource::Train ? train_dataset : dataset;
    auto it = result.profiles.find(src.id);
    if (it == result.profiles.end()) {
      it = result.profiles.emplace(src.id, entropy_profile(hard_encode_dataset(model, src.data)))
               .first;
    }
    return it->second;
  };

  for (const EvalDataset* dataset : datasets) {
    AccuracyRecord baseline;
    baseline.model_id = model_id;
    baseline.dataset_id = dataset->id;
    baseline.strategy = MaskStrategy::None;
    baseline.p_mask = 0.0;
    baseline.entropy_source = source_name;
    baseline.accuracy = accuracy(model, dataset->tasks, identity_mask(model.rep_length));
    result.records.push_back(baseline);

    const EntropyProfile& profile = profile_for(*dataset);
    for (MaskStrategy strategy : grid.strategies) {
      for (std::size_t pi = 0; pi < grid.proportions.size(); ++pi) {
        const double p_mask = grid.proportions[pi];
        // Random masks depend on (mask_seed, proportion) only, so every
        // dataset evaluated for this model sees the same random mask.
        const Mask mask =
            strategy == MaskStrategy::Random
                ? build_mask(profile, strategy, p_mask, derive_seed(mask_seed, pi))
                : build_mask(profile, strategy, p_mask);
        AccuracyRecord record;
        record.model_id = model_id;
        record.dataset_id = dataset->id;
        record.strategy = strategy;
        record.p_mask = p_mask;
        record.entropy_source = source_name;
        record.accuracy = accuracy(model, dataset->tasks, mask);
        result.records.push_back(record);
      }
    }
  }
  return result;
}

TTestResult paired_t_test(const std::vector<double>& before, const std::vector<double>& after) {
  if (before.size() != after.size()) {
    throw StatisticsError("paired_t_test: length mismatch");
  }
  const std::size_t n = before.size();
  if (n < 2) throw StatisticsError("paired_t_test: need at least 2 pairs");

  std::vector<double> diffs(n);
  for (std::size_t i = 0; i < n; ++i) diffs[i] = after[i] - before[i];

  TTestResult result;
  result.degrees_of_freedom = static_cast<double>(n - 1);
  result.mean_difference = stats::mean(diffs);
  result.std_difference = stats::sample_stddev(diffs);

  if (result.std_difference == 0.0) {
    if (result.mean_difference == 0.0) {
      result.t_statistic = 0.0;
      result.p_value = 1.0;
    } else {
      // All differences identical and nonzero: the statistic diverges.
      result.t_statistic =
          result.mean_difference > 0.0 ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
      result.p_value = 0.0;
      result.degenerate = true;
    }
    return result;
  }

  result.t_statistic =
      result.mean_difference / (result.std_difference / std::sqrt(static_cast<double>(n)));
  result.p_value = stats::student_t_two_sided_p(result.t_statistic, result.degrees_of_freedom);
  return result;
}

std::vector<ShiftSummary> mean_accuracy_shift(const std::vector<AccuracyRecord>& masked,
                                              const std::vector<AccuracyRecord>& baselines,
                                              double cutoff) {
  std::map<std::pair<std::string, std::string>, double> baseline_by_key;
  for (const AccuracyRecord& rec : baselines) {
    baseline_by_key[{rec.model_id, rec.dataset_id}] = rec.accuracy;
  }

  // Grouped by (strategy, dataset); each masked record with p <= cutoff
  // contributes one pair.
  std::map<std::pair<MaskStrategy, std::string>, std::pair<std::vector<double>, std::vector<double>>>
      groups;
  for (const AccuracyRecord& rec : masked) {
    if (rec.strategy == MaskStrategy::None) continue;
    if (rec.p_mask > cutoff) continue;
    const auto base = baseline_by_key.find({rec.model_id, rec.dataset_id});
    if (base == baseline_by_key.end()) {
      throw StatisticsError("mean_accuracy_shift: no baseline for model '" + rec.model_id +
                            "' dataset '" + rec.dataset_id + "'");
    }
    auto& [before, after] = groups[{rec.strategy, rec.dataset_id}];
    before.push_back(base->second);
    after.push_back(rec.accuracy);
  }

  std::vector<ShiftSummary> summaries;
  for (const auto& [key, pairs] : groups) {
    const auto& [before, after] = pairs;
    if (before.size() < 2) {
      throw StatisticsError("mean_accuracy_shift: fewer than 2 pairs for strategy " +
                            to_string(key.first) + ", dataset " + key.second);
    }
    std::vector<double> shifts(before.size());
    for (std::size_t i = 0; i < before.size(); ++i) shifts[i] = 100.0 * (after[i] - before[i]);
    ShiftSummary summary;
    summary.strategy = key.first;
    summary.dataset_id = key.second;
    summary.mean_shift_pp = stats::mean(shifts);
    summary.std_shift_pp = stats::sample_stddev(shifts);
    summary.pair_count = before.size();
    summary.t_test = paired_t_test(before, after);
    summaries.push_back(std::move(summary));
  }
  return summaries;
}

RegressionFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw StatisticsError("ols_fit: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw StatisticsError("ols_fit: need at least 2 points");
  const double mean_x = stats::mean(x);
  const double mean_y = stats::mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mean_x) * (x[i] - mean_x);
    sxy += (x[i] - mean_x) * (y[i] - mean_y);
  }
  if (sxx == 0.0) throw StatisticsError("ols_fit: zero variance in x");

  RegressionFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = mean_y - fit.slope * mean_x;
  fit.point_count = n;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ssr += r * r;
  }
  fit.residual_std = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2)) : 0.0;
  return fit;
}

RobustnessAnalysis effective_robustness(const std::vector<RobustnessPoint>& baseline,
                                        const std::vector<InterventionSeries>& interventions) {
  if (baseline.size() < 2) {
    throw StatisticsError("effective_robustness: need at least 2 baseline points");
  }
  std::vector<double> x(baseline.size());
  std::vector<double> y(baseline.size());
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    x[i] = baseline[i].ind_accuracy;
    y[i] = baseline[i].ood_accuracy;
  }
  RobustnessAnalysis analysis;
  analysis.baseline_fit = ols_fit(x, y);
  analysis.baseline_points = baseline;
  analysis.interventions = interventions;
  for (const InterventionSeries& series : interventions) {
    InterventionSummary summary;
    summary.label = series.label;
    for (const RobustnessPoint& point : series.points) {
      const double fitted =
          analysis.baseline_fit.slope * point.ind_accuracy + analysis.baseline_fit.intercept;
      summary.residuals_vs_baseline.push_back(point.ood_accuracy - fitted);
      summary.residuals_vs_identity.push_back(point.ood_accuracy - point.ind_accuracy);
    }
    if (!summary.residuals_vs_baseline.empty()) {
      summary.mean_residual_vs_baseline = stats::mean(summary.residuals_vs_baseline);
      summary.mean_residual_vs_identity = stats::mean(summary.residuals_vs_identity);
    }
    analysis.summaries.push_back(std::move(summary));
  }
  return analysis;
}

std::string records_csv(const std::vector<AccuracyRecord>& records) {
  std::string csv = "model_id,dataset_id,strategy,p_mask,entropy_source,accuracy\n";
  for (const AccuracyRecord& rec : records) {
    csv += rec.model_id;
    csv += ',';
    csv += rec.dataset_id;
    csv += ',';
    csv += to_string(rec.strategy);
    csv += ',';
    csv += fmt_double(rec.p_mask);
    csv += ',';
    csv += rec.entropy_source;
    csv += ',';
    csv += fmt_double(rec.accuracy);
    csv += '\n';
  }
  return csv;
}

std::vector<AccuracyRecord> parse_records_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("records csv: empty input", 1);
  if (line != "model_id,dataset_id,strategy,p_mask,entropy_source,accuracy") {
    throw ParseError("records csv: unexpected header", 1);
  }
  std::vector<AccuracyRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw ParseError("records csv: expected 6 fields", line_no);
    AccuracyRecord rec;
    rec.model_id = fields[0];
    rec.dataset_id = fields[1];
    try {
      rec.strategy = parse_mask_strategy(fields[2]);
    } catch (const std::domain_error& e) {
      throw ParseError(std::string("records csv: ") + e.what(), line_no);
    }
    if (!parse_double(fields[3], rec.p_mask)) {
      throw ParseError("records csv: bad p_mask '" + fields[3] + "'", line_no);
    }
    rec.entropy_source = fields[4];
    if (!parse_double(fields[5], rec.accuracy)) {
      throw ParseError("records csv: bad accuracy '" + fields[5] + "'", line_no);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string shift_table_csv(const std::vector<ShiftSummary>& summaries, double cutoff) {
  std::string csv;
  csv += "# mean accuracy shift in percentage points, masked vs unmasked baseline\n";
  csv += "# pooled records: every (model,dataset,strategy,proportion) with p_mask <= " +
         fmt_double(cutoff) + "\n";
  csv += "strategy,dataset_id,mean_shift_pp,std_shift_pp,pairs,t_statistic,dof,p_value,"
         "degenerate\n";
  for (const ShiftSummary& s : summaries) {
    csv += to_string(s.strategy);
    csv += ',';
    csv += s.dataset_id;
    csv += ',';
    csv += fmt_double(s.mean_shift_pp);
    csv += ',';
    csv += fmt_double(s.std_shift_pp);
    csv += ',';
    csv += std::to_string(s.pair_count);
    csv += ',';
    csv += fmt_double(s.t_test.t_statistic);
    csv += ',';
    csv += fmt_double(s.t_test.degrees_of_freedom);
    csv += ',';
    csv += fmt_double(s.t_test.p_value);
    csv += ',';
    csv += s.t_test.degenerate ? "1" : "0";
    csv += '\n';
  }
  return csv;
}

}  // namespace bitlab
