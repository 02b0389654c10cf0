#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqop/dataset.hpp"
#include "seqop/deeponet.hpp"

namespace seqop {

struct GenOptions {
  Problem problem = Problem::heat;
  int n_cases = 600;
  std::uint64_t seed = 7;
  int jobs = 1;
  // heat solver
  double dt = 0.1;
  int slice_elements = 300;
  double thermal_tol = 1e-9;
  // plastic solver
  int dogbone_target_elems = 4756;
  double solid_tol = 1e-8;
  /// deterministic mode stores zeros instead of measured wall times so two
  /// runs with one seed are byte-identical
  bool zero_times = false;

  std::string canonical() const;  // hashed into the bundle manifest
};

/// Cases are dispatched to a worker pool; each case draws from its own
/// derived stream and results land in case-index order, so the bundle is
/// identical for any job count.
DatasetBundle generate_dataset(const GenOptions& opt,
                               const std::function<void(int, int)>& progress = {});

struct SplitView {
  std::vector<int> train_idx, test_idx;  // disjoint, exhaustive
};

/// Deterministic shuffled split; the first n_test shuffled indices test.
SplitView split_dataset(const DatasetBundle& bundle, int n_test, std::uint64_t seed);

InputTransforms fit_transforms(const DatasetBundle& bundle, const std::vector<int>& train_idx);

struct TrainOptions {
  Variant variant = Variant::fnn;
  long epochs = 20000;  // optimizer iterations, one mini-batch Adam step each
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  long checkpoint_every = 0;      // 0 = final checkpoint only
  std::string checkpoint_dir;     // target for cadence checkpoints
  long log_every = 500;
  std::function<void(long, double)> on_log;
};

struct TrainResult {
  DeepONetF model;
  std::vector<float> loss_trace;  // per-iteration batch loss (scaled MSE)
};

/// Mini-batch Adam on the scaled MSE. Scalers are fitted on the train view
/// only. Throws on non-finite loss, naming the last good checkpoint.
TrainResult train(const DatasetBundle& bundle, const SplitView& split, const TrainOptions& opt);

/// ||truth - pred||_2 / ||truth||_2.
double rel_l2(const float* pred, const float* truth, int n);
double rel_l2(const std::vector<double>& pred, const std::vector<double>& truth);

struct CaseSelection {
  int best = 0, median = 0, worst = 0;
};

/// argmin / rank-ceil(N/2) / argmax of the errors, ties to the lowest index.
CaseSelection select_cases(const std::vector<double>& errors);

struct ErrorReport {
  std::vector<int> case_ids;      // bundle indices of the test cases
  std::vector<double> errors;     // relative L2, aligned with case_ids
  double mean = 0, stddev = 0, min_err = 0, max_err = 0;
  int best_case = 0, median_case = 0, worst_case = 0;  // bundle indices
  double mean_solver_s = 0, per_case_infer_s = 0, speedup = 0;
};

ErrorReport evaluate(const DeepONetF& model, const DatasetBundle& bundle,
                     const std::vector<int>& test_idx);

struct TimingSummary {
  double mean_solver_s = 0;
  double per_case_infer_s = 0;
  double speedup = 0;
  bool solver_time_remeasured = false;  // bundle carried zeroed times
};

/// Batched inference timing (median of n_repeat) against the stored solver
/// wall times; re-measures a few solves live when the bundle was generated
/// in deterministic mode.
TimingSummary measure_speedup(const DatasetBundle& bundle, const DeepONetF& model,
                              const std::vector<int>& test_idx, int n_repeat = 5);

/// Full-field predictions in physical units for a set of bundle cases.
MatF predict_cases(const DeepONetF& model, const DatasetBundle& bundle,
                   const std::vector<int>& idx);

}  // namespace seqop
