#include "seqop/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "seqop/solid.hpp"
#include "seqop/thermal.hpp"

namespace seqop {

std::string GenOptions::canonical() const {
  std::ostringstream s;
  s.precision(17);
  s << "format=1;problem=" << problem_name(problem) << ";n_cases=" << n_cases << ";seed=" << seed;
  if (problem == Problem::heat)
    s << ";dt=" << dt << ";slice_elements=" << slice_elements << ";thermal_tol=" << thermal_tol;
  else
    s << ";dogbone_target=" << dogbone_target_elems << ";solid_tol=" << solid_tol;
  return s.str();
}

DatasetBundle generate_dataset(const GenOptions& opt, const std::function<void(int, int)>& progress) {
  if (opt.n_cases < 2) throw std::invalid_argument("need at least 2 cases");
  DatasetBundle b;
  b.problem = opt.problem;
  b.n_cases = opt.n_cases;
  b.seed = opt.seed;
  b.config_hash = hash_hex(fnv1a64(opt.canonical()));
  b.histories.assign(std::size_t(opt.n_cases) * kHistorySamples, 0.f);

  ThermalMaterial tmat;
  SliceMesh smesh;
  smesh.n_elements = opt.slice_elements;
  ElasticPlasticMaterial pmat;
  Mesh2D dmesh;

  if (opt.problem == Problem::heat) {
    b.horizon = kHeatHorizonS;
    b.n_points = smesh.n_nodes();
    b.units_history = "MW/m^2";
    b.units_field = "degC";
    b.units_coords = "m";
    b.coords.resize(std::size_t(b.n_points) * 2);
    for (int i = 0; i < b.n_points; ++i) {
      b.coords[2 * i] = static_cast<float>(smesh.node_x(i));
      b.coords[2 * i + 1] = 0.f;
    }
  } else {
    b.horizon = kSolidHorizonS;
    dmesh = build_dogbone_mesh(opt.dogbone_target_elems);
    b.n_points = dmesh.n_nodes();
    b.units_history = "mm";
    b.units_field = "MPa";
    b.units_coords = "mm";
    b.coords.resize(std::size_t(b.n_points) * 2);
    for (int i = 0; i < b.n_points; ++i) {
      b.coords[2 * i] = static_cast<float>(dmesh.nodes[i][0]);
      b.coords[2 * i + 1] = static_cast<float>(dmesh.nodes[i][1]);
    }
  }
  b.fields.assign(std::size_t(opt.n_cases) * b.n_points, 0.f);
  b.times.assign(opt.n_cases, 0.f);

  std::atomic<int> next{0}, done{0};
  std::atomic<bool> failed{false};
  std::string error_msg;
  std::mutex error_mu;

  const auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= opt.n_cases || failed.load()) return;
      try {
        for (int retry = 0;; ++retry) {
          Rng rng(Rng::derive(Rng::derive(opt.seed, i), retry));
          std::vector<double> field;
          double wall = 0.0;
          LoadHistory h;
          if (opt.problem == Problem::heat) {
            h = gen_heat_history(rng);
            ThermalSolution sol = solve_heat(h, tmat, smesh, opt.dt, opt.thermal_tol);
            field = std::move(sol.temperature);
            wall = sol.wall_s;
          } else {
            h = gen_disp_history(rng);
            SolidSolution sol = solve_plastic(h, dmesh, pmat, opt.solid_tol);
            field = std::move(sol.von_mises_nodal);
            wall = sol.wall_s;
          }
          double norm = 0.0;
          for (double x : field) norm += x * x;
          if (norm == 0.0 && opt.problem == Problem::plastic && retry < 8) continue;  // zero-load draw
          for (int t = 0; t < kHistorySamples; ++t)
            b.histories[std::size_t(i) * kHistorySamples + t] = static_cast<float>(h.values[t]);
          for (int p = 0; p < b.n_points; ++p)
            b.fields[std::size_t(i) * b.n_points + p] = static_cast<float>(field[p]);
          b.times[i] = opt.zero_times ? 0.f : static_cast<float>(wall);
          break;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(error_mu);
        failed.store(true);
        if (error_msg.empty()) error_msg = "case " + std::to_string(i) + ": " + e.what();
        return;
      }
      const int d = done.fetch_add(1) + 1;
      if (progress) progress(d, opt.n_cases);
    }
  };

  const int jobs = std::max(1, opt.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("dataset generation failed: " + error_msg);
  b.validate();
  return b;
}

SplitView split_dataset(const DatasetBundle& bundle, int n_test, std::uint64_t seed) {
  if (n_test <= 0 || n_test >= bundle.n_cases)
    throw std::invalid_argument("n_test must lie strictly between 0 and the case count");
  std::vector<int> idx(bundle.n_cases);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::derive(seed, 0xda7a5e7ULL));
  rng.shuffle(idx.begin(), idx.end());
  SplitView sv;
  sv.test_idx.assign(idx.begin(), idx.begin() + n_test);
  sv.train_idx.assign(idx.begin() + n_test, idx.end());
  std::sort(sv.test_idx.begin(), sv.test_idx.end());
  std::sort(sv.train_idx.begin(), sv.train_idx.end());
  return sv;
}

InputTransforms fit_transforms(const DatasetBundle& bundle, const std::vector<int>& train_idx) {
  if (train_idx.empty()) throw std::invalid_argument("empty training view");
  InputTransforms tf;
  tf.coord_lo = {bundle.coords[0], bundle.coords[1]};
  tf.coord_hi = tf.coord_lo;
  for (int i = 0; i < bundle.n_points; ++i)
    for (int a = 0; a < 2; ++a) {
      const double c = bundle.coords[2 * std::size_t(i) + a];
      tf.coord_lo[a] = std::min(tf.coord_lo[a], c);
      tf.coord_hi[a] = std::max(tf.coord_hi[a], c);
    }
  double sum = 0, sum2 = 0, lo = 1e300, hi = -1e300;
  const double n_hist = static_cast<double>(train_idx.size()) * kHistorySamples;
  for (int i : train_idx) {
    const float* h = bundle.history_row(i);
    for (int t = 0; t < kHistorySamples; ++t) {
      sum += h[t];
      sum2 += static_cast<double>(h[t]) * h[t];
    }
    const float* f = bundle.field_row(i);
    for (int p = 0; p < bundle.n_points; ++p) {
      lo = std::min(lo, static_cast<double>(f[p]));
      hi = std::max(hi, static_cast<double>(f[p]));
    }
  }
  tf.hist_mean = sum / n_hist;
  const double var = std::max(0.0, sum2 / n_hist - tf.hist_mean * tf.hist_mean);
  tf.hist_std = var > 0 ? std::sqrt(var) : 1.0;
  if (!(hi > lo)) throw std::runtime_error("degenerate field range in the training split");
  tf.field.lo = lo;
  tf.field.hi = hi;
  return tf;
}

TrainResult train(const DatasetBundle& bundle, const SplitView& split, const TrainOptions& opt) {
  if (opt.batch < 1 || opt.epochs < 0) throw std::invalid_argument("bad training options");
  const int M = bundle.n_points;
  const auto& train_idx = split.train_idx;
  if (train_idx.empty()) throw std::invalid_argument("empty training split");

  DeepONetConfig cfg = DeepONetConfig::paper(opt.variant);
  DeepONetF model = build_model<float>(cfg, Rng::derive(opt.seed, 1));
  model.tf = fit_transforms(bundle, train_idx);

  MatF coords(M, 2);
  std::copy(bundle.coords.begin(), bundle.coords.end(), coords.d.begin());

  // scaled targets for the training rows
  const double flo = model.tf.field.lo, inv_span = 1.0 / (model.tf.field.hi - model.tf.field.lo);
  std::vector<float> scaled(train_idx.size() * std::size_t(M));
  for (std::size_t r = 0; r < train_idx.size(); ++r) {
    const float* f = bundle.field_row(train_idx[r]);
    for (int p = 0; p < M; ++p)
      scaled[r * M + p] = static_cast<float>((f[p] - flo) * inv_span);
  }

  Rng batch_rng(Rng::derive(opt.seed, 2));
  std::vector<int> order(train_idx.size());
  std::iota(order.begin(), order.end(), 0);  // positions into train_idx/scaled
  std::size_t cursor = order.size();          // trigger shuffle on first use

  TrainResult res{std::move(model), {}};
  res.loss_trace.reserve(opt.epochs);
  nn::GradStore<float> grads;
  EvalCache<float> cache;
  MatF hist_b, target_b, out, d_out;
  std::string last_checkpoint = "(none)";

  for (long it = 0; it < opt.epochs; ++it) {
    const int bsz = static_cast<int>(std::min<std::size_t>(opt.batch, order.size()));
    hist_b.resize(bsz, kHistorySamples);
    target_b.resize(bsz, M);
    for (int r = 0; r < bsz; ++r) {
      if (cursor >= order.size()) {
        batch_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const int pos = order[cursor++];
      const float* h = bundle.history_row(train_idx[pos]);
      std::copy(h, h + kHistorySamples, hist_b.row(r));
      std::copy(scaled.begin() + std::size_t(pos) * M, scaled.begin() + std::size_t(pos + 1) * M,
                target_b.row(r));
    }

    forward(res.model, hist_b, coords, out, &cache);

    // loss in the scaled field space (== scaled_mse on physical values)
    double loss = 0.0;
    d_out.resize(out.rows, out.cols);
    const double c = 2.0 / static_cast<double>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = static_cast<double>(out.d[i]) - target_b.d[i];
      loss += d * d;
      d_out.d[i] = static_cast<float>(c * d);
    }
    loss /= static_cast<double>(out.size());
    if (!std::isfinite(loss))
      throw std::runtime_error("non-finite training loss at iteration " + std::to_string(it) +
                               "; last good checkpoint: " + last_checkpoint);
    res.loss_trace.push_back(static_cast<float>(loss));

    backward(res.model, cache, d_out, grads);
    nn::adam_update(res.model.params, grads, static_cast<float>(opt.lr));

    if (opt.on_log && opt.log_every > 0 && (it % opt.log_every == 0 || it + 1 == opt.epochs))
      opt.on_log(it, loss);
    if (opt.checkpoint_every > 0 && !opt.checkpoint_dir.empty() &&
        (it + 1) % opt.checkpoint_every == 0) {
      save_model(res.model, opt.checkpoint_dir + "/checkpoint_last",
                 "{\"iteration\":" + std::to_string(it + 1) + "}");
      last_checkpoint = opt.checkpoint_dir + "/checkpoint_last";
    }
  }
  return res;
}

double rel_l2(const float* pred, const float* truth, int n) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(truth[i]) - pred[i];
    num += d * d;
    den += static_cast<double>(truth[i]) * truth[i];
  }
  if (den <= 0.0) throw std::runtime_error("rel_l2: reference field has zero norm");
  return std::sqrt(num / den);
}

double rel_l2(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("rel_l2 length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = truth[i] - pred[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  if (den <= 0.0) throw std::runtime_error("rel_l2: reference field has zero norm");
  return std::sqrt(num / den);
}

CaseSelection select_cases(const std::vector<double>& errors) {
  const int n = static_cast<int>(errors.size());
  if (n < 3) throw std::invalid_argument("select_cases needs at least 3 cases");
  CaseSelection cs;
  for (int i = 1; i < n; ++i) {
    if (errors[i] < errors[cs.best]) cs.best = i;
    if (errors[i] > errors[cs.worst]) cs.worst = i;
  }
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double median_value = sorted[(n + 1) / 2 - 1];  // rank ceil(N/2)
  cs.median = static_cast<int>(std::find(errors.begin(), errors.end(), median_value) -
                               errors.begin());
  return cs;
}

MatF predict_cases(const DeepONetF& model, const DatasetBundle& bundle,
                   const std::vector<int>& idx) {
  const int M = bundle.n_points;
  MatF coords(M, 2);
  std::copy(bundle.coords.begin(), bundle.coords.end(), coords.d.begin());
  MatF preds(static_cast<int>(idx.size()), M);
  const int chunk = 256;
  for (std::size_t at = 0; at < idx.size(); at += chunk) {
    const int bsz = static_cast<int>(std::min<std::size_t>(chunk, idx.size() - at));
    MatF hist(bsz, kHistorySamples);
    for (int r = 0; r < bsz; ++r) {
      const float* h = bundle.history_row(idx[at + r]);
      std::copy(h, h + kHistorySamples, hist.row(r));
    }
    const MatF out = predict_field(model, hist, coords);
    std::copy(out.d.begin(), out.d.end(), preds.row(static_cast<int>(at)));
  }
  return preds;
}

ErrorReport evaluate(const DeepONetF& model, const DatasetBundle& bundle,
                     const std::vector<int>& test_idx) {
  if (test_idx.size() < 3) throw std::invalid_argument("evaluation needs at least 3 cases");
  ErrorReport rep;
  rep.case_ids = test_idx;
  const MatF preds = predict_cases(model, bundle, test_idx);
  rep.errors.resize(test_idx.size());
  for (std::size_t r = 0; r < test_idx.size(); ++r)
    rep.errors[r] = rel_l2(preds.row(static_cast<int>(r)), bundle.field_row(test_idx[r]),
                           bundle.n_points);
  double sum = 0, sum2 = 0;
  rep.min_err = rep.errors[0];
  rep.max_err = rep.errors[0];
  for (double e : rep.errors) {
    sum += e;
    sum2 += e * e;
    rep.min_err = std::min(rep.min_err, e);
    rep.max_err = std::max(rep.max_err, e);
  }
  rep.mean = sum / rep.errors.size();
  rep.stddev = std::sqrt(std::max(0.0, sum2 / rep.errors.size() - rep.mean * rep.mean));
  const CaseSelection cs = select_cases(rep.errors);
  rep.best_case = test_idx[cs.best];
  rep.median_case = test_idx[cs.median];
  rep.worst_case = test_idx[cs.worst];
  return rep;
}

TimingSummary measure_speedup(const DatasetBundle& bundle, const DeepONetF& model,
                              const std::vector<int>& test_idx, int n_repeat) {
  if (test_idx.empty()) throw std::invalid_argument("empty timing set");
  TimingSummary ts;

  double solver_sum = 0.0;
  for (int i : test_idx) solver_sum += bundle.times[i];
  if (solver_sum <= 0.0) {
    // deterministic-mode bundle: re-measure a few solves live
    ts.solver_time_remeasured = true;
    GenOptions opt;
    opt.problem = bundle.problem;
    const int n_probe = static_cast<int>(std::min<std::size_t>(3, test_idx.size()));
    for (int k = 0; k < n_probe; ++k) {
      LoadHistory h;
      h.kind = bundle.load_kind();
      h.horizon = bundle.horizon;
      const float* row = bundle.history_row(test_idx[k]);
      h.values.assign(row, row + kHistorySamples);
      if (bundle.problem == Problem::heat) {
        ThermalMaterial mat;
        SliceMesh mesh;
        solver_sum += solve_heat(h, mat, mesh, opt.dt, opt.thermal_tol).wall_s;
      } else {
        ElasticPlasticMaterial mat;
        const Mesh2D mesh = build_dogbone_mesh(opt.dogbone_target_elems);
        solver_sum += solve_plastic(h, mesh, mat, opt.solid_tol).wall_s;
      }
    }
    ts.mean_solver_s = solver_sum / n_probe;
  } else {
    ts.mean_solver_s = solver_sum / static_cast<double>(test_idx.size());
  }

  std::vector<double> samples;
  for (int r = 0; r < std::max(1, n_repeat); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)predict_cases(model, bundle, test_idx);
    samples.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  const double batch_s = samples[samples.size() / 2];
  ts.per_case_infer_s = batch_s / static_cast<double>(test_idx.size());
  ts.speedup = ts.mean_solver_s / ts.per_case_infer_s;
  return ts;
}

}  // namespace seqop
