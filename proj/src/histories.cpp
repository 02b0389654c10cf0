#include "seqop/histories.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqop {

double LoadHistory::value_at(double t) const {
  const int n = kHistorySamples - 1;
  if (t <= 0) return values.front();
  if (t >= horizon) return values.back();
  const double s = t / horizon * n;
  const int i = std::min(static_cast<int>(s), n - 1);
  const double w = s - i;
  return values[i] * (1.0 - w) + values[i + 1] * w;
}

std::array<double, kControlPoints> sample_control_times(Rng& rng, double horizon,
                                                        double interior_lo, double interior_hi) {
  if (!(interior_lo >= 0.0 && interior_hi <= horizon && interior_lo < interior_hi))
    throw std::invalid_argument("control time range must lie within (0, horizon)");
  const double min_gap = 1e-6 * horizon;
  std::array<double, kControlPoints> t{};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    t[0] = 0.0;
    t[kControlPoints - 1] = horizon;
    for (int i = 1; i < kControlPoints - 1; ++i) t[i] = rng.uniform(interior_lo, interior_hi);
    std::sort(t.begin(), t.end());
    bool ok = true;
    for (int i = 0; i + 1 < kControlPoints; ++i)
      if (t[i + 1] - t[i] < min_gap) ok = false;
    if (ok) return t;
  }
  throw std::runtime_error("control time sampling failed to find distinct points");
}

double flux_at_control(const FluxParams& p, double t_cp) {
  return p.A * std::pow(t_cp + 1.0, -p.B) + p.C;
}

double rbf_shape_for(const std::array<double, kControlPoints>& times) {
  double sum = 0.0;
  int pairs = 0;
  for (int i = 0; i < kControlPoints; ++i)
    for (int j = i + 1; j < kControlPoints; ++j) {
      sum += std::abs(times[j] - times[i]);
      ++pairs;
    }
  return pairs / sum;
}

namespace {

constexpr int N = kControlPoints;

// Gaussian elimination with partial pivoting on the 6x6 kernel system,
// solving for the inverse as well so the 1-norm condition number is exact.
struct KernelSolve {
  std::array<double, N> weights;
  double cond;
};

KernelSolve solve_kernel(const std::array<double, N>& times, const std::array<double, N>& values,
                         double shape) {
  double K[N][N], A[N][2 * N];
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double r = shape * (times[i] - times[j]);
      K[i][j] = std::exp(-r * r);
    }
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      A[i][j] = K[i][j];
      A[i][N + j] = (i == j) ? 1.0 : 0.0;
    }
  }
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (std::abs(A[piv][col]) < 1e-300) throw std::runtime_error("singular RBF kernel matrix");
    if (piv != col)
      for (int j = 0; j < 2 * N; ++j) std::swap(A[col][j], A[piv][j]);
    const double d = A[col][col];
    for (int j = 0; j < 2 * N; ++j) A[col][j] /= d;
    for (int r = 0; r < N; ++r) {
      if (r == col) continue;
      const double f = A[r][col];
      if (f == 0.0) continue;
      for (int j = 0; j < 2 * N; ++j) A[r][j] -= f * A[col][j];
    }
  }
  double norm_k = 0.0, norm_inv = 0.0;
  for (int j = 0; j < N; ++j) {
    double ck = 0.0, ci = 0.0;
    for (int i = 0; i < N; ++i) {
      ck += std::abs(K[i][j]);
      ci += std::abs(A[i][N + j]);
    }
    norm_k = std::max(norm_k, ck);
    norm_inv = std::max(norm_inv, ci);
  }
  KernelSolve out;
  out.cond = norm_k * norm_inv;
  for (int i = 0; i < N; ++i) {
    double w = 0.0;
    for (int j = 0; j < N; ++j) w += A[i][N + j] * values[j];
    out.weights[i] = w;
  }
  return out;
}

}  // namespace

std::vector<double> rbf_interpolate(const std::array<double, kControlPoints>& times,
                                    const std::array<double, kControlPoints>& values,
                                    const std::vector<double>& queries, double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("RBF shape parameter must be positive");
  double min_gap = times[1] - times[0];
  for (int i = 0; i + 1 < N; ++i) {
    const double gap = times[i + 1] - times[i];
    if (!(gap > 0.0)) throw std::invalid_argument("control times must be strictly ascending");
    min_gap = std::min(min_gap, gap);
  }
  const KernelSolve ks = solve_kernel(times, values, shape);
  if (ks.cond > 1e12) {
    std::ostringstream msg;
    msg << "ill-conditioned RBF kernel (cond ~ " << ks.cond << "), smallest control-point spacing "
        << min_gap << " s";
    throw std::runtime_error(msg.str());
  }
  std::vector<double> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double acc = 0.0;
    for (int j = 0; j < N; ++j) {
      const double r = shape * (queries[q] - times[j]);
      acc += ks.weights[j] * std::exp(-r * r);
    }
    out[q] = acc;
  }
  return out;
}

namespace {

std::vector<double> uniform_grid(double horizon) {
  std::vector<double> t(kHistorySamples);
  for (int i = 0; i < kHistorySamples; ++i) t[i] = horizon * i / (kHistorySamples - 1);
  return t;
}

}  // namespace

LoadHistory gen_heat_history(Rng& rng, ControlPoints& cp) {
  FluxParams p;
  p.A = rng.uniform(3.0, 8.0);
  p.B = rng.uniform(0.3, 0.7);
  p.C = rng.uniform(-0.5, 0.5);
  cp.times = sample_control_times(rng, kHeatHorizonS, 0.0, kHeatHorizonS);
  for (int i = 0; i < kControlPoints; ++i) cp.values[i] = flux_at_control(p, cp.times[i]);
  LoadHistory h;
  h.kind = LoadKind::flux;
  h.horizon = kHeatHorizonS;
  h.values = rbf_interpolate(cp.times, cp.values, uniform_grid(kHeatHorizonS), rbf_shape_for(cp.times));
  return h;
}

LoadHistory gen_heat_history(Rng& rng) {
  ControlPoints cp;
  return gen_heat_history(rng, cp);
}

LoadHistory gen_disp_history(Rng& rng, ControlPoints& cp) {
  cp.times = sample_control_times(rng, kSolidHorizonS, 0.1, 0.9);
  cp.values[0] = 0.0;  // "applied displacement is 0 at t=0"
  for (int i = 1; i < kControlPoints; ++i)
    cp.values[i] = rng.uniform(-kMaxControlDisplacementMm, kMaxControlDisplacementMm);
  LoadHistory h;
  h.kind = LoadKind::displacement;
  h.horizon = kSolidHorizonS;
  h.values = rbf_interpolate(cp.times, cp.values, uniform_grid(kSolidHorizonS), rbf_shape_for(cp.times));
  h.values[0] = 0.0;  // pin the endpoint exactly after interpolation
  return h;
}

LoadHistory gen_disp_history(Rng& rng) {
  ControlPoints cp;
  return gen_disp_history(rng, cp);
}

void dump_history_csv(const LoadHistory& h, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "time_s,value\n";
  f.precision(17);
  for (int i = 0; i < kHistorySamples; ++i) f << h.time_at(i) << "," << h.values[i] << "\n";
}

LoadHistory load_history_csv(const std::string& path, LoadKind kind, double horizon) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  LoadHistory h;
  h.kind = kind;
  h.horizon = horizon;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    // header or single/double column numeric rows
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a, b;
    if (!(ss >> a)) continue;  // header line
    if (ss >> b)
      h.values.push_back(b);  // (time, value)
    else
      h.values.push_back(a);  // single column of values
  }
  if (static_cast<int>(h.values.size()) != kHistorySamples)
    throw std::runtime_error(path + ": expected " + std::to_string(kHistorySamples) +
                             " history samples, got " + std::to_string(h.values.size()));
  return h;
}

}  // namespace seqop
