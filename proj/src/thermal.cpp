#include "seqop/thermal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace seqop {

void ThermalMaterial::validate() const {
  if (!(T_solidus < T_liquidus)) throw std::invalid_argument("solidus must lie below liquidus");
  for (const auto* tab : {&k_table, &c_table}) {
    if (tab->empty()) throw std::invalid_argument("empty material table");
    for (std::size_t i = 0; i < tab->size(); ++i) {
      if ((*tab)[i].second <= 0.0) throw std::invalid_argument("material table values must be > 0");
      if (i > 0 && (*tab)[i].first <= (*tab)[i - 1].first)
        throw std::invalid_argument("material table temperatures must ascend");
    }
  }
}

namespace {

double table_interp(const std::vector<std::pair<double, double>>& tab, double T) {
  if (T <= tab.front().first) return tab.front().second;
  if (T >= tab.back().first) return tab.back().second;
  for (std::size_t i = 1; i < tab.size(); ++i) {
    if (T <= tab[i].first) {
      const double w = (T - tab[i - 1].first) / (tab[i].first - tab[i - 1].first);
      return tab[i - 1].second * (1.0 - w) + tab[i].second * w;
    }
  }
  return tab.back().second;
}

// Exact integral of the piecewise-linear table (constant extrapolation)
// from 0 to T.
double table_integral(const std::vector<std::pair<double, double>>& tab, double T) {
  double acc = 0.0;
  double t_prev = 0.0;
  double v_prev = tab.front().second;  // constant below the table
  for (const auto& [ti, vi] : tab) {
    if (T <= ti) {
      const double v_T = table_interp(tab, T);
      return acc + 0.5 * (v_prev + v_T) * (T - t_prev);
    }
    acc += 0.5 * (v_prev + vi) * (ti - t_prev);
    t_prev = ti;
    v_prev = vi;
  }
  return acc + v_prev * (T - t_prev);  // constant above the table
}

// Exact integral of the piecewise-linear 101-sample history over [t0, t1].
double history_integral(const LoadHistory& h, double t0, double t1) {
  const int n = kHistorySamples - 1;
  const double dt_s = h.horizon / n;
  double acc = 0.0;
  const int i0 = std::max(0, std::min(n - 1, static_cast<int>(t0 / dt_s)));
  for (int i = i0; i < n; ++i) {
    const double a = h.horizon * i / n;
    const double b = h.horizon * (i + 1) / n;
    if (a >= t1) break;
    const double lo = std::max(a, t0), hi = std::min(b, t1);
    if (hi <= lo) continue;
    acc += 0.5 * (h.value_at(lo) + h.value_at(hi)) * (hi - lo);
  }
  return acc;
}

}  // namespace

double conductivity(const ThermalMaterial& mat, double T) { return table_interp(mat.k_table, T); }
double specific_heat(const ThermalMaterial& mat, double T) { return table_interp(mat.c_table, T); }

double liquid_fraction(const ThermalMaterial& mat, double T) {
  if (T <= mat.T_solidus) return 0.0;
  if (T >= mat.T_liquidus) return 1.0;
  return (T - mat.T_solidus) / (mat.T_liquidus - mat.T_solidus);
}

double enthalpy(const ThermalMaterial& mat, double T) {
  return table_integral(mat.c_table, T) + mat.latent_heat * liquid_fraction(mat, T);
}

double apparent_capacity(const ThermalMaterial& mat, double T) {
  double cap = specific_heat(mat, T);
  if (T > mat.T_solidus && T < mat.T_liquidus)
    cap += mat.latent_heat / (mat.T_liquidus - mat.T_solidus);
  return cap;
}

namespace {

struct Tridiag {
  std::vector<double> sub, diag, sup;
};

// Thomas algorithm; overwrites rhs with the solution.
void solve_tridiag(Tridiag& A, std::vector<double>& rhs) {
  const int n = static_cast<int>(rhs.size());
  for (int i = 1; i < n; ++i) {
    const double f = A.sub[i] / A.diag[i - 1];
    A.diag[i] -= f * A.sup[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  rhs[n - 1] /= A.diag[n - 1];
  for (int i = n - 2; i >= 0; --i) rhs[i] = (rhs[i] - A.sup[i] * rhs[i + 1]) / A.diag[i];
}

struct StepContext {
  const ThermalMaterial* mat;
  const SliceMesh* mesh;
  std::vector<double> lumped_mass;  // rho * trapezoid weight per node
};

// Residual of the backward-Euler step: R_i = m_i (H(T_i) - H(Told_i))/dtau
// + conduction + boundary extraction at node 0.
void residual(const StepContext& ctx, const std::vector<double>& T, const std::vector<double>& H_old,
              double dtau, double q_w, std::vector<double>& R) {
  const int nn = ctx.mesh->n_nodes();
  const double h = ctx.mesh->element_size;
  R.assign(nn, 0.0);
  for (int i = 0; i < nn; ++i)
    R[i] = ctx.lumped_mass[i] * (enthalpy(*ctx.mat, T[i]) - H_old[i]) / dtau;
  for (int e = 0; e < ctx.mesh->n_elements; ++e) {
    const double ke = conductivity(*ctx.mat, 0.5 * (T[e] + T[e + 1])) / h;
    const double f = ke * (T[e] - T[e + 1]);
    R[e] += f;
    R[e + 1] -= f;
  }
  R[0] += q_w;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool newton_step_solve(const StepContext& ctx, std::vector<double>& T,
                       const std::vector<double>& H_old, double dtau, double q_w, double tol,
                       int max_iters, int& iters_out) {
  const int nn = ctx.mesh->n_nodes();
  const double h = ctx.mesh->element_size;
  std::vector<double> R, R_try, T_try(nn);
  residual(ctx, T, H_old, dtau, q_w, R);
  const double r0 = norm2(R);
  const double target = std::max(tol * r0, 1e-12);
  Tridiag J;
  J.sub.resize(nn);
  J.sup.resize(nn);
  J.diag.resize(nn);
  std::vector<double> rhs(nn);
  for (int it = 0; it < max_iters; ++it) {
    double rn = norm2(R);
    if (rn <= target) {
      iters_out = it;
      return true;
    }
    std::fill(J.sub.begin(), J.sub.end(), 0.0);
    std::fill(J.sup.begin(), J.sup.end(), 0.0);
    for (int i = 0; i < nn; ++i)
      J.diag[i] = ctx.lumped_mass[i] * apparent_capacity(*ctx.mat, T[i]) / dtau;
    for (int e = 0; e < ctx.mesh->n_elements; ++e) {
      const double ke = conductivity(*ctx.mat, 0.5 * (T[e] + T[e + 1])) / h;
      J.diag[e] += ke;
      J.diag[e + 1] += ke;
      J.sup[e] -= ke;
      J.sub[e + 1] -= ke;
    }
    for (int i = 0; i < nn; ++i) rhs[i] = -R[i];
    solve_tridiag(J, rhs);
    // backtracking keeps the mushy-zone capacity jump from bouncing Newton
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 6; ++ls) {
      for (int i = 0; i < nn; ++i) T_try[i] = T[i] + alpha * rhs[i];
      residual(ctx, T_try, H_old, dtau, q_w, R_try);
      if (norm2(R_try) < rn || ls == 5) {
        T.swap(T_try);
        R.swap(R_try);
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    (void)accepted;
  }
  return norm2(R) <= target;
}

// Backward Euler over [t0, t1]; splits the interval on Newton failure.
void advance(const StepContext& ctx, const LoadHistory& history, std::vector<double>& T, double t0,
             double t1, double tol, int depth, std::vector<int>& iter_log) {
  const double dtau = t1 - t0;
  const double q_w = history_integral(history, t0, t1) / dtau * kFluxUnitWPerMW;
  std::vector<double> H_old(T.size());
  for (std::size_t i = 0; i < T.size(); ++i) H_old[i] = enthalpy(*ctx.mat, T[i]);
  std::vector<double> T_save = T;
  int iters = 0;
  if (newton_step_solve(ctx, T, H_old, dtau, q_w, tol, 50, iters)) {
    iter_log.push_back(iters);
    return;
  }
  if (depth >= 4) {
    std::ostringstream msg;
    msg << "thermal Newton failed at t in [" << t0 << ", " << t1 << "] s after step halving to dt/16";
    throw std::runtime_error(msg.str());
  }
  T = T_save;
  const double tm = 0.5 * (t0 + t1);
  advance(ctx, history, T, t0, tm, tol, depth + 1, iter_log);
  advance(ctx, history, T, tm, t1, tol, depth + 1, iter_log);
}

}  // namespace

ThermalSolution solve_heat(const LoadHistory& history, const ThermalMaterial& mat,
                           const SliceMesh& mesh, double dt, double tol) {
  if (history.kind != LoadKind::flux)
    throw std::invalid_argument("solve_heat expects a flux history");
  if (static_cast<int>(history.values.size()) != kHistorySamples)
    throw std::invalid_argument("history must carry 101 samples");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  mat.validate();
  const double horizon = history.horizon;
  const long n_steps = std::lround(horizon / dt);
  if (n_steps < 1 || std::abs(n_steps * dt - horizon) > 1e-9 * horizon)
    throw std::invalid_argument("dt must divide the time horizon");

  const auto t_start = std::chrono::steady_clock::now();

  StepContext ctx;
  ctx.mat = &mat;
  ctx.mesh = &mesh;
  ctx.lumped_mass.assign(mesh.n_nodes(), mat.density * mesh.element_size);
  ctx.lumped_mass.front() *= 0.5;
  ctx.lumped_mass.back() *= 0.5;

  ThermalSolution sol;
  sol.temperature.assign(mesh.n_nodes(), kInitialTemperatureC);
  for (long s = 0; s < n_steps; ++s) {
    const double t0 = horizon * s / n_steps;
    const double t1 = horizon * (s + 1) / n_steps;
    advance(ctx, history, sol.temperature, t0, t1, tol, 0, sol.newton_iters);
  }

  sol.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

EnergyBalance energy_balance_residual(const ThermalSolution& sol, const LoadHistory& history,
                                      const ThermalMaterial& mat, const SliceMesh& mesh) {
  std::vector<double> w(mesh.n_nodes(), mesh.element_size);
  w.front() *= 0.5;
  w.back() *= 0.5;
  const double H0 = enthalpy(mat, kInitialTemperatureC);
  double stored = 0.0;  // J/m^2 change of stored enthalpy
  for (int i = 0; i < mesh.n_nodes(); ++i)
    stored += mat.density * w[i] * (enthalpy(mat, sol.temperature[i]) - H0);
  double extracted = 0.0;  // J/m^2 leaving through the cooled face
  for (int i = 0; i + 1 < kHistorySamples; ++i) {
    const double dt_s = history.horizon / (kHistorySamples - 1);
    extracted += 0.5 * (history.values[i] + history.values[i + 1]) * dt_s;
  }
  extracted *= kFluxUnitWPerMW;
  EnergyBalance out;
  if (std::abs(extracted) < 1e-3) {
    out.absolute_mode = true;
    out.value = std::abs(stored);
  } else {
    out.value = std::abs(stored + extracted) / std::abs(extracted);
  }
  return out;
}

void dump_thermal_csv(const ThermalSolution& sol, const SliceMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "node_x_m,T_final_degC\n";
  f.precision(17);
  for (int i = 0; i < mesh.n_nodes(); ++i) f << mesh.node_x(i) << "," << sol.temperature[i] << "\n";
}

}  // namespace seqop
