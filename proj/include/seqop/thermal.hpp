#pragma once

#include <utility>
#include <vector>

#include "seqop/histories.hpp"

namespace seqop {

/// Low-carbon steel data: temperature-dependent conductivity and specific
/// heat plus the latent-heat block between solidus and liquidus.
struct ThermalMaterial {
  double density = 7400.0;  // kg/m^3
  std::vector<std::pair<double, double>> k_table = {
      {800.0, 28.934}, {1480.04, 34.188}, {1519.73, 39.000}};  // (degC, W/(m K))
  std::vector<std::pair<double, double>> c_table = {
      {800.0, 695.44}, {1480.04, 695.44}, {1519.73, 824.61}};  // (degC, J/(kg K))
  double latent_heat = 245100.0;  // J/kg
  double T_solidus = 1475.43;     // degC
  double T_liquidus = 1524.59;    // degC

  void validate() const;
};

/// The 30 mm solidifying slice; physically 1D with nodes at y = 0.
struct SliceMesh {
  int n_elements = 300;
  double element_size = 1e-4;  // m

  int n_nodes() const { return n_elements + 1; }
  double node_x(int i) const { return element_size * i; }
  double length() const { return element_size * n_elements; }
};

struct ThermalSolution {
  std::vector<double> temperature;  // degC per node, at t = horizon
  double wall_s = 0.0;
  std::vector<int> newton_iters;  // per accepted (sub)step
};

constexpr double kInitialTemperatureC = 1540.0;
constexpr double kFluxUnitWPerMW = 1e6;  // histories carry MW/m^2

/// Piecewise-linear table interpolation with constant extrapolation.
double conductivity(const ThermalMaterial& mat, double T);
double specific_heat(const ThermalMaterial& mat, double T);

/// Liquid fraction: linear in T between solidus and liquidus.
double liquid_fraction(const ThermalMaterial& mat, double T);

/// H(T) = integral of c from 0 degC to T, plus latent_heat * f_l(T).
/// Strictly increasing in T.
double enthalpy(const ThermalMaterial& mat, double T);

/// dH/dT: c(T) plus the latent term spread across the mushy zone.
double apparent_capacity(const ThermalMaterial& mat, double T);

/// Implicit (backward Euler) nonlinear solve of rho dH/dt = div(k grad T) on
/// the slice, flux history extracting heat at x = 0, all other boundaries
/// insulated, uniform initial temperature 1540 degC. Newton per step with the
/// apparent-capacity Jacobian; non-convergence triggers step halving down to
/// dt/16 before a hard error.
ThermalSolution solve_heat(const LoadHistory& history, const ThermalMaterial& mat,
                           const SliceMesh& mesh, double dt = 0.1, double tol = 1e-9);

struct EnergyBalance {
  double value = 0.0;
  bool absolute_mode = false;  // set when no energy was extracted
};

/// |stored enthalpy change + extracted energy| / |extracted energy|, both
/// sides by trapezoid quadrature. Falls back to the absolute stored change
/// when the extracted energy is ~0.
EnergyBalance energy_balance_residual(const ThermalSolution& sol, const LoadHistory& history,
                                      const ThermalMaterial& mat, const SliceMesh& mesh);

void dump_thermal_csv(const ThermalSolution& sol, const SliceMesh& mesh, const std::string& path);

}  // namespace seqop
