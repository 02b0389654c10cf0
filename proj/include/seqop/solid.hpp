#pragma once

#include <array>
#include <string>
#include <vector>

#include "seqop/histories.hpp"
#include "seqop/mesh2d.hpp"

namespace seqop {

/// Table-3 constants; stresses in MPa, lengths in mm.
struct ElasticPlasticMaterial {
  double E = 2.09e5;
  double nu = 0.3;
  double sigma_y0 = 235.0;
  double H_mod = 800.0;
  double thickness = 1.0;

  void validate() const;
  double yield_stress(double ebar_p) const { return sigma_y0 + H_mod * ebar_p; }
};

using Stress = std::array<double, 3>;  // s11, s22, s12
using Strain = std::array<double, 3>;  // e11, e22, gamma12 (engineering shear)
using Tangent = std::array<std::array<double, 3>, 3>;

struct GaussPointState {
  Strain eps_p{0.0, 0.0, 0.0};
  double ebar_p = 0.0;
  Stress stress{0.0, 0.0, 0.0};
};

/// sqrt(s11^2 + s22^2 - s11 s22 + 3 s12^2)
double von_mises(const Stress& s);

/// Plane-stress elastic law (E/(1-nu^2) structure, shear E/(2(1+nu))).
Stress plane_stress_elastic(const ElasticPlasticMaterial& mat, const Strain& eps);
Tangent elastic_tangent(const ElasticPlasticMaterial& mat);

struct ReturnMapResult {
  GaussPointState state;
  Tangent tangent;  // algorithmic consistent tangent
  bool plastic = false;
};

/// Implicit radial return projected to plane stress with linear isotropic
/// hardening. deps is the total strain increment since the converged prior
/// state. Scalar Newton on the consistency parameter, |f| <= 1e-10 sigma_y0.
ReturnMapResult return_map_plane_stress(const ElasticPlasticMaterial& mat,
                                        const GaussPointState& state, const Strain& deps);

struct SolidSolution {
  std::vector<double> von_mises_nodal;  // MPa, one per node
  double wall_s = 0.0;
  std::vector<int> newton_iters;        // per accepted (sub-)increment
  std::vector<double> driven_reaction;  // x-reaction on the driven edge per increment
  double max_yield_violation = 0.0;     // max over GPs of vm - sigma_y at commit
};

struct SolidBcs {
  std::vector<int> fixed_x;   // nodes with u_x = 0
  std::vector<int> fixed_y;   // nodes with u_y = 0
  std::vector<int> driven_x;  // nodes with u_x prescribed by the load curve
};

struct SolidOptions {
  double tol = 1e-8;
  int max_newton = 25;
  int max_bisect = 4;
  bool elastic_only = false;
};

/// Displacement-driven quasi-static core: one pseudo-time increment per
/// consecutive pair of history values, global Newton with consistent
/// tangents, direct sparse factorization.
SolidSolution solve_displacement_driven(const Mesh2D& mesh, const ElasticPlasticMaterial& mat,
                                        const SolidBcs& bcs,
                                        const std::vector<double>& history_values,
                                        const SolidOptions& opts = {});

/// Dog-bone driver: left edge clamped in x and y, right edge driven in x.
SolidSolution solve_plastic(const LoadHistory& history, const Mesh2D& mesh,
                            const ElasticPlasticMaterial& mat, double tol = 1e-8);

void dump_solid_csv(const SolidSolution& sol, const Mesh2D& mesh, const std::string& path);

}  // namespace seqop
