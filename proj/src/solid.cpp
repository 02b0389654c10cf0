#include "seqop/solid.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace seqop {

void ElasticPlasticMaterial::validate() const {
  if (!(E > 0) || !(nu > 0 && nu < 0.5) || !(sigma_y0 > 0) || H_mod < 0 || !(thickness > 0))
    throw std::invalid_argument("invalid elastic-plastic material constants");
}

double von_mises(const Stress& s) {
  return std::sqrt(s[0] * s[0] + s[1] * s[1] - s[0] * s[1] + 3.0 * s[2] * s[2]);
}

Stress plane_stress_elastic(const ElasticPlasticMaterial& mat, const Strain& eps) {
  const double c = mat.E / (1.0 - mat.nu * mat.nu);
  return {c * (eps[0] + mat.nu * eps[1]), c * (mat.nu * eps[0] + eps[1]),
          mat.E / (2.0 * (1.0 + mat.nu)) * eps[2]};
}

Tangent elastic_tangent(const ElasticPlasticMaterial& mat) {
  const double c = mat.E / (1.0 - mat.nu * mat.nu);
  Tangent D{};
  D[0][0] = c;
  D[0][1] = c * mat.nu;
  D[1][0] = c * mat.nu;
  D[1][1] = c;
  D[2][2] = mat.E / (2.0 * (1.0 + mat.nu));
  return D;
}

// ---------------------------------------------------------------------------
// Return mapping. Work in the decoupled variables a1 = s11+s22, a2 = s22-s11,
// a3 = s12, where both the elastic law and the radial return diagonalize:
//   a1 = a1_trial * s / (s + c1*dl),   c1 = E / (2(1-nu))
//   a2,a3 = trial * s / (s + c2*dl),   c2 = 3E / (2(1+nu))
// with s = sigma_y(ebar_old + dl). Consistency vm(a) = s is a scalar root
// find in dl.
// ---------------------------------------------------------------------------

ReturnMapResult return_map_plane_stress(const ElasticPlasticMaterial& mat,
                                        const GaussPointState& old, const Strain& deps) {
  const Stress ds = plane_stress_elastic(mat, deps);
  const Stress trial = {old.stress[0] + ds[0], old.stress[1] + ds[1], old.stress[2] + ds[2]};
  const double s_yield_old = mat.yield_stress(old.ebar_p);
  const double vm_tr = von_mises(trial);

  ReturnMapResult out;
  if (vm_tr <= s_yield_old * (1.0 + 1e-12)) {
    out.state = old;
    out.state.stress = trial;
    out.tangent = elastic_tangent(mat);
    out.plastic = false;
    return out;
  }

  const double E = mat.E, nu = mat.nu, H = mat.H_mod;
  const double c1 = E / (2.0 * (1.0 - nu));
  const double c2 = 3.0 * E / (2.0 * (1.0 + nu));
  const double a1t = trial[0] + trial[1];
  const double a2t = trial[1] - trial[0];
  const double a3t = trial[2];
  const double A1 = 0.25 * a1t * a1t;
  const double B2 = 0.75 * a2t * a2t + 3.0 * a3t * a3t;
  const double s0 = s_yield_old;  // sigma_y(dl) = s0 + H*dl

  const auto f_of = [&](double dl, double* df) {
    const double s = s0 + H * dl;
    const double d1 = s + c1 * dl;
    const double d2 = s + c2 * dl;
    const double u1 = s / d1;
    const double u2 = s / d2;
    const double q = A1 * u1 * u1 + B2 * u2 * u2;
    const double rq = std::sqrt(q);
    if (df) {
      const double du1 = -c1 * s0 / (d1 * d1);
      const double du2 = -c2 * s0 / (d2 * d2);
      *df = (A1 * u1 * du1 + B2 * u2 * du2) / rq - H;
    }
    return rq - s;
  };

  // bracket: f(0) > 0 and f decreases monotonically
  double hi = (vm_tr - s0) / (0.5 * c2 + H);
  for (int k = 0; k < 200 && f_of(hi, nullptr) > 0.0; ++k) hi *= 2.0;
  double lo = 0.0;
  double dl = std::min(hi, (vm_tr - s0) / (c2 + H));
  const double f_tol = 1e-10 * mat.sigma_y0;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    double df;
    const double f = f_of(dl, &df);
    if (std::abs(f) <= f_tol) {
      converged = true;
      break;
    }
    if (f > 0.0)
      lo = dl;
    else
      hi = dl;
    double next = dl - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    dl = next;
  }
  if (!converged)
    throw std::runtime_error("plane-stress return mapping failed to converge (vm_trial = " +
                             std::to_string(vm_tr) + " MPa)");

  const double s = s0 + H * dl;
  const double d1 = s + c1 * dl;
  const double d2 = s + c2 * dl;
  const double a1 = a1t * s / d1;
  const double a2 = a2t * s / d2;
  const double a3 = a3t * s / d2;
  const Stress sig = {0.5 * (a1 - a2), 0.5 * (a1 + a2), a3};

  out.state.stress = sig;
  out.state.ebar_p = old.ebar_p + dl;
  const double inv_vm = 1.0 / s;
  out.state.eps_p = {old.eps_p[0] + dl * (sig[0] - 0.5 * sig[1]) * inv_vm,
                     old.eps_p[1] + dl * (sig[1] - 0.5 * sig[0]) * inv_vm,
                     old.eps_p[2] + dl * 3.0 * sig[2] * inv_vm};
  out.plastic = true;

  // algorithmic tangent in the decoupled basis, then back to (s, eps)
  const double E1 = E / (1.0 - nu);
  const double E2 = E / (1.0 + nu);
  const double G = E / (2.0 * (1.0 + nu));
  const double D1 = d1 / s;
  const double D2 = d2 / s;
  const double s0_ss = s0 / (s * s);
  const double k1 = a1 * c1 * s0_ss / D1;
  const double k2 = a2 * c2 * s0_ss / D2;
  const double k3 = a3 * c2 * s0_ss / D2;
  const double g1 = 0.25 * a1 * E1 / D1;
  const double g2 = 0.75 * a2 * E2 / D2;
  const double g3 = 3.0 * a3 * G / D2;
  const double den =
      H * s + s0_ss * (0.25 * c1 * a1 * a1 / D1 + c2 * (0.75 * a2 * a2 + 3.0 * a3 * a3) / D2);

  double Ca[3][3];
  const double diag[3] = {E1 / D1, E2 / D2, G / D2};
  const double kv[3] = {k1, k2, k3};
  const double gv[3] = {g1, g2, g3};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) Ca[i][j] = (i == j ? diag[i] : 0.0) - kv[i] * gv[j] / den;

  // sigma = Ts * a, e-vars = Te * eps
  const double Ts[3][3] = {{0.5, -0.5, 0.0}, {0.5, 0.5, 0.0}, {0.0, 0.0, 1.0}};
  const double Te[3][3] = {{1.0, 1.0, 0.0}, {-1.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) acc += Ts[i][p] * Ca[p][q] * Te[q][j];
      out.tangent[i][j] = acc;
    }
  return out;
}

// ---------------------------------------------------------------------------
// element routines
// ---------------------------------------------------------------------------

namespace {

constexpr double kG = 0.5773502691896257;  // 2x2 Gauss abscissa

struct GpGeom {
  double b[3][8];  // strain-displacement rows: e11, e22, gamma12
  double weight;   // includes detJ and thickness
  int n_nodes;     // 4 or 3
};

// geometry of all integration points of one element
int element_gps(const Mesh2D& mesh, int elem, double thickness, GpGeom out[4], int nodes_out[4]) {
  if (elem < static_cast<int>(mesh.quads.size())) {
    const auto& q = mesh.quads[elem];
    for (int k = 0; k < 4; ++k) nodes_out[k] = q[k];
    const double xi_tab[4] = {-kG, kG, kG, -kG};
    const double eta_tab[4] = {-kG, -kG, kG, kG};
    for (int g = 0; g < 4; ++g) {
      const double xi = xi_tab[g], eta = eta_tab[g];
      const double dn[4][2] = {{-(1 - eta) / 4, -(1 - xi) / 4},
                               {(1 - eta) / 4, -(1 + xi) / 4},
                               {(1 + eta) / 4, (1 + xi) / 4},
                               {-(1 + eta) / 4, (1 - xi) / 4}};
      double j00 = 0, j01 = 0, j10 = 0, j11 = 0;
      for (int k = 0; k < 4; ++k) {
        const auto& p = mesh.nodes[q[k]];
        j00 += dn[k][0] * p[0];
        j01 += dn[k][0] * p[1];
        j10 += dn[k][1] * p[0];
        j11 += dn[k][1] * p[1];
      }
      const double det = j00 * j11 - j01 * j10;
      if (det <= 0) throw std::runtime_error("non-positive Jacobian in element " + std::to_string(elem));
      const double i00 = j11 / det, i01 = -j01 / det, i10 = -j10 / det, i11 = j00 / det;
      GpGeom& gp = out[g];
      std::memset(gp.b, 0, sizeof(gp.b));
      for (int k = 0; k < 4; ++k) {
        const double dndx = i00 * dn[k][0] + i01 * dn[k][1];
        const double dndy = i10 * dn[k][0] + i11 * dn[k][1];
        gp.b[0][2 * k] = dndx;
        gp.b[1][2 * k + 1] = dndy;
        gp.b[2][2 * k] = dndy;
        gp.b[2][2 * k + 1] = dndx;
      }
      gp.weight = det * thickness;
      gp.n_nodes = 4;
    }
    return 4;
  }
  const auto& t = mesh.tris[elem - mesh.quads.size()];
  for (int k = 0; k < 3; ++k) nodes_out[k] = t[k];
  const auto &a = mesh.nodes[t[0]], &b = mesh.nodes[t[1]], &c = mesh.nodes[t[2]];
  const double twice_area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
  if (twice_area <= 0) throw std::runtime_error("non-positive Jacobian in element " + std::to_string(elem));
  GpGeom& gp = out[0];
  std::memset(gp.b, 0, sizeof(gp.b));
  const double dndx[3] = {(b[1] - c[1]) / twice_area, (c[1] - a[1]) / twice_area,
                          (a[1] - b[1]) / twice_area};
  const double dndy[3] = {(c[0] - b[0]) / twice_area, (a[0] - c[0]) / twice_area,
                          (b[0] - a[0]) / twice_area};
  for (int k = 0; k < 3; ++k) {
    gp.b[0][2 * k] = dndx[k];
    gp.b[1][2 * k + 1] = dndy[k];
    gp.b[2][2 * k] = dndy[k];
    gp.b[2][2 * k + 1] = dndx[k];
  }
  gp.weight = 0.5 * twice_area * thickness;
  gp.n_nodes = 3;
  return 1;
}

struct GpRecord {
  GaussPointState state;
  Strain eps_total{0.0, 0.0, 0.0};
};

struct Workspace {
  std::vector<GpRecord> committed, trial;
  std::vector<int> gp_offset;  // per element
  std::vector<char> is_constrained;
  std::vector<int> free_index;  // full dof -> compact index, -1 if constrained
  std::vector<int> free_dofs;
};

}  // namespace

SolidSolution solve_displacement_driven(const Mesh2D& mesh, const ElasticPlasticMaterial& mat,
                                        const SolidBcs& bcs,
                                        const std::vector<double>& history_values,
                                        const SolidOptions& opts) {
  mat.validate();
  if (history_values.size() < 2) throw std::invalid_argument("need at least two history values");
  if (bcs.driven_x.empty()) throw std::invalid_argument("driven node set is empty");
  const auto t_start = std::chrono::steady_clock::now();

  const int nn = mesh.n_nodes();
  const int ndof = 2 * nn;
  const int ne = mesh.n_elements();

  Workspace ws;
  ws.gp_offset.resize(ne + 1, 0);
  for (int e = 0; e < ne; ++e)
    ws.gp_offset[e + 1] = ws.gp_offset[e] + (e < static_cast<int>(mesh.quads.size()) ? 4 : 1);
  ws.committed.assign(ws.gp_offset.back(), GpRecord{});
  ws.trial.assign(ws.gp_offset.back(), GpRecord{});

  ws.is_constrained.assign(ndof, 0);
  for (int n : bcs.fixed_x) ws.is_constrained[2 * n] = 1;
  for (int n : bcs.fixed_y) ws.is_constrained[2 * n + 1] = 1;
  for (int n : bcs.driven_x) ws.is_constrained[2 * n] = 1;
  ws.free_index.assign(ndof, -1);
  for (int d = 0; d < ndof; ++d) {
    if (!ws.is_constrained[d]) {
      ws.free_index[d] = static_cast<int>(ws.free_dofs.size());
      ws.free_dofs.push_back(d);
    }
  }
  const int nfree = static_cast<int>(ws.free_dofs.size());
  if (nfree == 0) throw std::invalid_argument("no free degrees of freedom");

  std::vector<double> u(ndof, 0.0);
  std::vector<double> f_int(ndof, 0.0);
  Eigen::SparseMatrix<double> K(nfree, nfree);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool pattern_ready = false;
  std::vector<Eigen::Triplet<double>> trips;

  SolidSolution sol;
  sol.driven_reaction.reserve(history_values.size() - 1);

  // assembles f_int (always) and K (optionally); refreshes ws.trial
  const auto assemble = [&](bool want_k) {
    std::fill(f_int.begin(), f_int.end(), 0.0);
    if (want_k) trips.clear();
    GpGeom gps[4];
    int nodes[4];
    for (int e = 0; e < ne; ++e) {
      const int ngp = element_gps(mesh, e, mat.thickness, gps, nodes);
      const int nen = gps[0].n_nodes;
      double ue[8];
      for (int k = 0; k < nen; ++k) {
        ue[2 * k] = u[2 * nodes[k]];
        ue[2 * k + 1] = u[2 * nodes[k] + 1];
      }
      double ke[8][8];
      double fe[8];
      std::memset(fe, 0, sizeof(fe));
      if (want_k) std::memset(ke, 0, sizeof(ke));
      for (int g = 0; g < ngp; ++g) {
        const GpGeom& gp = gps[g];
        Strain eps{0, 0, 0};
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 2 * nen; ++c) eps[r] += gp.b[r][c] * ue[c];
        GpRecord& rec = ws.trial[ws.gp_offset[e] + g];
        const GpRecord& com = ws.committed[ws.gp_offset[e] + g];
        const Strain deps = {eps[0] - com.eps_total[0], eps[1] - com.eps_total[1],
                             eps[2] - com.eps_total[2]};
        Stress sig;
        Tangent C;
        if (opts.elastic_only) {
          const Stress ds = plane_stress_elastic(mat, deps);
          sig = {com.state.stress[0] + ds[0], com.state.stress[1] + ds[1],
                 com.state.stress[2] + ds[2]};
          rec.state = com.state;
          rec.state.stress = sig;
          C = elastic_tangent(mat);
        } else {
          ReturnMapResult rm = return_map_plane_stress(mat, com.state, deps);
          sig = rm.state.stress;
          rec.state = rm.state;
          C = rm.tangent;
        }
        rec.eps_total = eps;
        for (int c = 0; c < 2 * nen; ++c)
          fe[c] += (gp.b[0][c] * sig[0] + gp.b[1][c] * sig[1] + gp.b[2][c] * sig[2]) * gp.weight;
        if (want_k) {
          double cb[3][8];
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 2 * nen; ++c)
              cb[r][c] = C[r][0] * gp.b[0][c] + C[r][1] * gp.b[1][c] + C[r][2] * gp.b[2][c];
          for (int a = 0; a < 2 * nen; ++a)
            for (int c = 0; c < 2 * nen; ++c)
              ke[a][c] += (gp.b[0][a] * cb[0][c] + gp.b[1][a] * cb[1][c] + gp.b[2][a] * cb[2][c]) *
                          gp.weight;
        }
      }
      for (int a = 0; a < 2 * nen; ++a) {
        const int ga = 2 * nodes[a / 2] + (a % 2);
        f_int[ga] += fe[a];
        if (want_k && ws.free_index[ga] >= 0) {
          for (int c = 0; c < 2 * nen; ++c) {
            const int gc = 2 * nodes[c / 2] + (c % 2);
            if (ws.free_index[gc] >= 0)
              trips.emplace_back(ws.free_index[ga], ws.free_index[gc], ke[a][c]);
          }
        }
      }
    }
  };

  const auto residual_norms = [&](double& r_free, double& r_react) {
    double rf = 0.0, rr = 0.0;
    for (int d = 0; d < ndof; ++d) {
      const double f = f_int[d];
      if (ws.is_constrained[d])
        rr += f * f;
      else
        rf += f * f;
    }
    r_free = std::sqrt(rf);
    r_react = std::sqrt(rr);
  };

  // one displacement increment to `target`, bisecting on failure
  const auto solve_increment = [&](double from, double target, int depth, auto&& self) -> void {
    const std::vector<double> u_save = u;
    for (int n : bcs.driven_x) u[2 * n] = target;
    bool converged = false;
    int iters = 0;
    for (int it = 0; it <= opts.max_newton; ++it) {
      assemble(true);
      double r_free, r_react;
      residual_norms(r_free, r_react);
      if (r_free <= std::max(opts.tol * r_react, 1e-10)) {
        converged = true;
        iters = it;
        break;
      }
      if (it == opts.max_newton) break;
      K.setFromTriplets(trips.begin(), trips.end());
      if (!pattern_ready) {
        ldlt.analyzePattern(K);
        pattern_ready = true;
      }
      ldlt.factorize(K);
      if (ldlt.info() != Eigen::Success)
        throw std::runtime_error(
            "singular global stiffness matrix; check boundary constraint coverage");
      Eigen::VectorXd rhs(nfree);
      for (int i = 0; i < nfree; ++i) rhs[i] = -f_int[ws.free_dofs[i]];
      const Eigen::VectorXd du = ldlt.solve(rhs);
      for (int i = 0; i < nfree; ++i) u[ws.free_dofs[i]] += du[i];
    }
    if (!converged) {
      if (depth >= opts.max_bisect) {
        std::ostringstream msg;
        msg << "global Newton failed at driven displacement " << target << " mm after " << depth
            << " bisections";
        throw std::runtime_error(msg.str());
      }
      u = u_save;
      const double mid = 0.5 * (from + target);
      self(from, mid, depth + 1, self);
      self(mid, target, depth + 1, self);
      return;
    }
    // commit
    ws.committed = ws.trial;
    sol.newton_iters.push_back(iters);
    double react = 0.0;
    for (int n : bcs.driven_x) react += f_int[2 * n];
    sol.driven_reaction.push_back(react);
    if (!opts.elastic_only) {
      for (const auto& rec : ws.committed) {
        const double viol = von_mises(rec.state.stress) - mat.yield_stress(rec.state.ebar_p);
        sol.max_yield_violation = std::max(sol.max_yield_violation, viol);
      }
    }
  };

  for (std::size_t k = 1; k < history_values.size(); ++k)
    solve_increment(history_values[k - 1], history_values[k], 0, solve_increment);

  // integration-point -> nodal von Mises: element average, then
  // volume-weighted nodal average
  std::vector<double> num(nn, 0.0), den(nn, 0.0);
  {
    GpGeom gps[4];
    int nodes[4];
    for (int e = 0; e < ne; ++e) {
      const int ngp = element_gps(mesh, e, mat.thickness, gps, nodes);
      double vm_e = 0.0, vol = 0.0;
      for (int g = 0; g < ngp; ++g) {
        vm_e += von_mises(ws.committed[ws.gp_offset[e] + g].state.stress);
        vol += gps[g].weight;
      }
      vm_e /= ngp;
      for (int k = 0; k < gps[0].n_nodes; ++k) {
        num[nodes[k]] += vm_e * vol;
        den[nodes[k]] += vol;
      }
    }
  }
  sol.von_mises_nodal.resize(nn);
  for (int i = 0; i < nn; ++i) sol.von_mises_nodal[i] = num[i] / den[i];

  sol.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

SolidSolution solve_plastic(const LoadHistory& history, const Mesh2D& mesh,
                            const ElasticPlasticMaterial& mat, double tol) {
  if (history.kind != LoadKind::displacement)
    throw std::invalid_argument("solve_plastic expects a displacement history");
  if (static_cast<int>(history.values.size()) != kHistorySamples)
    throw std::invalid_argument("history must carry 101 samples");
  SolidBcs bcs;
  bcs.fixed_x = mesh.left_nodes;
  bcs.fixed_y = mesh.left_nodes;
  bcs.driven_x = mesh.right_nodes;
  SolidOptions opts;
  opts.tol = tol;
  return solve_displacement_driven(mesh, mat, bcs, history.values, opts);
}

void dump_solid_csv(const SolidSolution& sol, const Mesh2D& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "node_x_mm,node_y_mm,von_mises_mpa\n";
  f.precision(17);
  for (int i = 0; i < mesh.n_nodes(); ++i)
    f << mesh.nodes[i][0] << "," << mesh.nodes[i][1] << "," << sol.von_mises_nodal[i] << "\n";
}

}  // namespace seqop
