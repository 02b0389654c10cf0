#pragma once

#include <array>
#include <vector>

#include "seqop/rng.hpp"

namespace seqop {

constexpr int kHistorySamples = 101;
constexpr int kControlPoints = 6;
constexpr double kHeatHorizonS = 17.0;
constexpr double kSolidHorizonS = 1.0;
constexpr double kMaxControlDisplacementMm = 5.5;  // 5% of the 110 mm specimen

enum class LoadKind { flux, displacement };

/// Time-dependent load magnitude on the fixed 101-step uniform grid
/// t_i = i * horizon / 100. Flux in MW/m^2, displacement in mm.
struct LoadHistory {
  LoadKind kind = LoadKind::flux;
  double horizon = kHeatHorizonS;
  std::vector<double> values;  // length 101

  double time_at(int i) const { return horizon * i / (kHistorySamples - 1); }
  /// Linear interpolation between the 101 samples.
  double value_at(double t) const;
};

/// Six (time, magnitude) anchors. times[0] = 0, times[5] = horizon,
/// interior times strictly ascending.
struct ControlPoints {
  std::array<double, kControlPoints> times{};
  std::array<double, kControlPoints> values{};
};

struct FluxParams {
  double A = 0, B = 0, C = 0;  // A in [3,8] MW/m^2, B in [0.3,0.7], C in [-0.5,0.5] MW/m^2
};

/// Endpoints fixed at 0 and horizon, 4 interior draws i.i.d. uniform on
/// [interior_lo, interior_hi]. Draws closer than 1e-6*horizon to each other
/// or to the endpoints are rejected and redrawn.
std::array<double, kControlPoints> sample_control_times(Rng& rng, double horizon,
                                                        double interior_lo, double interior_hi);

/// q_cp = A (t+1)^(-B) + C.
double flux_at_control(const FluxParams& p, double t_cp);

/// Gaussian RBF interpolation, kernel exp(-(shape*r)^2). Solves the 6x6
/// system and evaluates at the queries. Throws if the kernel matrix
/// condition estimate exceeds 1e12, naming the offending spacing.
std::vector<double> rbf_interpolate(const std::array<double, kControlPoints>& times,
                                    const std::array<double, kControlPoints>& values,
                                    const std::vector<double>& queries, double shape);

/// Self-scaling kernel width: 1 / mean pairwise distance of the control times.
double rbf_shape_for(const std::array<double, kControlPoints>& times);

LoadHistory gen_heat_history(Rng& rng);
LoadHistory gen_disp_history(Rng& rng);

/// Control points behind the last gen_* call are occasionally useful for
/// diagnostics; these variants also return them.
LoadHistory gen_heat_history(Rng& rng, ControlPoints& cp_out);
LoadHistory gen_disp_history(Rng& rng, ControlPoints& cp_out);

/// Two-column CSV (time_s, value).
void dump_history_csv(const LoadHistory& h, const std::string& path);
LoadHistory load_history_csv(const std::string& path, LoadKind kind, double horizon);

}  // namespace seqop
