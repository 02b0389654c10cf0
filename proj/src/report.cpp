#include "seqop/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace seqop {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct LineSample {
  std::vector<double> s_mm, x_mm, y_mm;
};

// 200 sample points along the report line in mm
LineSample report_line(const DatasetBundle& bundle) {
  LineSample ls;
  const int n = 200;
  double x0, y0, x1, y1;
  if (bundle.problem == Problem::heat) {
    x0 = 0.0;
    y0 = 0.0;
    x1 = 30.0;
    y1 = 0.0;  // center line of the slice
  } else {
    x0 = 0.0;
    y0 = 30.0;
    x1 = 110.0;
    y1 = 0.0;  // downward grip-corner diagonal
  }
  const double len = std::hypot(x1 - x0, y1 - y0);
  for (int i = 0; i < n; ++i) {
    const double w = static_cast<double>(i) / (n - 1);
    ls.s_mm.push_back(w * len);
    ls.x_mm.push_back(x0 + w * (x1 - x0));
    ls.y_mm.push_back(y0 + w * (y1 - y0));
  }
  return ls;
}

double coord_to_mm(const DatasetBundle& bundle) {
  return bundle.units_coords == "m" ? 1000.0 : 1.0;
}

// inverse-distance (4 nearest nodes, power 2)
double idw_at(const DatasetBundle& bundle, const float* field, double x_mm, double y_mm) {
  const double to_mm = coord_to_mm(bundle);
  struct Hit {
    double d2;
    int i;
  };
  Hit best[4] = {{1e300, -1}, {1e300, -1}, {1e300, -1}, {1e300, -1}};
  for (int i = 0; i < bundle.n_points; ++i) {
    const double dx = bundle.coords[2 * std::size_t(i)] * to_mm - x_mm;
    const double dy = bundle.coords[2 * std::size_t(i) + 1] * to_mm - y_mm;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best[3].d2) {
      best[3] = {d2, i};
      for (int k = 3; k > 0 && best[k].d2 < best[k - 1].d2; --k) std::swap(best[k], best[k - 1]);
    }
  }
  if (best[0].d2 < 1e-16) return field[best[0].i];
  double num = 0, den = 0;
  for (const Hit& h : best) {
    if (h.i < 0) continue;
    const double w = 1.0 / h.d2;
    num += w * field[h.i];
    den += w;
  }
  return num / den;
}

// --- tiny SVG helpers -------------------------------------------------------

struct SvgCanvas {
  std::ofstream f;
  double w, h;
  SvgCanvas(const std::string& path, double width, double height) : w(width), h(height) {
    f.open(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "' viewBox='0 0 " << w << " " << h << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n";
  }
  ~SvgCanvas() { f << "</svg>\n"; }
};

std::string color_ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(255 * std::clamp(1.5 - std::abs(4 * t - 3.0), 0.0, 1.0));
  const int g = static_cast<int>(255 * std::clamp(1.5 - std::abs(4 * t - 2.0), 0.0, 1.0));
  const int b = static_cast<int>(255 * std::clamp(1.5 - std::abs(4 * t - 1.0), 0.0, 1.0));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

void svg_polyline(SvgCanvas& c, const std::vector<double>& xs, const std::vector<double>& ys,
                  double xmin, double xmax, double ymin, double ymax, const char* stroke,
                  const char* dash = nullptr) {
  const double pad = 40;
  c.f << "<polyline fill='none' stroke='" << stroke << "' stroke-width='1.5'";
  if (dash) c.f << " stroke-dasharray='" << dash << "'";
  c.f << " points='";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double px = pad + (xs[i] - xmin) / (xmax - xmin) * (c.w - 2 * pad);
    const double py = c.h - pad - (ys[i] - ymin) / (ymax - ymin) * (c.h - 2 * pad);
    c.f << px << "," << py << " ";
  }
  c.f << "'/>\n";
}

}  // namespace

void export_report(const ErrorReport& report, const DatasetBundle& bundle,
                   const DeepONetF& model, const std::string& out_dir, bool svg) {
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  const std::string variant = variant_name(model.cfg.variant);

  {  // errors.csv
    std::ofstream f(out / "errors.csv");
    if (!f) throw std::runtime_error("cannot write errors.csv");
    f.precision(17);
    f << "case_id,rel_l2\n";
    for (std::size_t r = 0; r < report.case_ids.size(); ++r)
      f << report.case_ids[r] << "," << report.errors[r] << "\n";
  }

  // histogram: 20 uniform bins over the observed range
  const int n_bins = 20;
  std::vector<int> counts(n_bins, 0);
  double lo = report.min_err, hi = report.max_err;
  if (!(hi > lo)) hi = lo + 1e-12;
  for (double e : report.errors) {
    int b = static_cast<int>((e - lo) / (hi - lo) * n_bins);
    counts[std::clamp(b, 0, n_bins - 1)] += 1;
  }
  {
    std::ofstream f(out / "histogram.csv");
    if (!f) throw std::runtime_error("cannot write histogram.csv");
    f.precision(17);
    f << "bin_lo,bin_hi,count\n";
    for (int b = 0; b < n_bins; ++b)
      f << lo + (hi - lo) * b / n_bins << "," << lo + (hi - lo) * (b + 1) / n_bins << ","
        << counts[b] << "\n";
  }

  // best / median / worst detail files
  const std::array<std::pair<const char*, int>, 3> picks = {
      std::make_pair("best", report.best_case), std::make_pair("median", report.median_case),
      std::make_pair("worst", report.worst_case)};
  const double to_mm = coord_to_mm(bundle);
  const LineSample line = report_line(bundle);

  for (const auto& [tag, case_id] : picks) {
    const MatF pred = predict_cases(model, bundle, {case_id});
    const float* truth = bundle.field_row(case_id);

    {
      std::ofstream f(out / (std::string("field_case_") + tag + ".csv"));
      if (!f) throw std::runtime_error("cannot write field_case CSV");
      f.precision(9);
      f << "x_" << bundle.units_coords << ",y_" << bundle.units_coords << ",truth,pred_" << variant
        << "\n";
      for (int i = 0; i < bundle.n_points; ++i)
        f << bundle.coords[2 * std::size_t(i)] << "," << bundle.coords[2 * std::size_t(i) + 1]
          << "," << truth[i] << "," << pred.d[i] << "\n";
    }
    {
      std::ofstream f(out / (std::string("line_") + tag + ".csv"));
      if (!f) throw std::runtime_error("cannot write line CSV");
      f.precision(9);
      f << "s_mm,x_mm,y_mm,truth,pred_" << variant << "\n";
      for (std::size_t i = 0; i < line.s_mm.size(); ++i) {
        const double tv = idw_at(bundle, truth, line.x_mm[i], line.y_mm[i]);
        const double pv = idw_at(bundle, pred.row(0), line.x_mm[i], line.y_mm[i]);
        f << line.s_mm[i] << "," << line.x_mm[i] << "," << line.y_mm[i] << "," << tv << "," << pv
          << "\n";
      }
    }
    if (svg) {
      // line plot: truth solid, prediction dashed
      std::vector<double> tv, pv;
      for (std::size_t i = 0; i < line.s_mm.size(); ++i) {
        tv.push_back(idw_at(bundle, truth, line.x_mm[i], line.y_mm[i]));
        pv.push_back(idw_at(bundle, pred.row(0), line.x_mm[i], line.y_mm[i]));
      }
      double vmin = *std::min_element(tv.begin(), tv.end());
      double vmax = *std::max_element(tv.begin(), tv.end());
      for (double v : pv) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
      if (!(vmax > vmin)) vmax = vmin + 1;
      SvgCanvas c((out / (std::string("line_") + tag + ".svg")).string(), 640, 420);
      svg_polyline(c, line.s_mm, tv, 0, line.s_mm.back(), vmin, vmax, "black");
      svg_polyline(c, line.s_mm, pv, 0, line.s_mm.back(), vmin, vmax, "crimson", "6,4");
      c.f << "<text x='44' y='24' font-size='14'>" << tag << " case " << case_id
          << " (black: solver, dashed: " << variant << ")</text>\n";

      // field scatter: truth vs prediction panels colored on a shared scale
      const auto bb_x = [&](int i) { return bundle.coords[2 * std::size_t(i)] * to_mm; };
      const auto bb_y = [&](int i) { return bundle.coords[2 * std::size_t(i) + 1] * to_mm; };
      double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
      for (int i = 0; i < bundle.n_points; ++i) {
        xmin = std::min(xmin, bb_x(i));
        xmax = std::max(xmax, bb_x(i));
        ymin = std::min(ymin, bb_y(i));
        ymax = std::max(ymax, bb_y(i));
      }
      if (!(ymax > ymin)) ymax = ymin + 1;  // 1D slice
      double fmin = 1e300, fmax = -1e300;
      for (int i = 0; i < bundle.n_points; ++i) {
        fmin = std::min({fmin, static_cast<double>(truth[i]), static_cast<double>(pred.d[i])});
        fmax = std::max({fmax, static_cast<double>(truth[i]), static_cast<double>(pred.d[i])});
      }
      if (!(fmax > fmin)) fmax = fmin + 1;
      SvgCanvas fc((out / (std::string("field_") + tag + ".svg")).string(), 760, 480);
      const double pad = 30, panel_h = (480 - 3 * pad) / 2;
      const auto panel = [&](const float* v, double top, const char* label) {
        fc.f << "<text x='" << pad << "' y='" << top - 6 << "' font-size='12'>" << label
             << "</text>\n";
        const double sx = (760 - 2 * pad) / (xmax - xmin);
        const double sy = panel_h / (ymax - ymin);
        const double dot = std::max(2.0, std::min(sx, sy) * (xmax - xmin) /
                                             std::sqrt(static_cast<double>(bundle.n_points)) * 0.6);
        for (int i = 0; i < bundle.n_points; ++i) {
          const double px = pad + (bb_x(i) - xmin) * sx;
          const double py = top + panel_h - (bb_y(i) - ymin) * sy;
          fc.f << "<rect x='" << px - dot / 2 << "' y='" << py - dot / 2 << "' width='" << dot
               << "' height='" << dot << "' fill='" << color_ramp((v[i] - fmin) / (fmax - fmin))
               << "'/>\n";
        }
      };
      panel(truth, pad + 12, (std::string(tag) + " truth").c_str());
      panel(pred.row(0), 2 * pad + panel_h + 12, (variant + " prediction").c_str());
    }
  }

  if (svg) {
    SvgCanvas c((out / "histogram.svg").string(), 640, 420);
    const int cmax = *std::max_element(counts.begin(), counts.end());
    const double pad = 40, bw = (640 - 2 * pad) / n_bins;
    for (int b = 0; b < n_bins; ++b) {
      const double bh = counts[b] / static_cast<double>(std::max(1, cmax)) * (420 - 2 * pad);
      c.f << "<rect x='" << pad + b * bw << "' y='" << 420 - pad - bh << "' width='" << bw * 0.9
          << "' height='" << bh << "' fill='steelblue'/>\n";
    }
    c.f << "<text x='44' y='24' font-size='14'>relative L2 error over " << report.errors.size()
        << " test cases (" << variant << ")</text>\n";
  }

  {  // summary.json
    json j;
    j["format_version"] = 1;
    j["problem"] = problem_name(bundle.problem);
    j["variant"] = variant;
    j["n_test"] = report.case_ids.size();
    j["stats"] = {{"mean", report.mean},
                  {"stddev", report.stddev},
                  {"min", report.min_err},
                  {"max", report.max_err}};
    j["cases"] = {{"best", report.best_case},
                  {"median", report.median_case},
                  {"worst", report.worst_case}};
    j["timing"] = {{"mean_solver_s", report.mean_solver_s},
                   {"per_case_inference_s", report.per_case_infer_s},
                   {"speedup", report.speedup}};
    j["data"] = {{"config_hash", bundle.config_hash}, {"n_cases", bundle.n_cases}};
    std::ofstream f(out / "summary.json");
    if (!f) throw std::runtime_error("cannot write summary.json");
    f << j.dump(2) << "\n";
  }
}

}  // namespace seqop
