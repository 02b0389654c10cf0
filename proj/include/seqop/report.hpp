#pragma once

#include <string>

#include "seqop/pipeline.hpp"

namespace seqop {

/// Writes the evaluation artifacts into out_dir:
///   errors.csv                 case id, relative L2 error
///   histogram.csv              20 uniform bins over the observed error range
///   field_case_<k>.csv         coords, truth, prediction for best/median/worst
///   line_<k>.csv               200-point line sample (heat: center line,
///                              plastic: the (0,30) -> (110,0) mm diagonal)
///   summary.json               stats, case picks, timing, config echo
/// and, when svg is set, histogram/line/field renderings of the same data.
void export_report(const ErrorReport& report, const DatasetBundle& bundle,
                   const DeepONetF& model, const std::string& out_dir, bool svg = false);

}  // namespace seqop
