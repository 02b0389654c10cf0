#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqop/histories.hpp"

namespace seqop {

enum class Problem { heat, plastic };

std::string problem_name(Problem p);
Problem problem_from(const std::string& s);

/// One supervised sample: load history in, final nodal field out.
struct CaseRecord {
  LoadHistory history;
  std::vector<double> field;
  double wall_s = 0.0;
};

/// N cases sharing one mesh. Stored on disk as manifest.json plus raw
/// little-endian float32 blobs (histories.bin, coords.bin, fields.bin,
/// times.bin).
struct DatasetBundle {
  Problem problem = Problem::heat;
  int n_cases = 0;
  int n_points = 0;
  double horizon = kHeatHorizonS;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string units_history, units_field, units_coords;

  std::vector<float> histories;  // [N x 101]
  std::vector<float> coords;     // [M x 2]
  std::vector<float> fields;     // [N x M]
  std::vector<float> times;      // [N] solver wall seconds (zero in deterministic mode)

  const float* history_row(int i) const { return histories.data() + std::size_t(i) * kHistorySamples; }
  const float* field_row(int i) const { return fields.data() + std::size_t(i) * n_points; }
  LoadKind load_kind() const { return problem == Problem::heat ? LoadKind::flux : LoadKind::displacement; }

  void validate() const;
};

std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(std::uint64_t h);

void save_bundle(const DatasetBundle& b, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

}  // namespace seqop
