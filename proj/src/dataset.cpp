#include "seqop/dataset.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace seqop {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string problem_name(Problem p) { return p == Problem::heat ? "heat" : "plastic"; }

Problem problem_from(const std::string& s) {
  if (s == "heat") return Problem::heat;
  if (s == "plastic") return Problem::plastic;
  throw std::invalid_argument("unknown problem: " + s);
}

void DatasetBundle::validate() const {
  if (n_cases < 2) throw std::runtime_error("dataset needs at least 2 cases");
  if (n_points < 1) throw std::runtime_error("dataset has no field points");
  if (histories.size() != std::size_t(n_cases) * kHistorySamples ||
      coords.size() != std::size_t(n_points) * 2 ||
      fields.size() != std::size_t(n_cases) * n_points || times.size() != std::size_t(n_cases))
    throw std::runtime_error("dataset blob sizes are inconsistent with the manifest");
  for (const auto* blob : {&histories, &coords, &fields, &times}) {
    for (float x : *blob)
      if (!std::isfinite(x)) throw std::runtime_error("dataset contains non-finite values");
  }
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void write_blob(const fs::path& path, const std::vector<float>& v) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

std::vector<float> read_blob(const fs::path& path, std::size_t expect) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<float> v(expect);
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expect * 4));
  if (static_cast<std::size_t>(f.gcount()) != expect * 4)
    throw std::runtime_error(path.string() + " is shorter than the manifest requires");
  char extra;
  if (f.read(&extra, 1))
    throw std::runtime_error(path.string() + " is longer than the manifest requires");
  return v;
}

}  // namespace

void save_bundle(const DatasetBundle& b, const std::string& dir) {
  fs::create_directories(dir);
  json j;
  j["format_version"] = 1;
  j["problem"] = problem_name(b.problem);
  j["n_cases"] = b.n_cases;
  j["n_points"] = b.n_points;
  j["seq_len"] = kHistorySamples;
  j["horizon_s"] = b.horizon;
  j["seed"] = b.seed;
  j["config_hash"] = b.config_hash;
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["units"] = {{"history", b.units_history}, {"field", b.units_field}, {"coords", b.units_coords}};
  j["files"] = {{"histories", "histories.bin"},
                {"coords", "coords.bin"},
                {"fields", "fields.bin"},
                {"times", "times.bin"}};
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("cannot write manifest.json in " + dir);
  f << j.dump(2) << "\n";
  write_blob(fs::path(dir) / "histories.bin", b.histories);
  write_blob(fs::path(dir) / "coords.bin", b.coords);
  write_blob(fs::path(dir) / "fields.bin", b.fields);
  write_blob(fs::path(dir) / "times.bin", b.times);
}

DatasetBundle load_bundle(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("cannot read manifest.json in " + dir + " (not a dataset?)");
  json j = json::parse(f);
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported dataset format version");
  if (j.at("seq_len").get<int>() != kHistorySamples)
    throw std::runtime_error("dataset sequence length mismatch");
  DatasetBundle b;
  b.problem = problem_from(j.at("problem").get<std::string>());
  b.n_cases = j.at("n_cases").get<int>();
  b.n_points = j.at("n_points").get<int>();
  b.horizon = j.at("horizon_s").get<double>();
  b.seed = j.at("seed").get<std::uint64_t>();
  b.config_hash = j.at("config_hash").get<std::string>();
  b.units_history = j.at("units").at("history").get<std::string>();
  b.units_field = j.at("units").at("field").get<std::string>();
  b.units_coords = j.at("units").at("coords").get<std::string>();
  b.histories = read_blob(fs::path(dir) / "histories.bin", std::size_t(b.n_cases) * kHistorySamples);
  b.coords = read_blob(fs::path(dir) / "coords.bin", std::size_t(b.n_points) * 2);
  b.fields = read_blob(fs::path(dir) / "fields.bin", std::size_t(b.n_cases) * b.n_points);
  b.times = read_blob(fs::path(dir) / "times.bin", std::size_t(b.n_cases));
  b.validate();
  return b;
}

}  // namespace seqop
