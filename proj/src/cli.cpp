#include "seqop/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "seqop/mesh2d.hpp"
#include "seqop/pipeline.hpp"
#include "seqop/report.hpp"
#include "seqop/solid.hpp"
#include "seqop/tensor.hpp"
#include "seqop/thermal.hpp"

namespace seqop {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool deterministic_mode() {
  const char* v = std::getenv("SEQOP_DETERMINISTIC");
  return v && std::string(v) == "1";
}

void prepare_out_dir(const std::string& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out))
    throw std::runtime_error(out + " exists and is not a directory");
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw std::runtime_error(out + " is not empty; pass --force to overwrite");
  fs::create_directories(out);
}

void echo_config(const std::string& out, const json& cfg) {
  std::ofstream f(fs::path(out) / "run_config.json");
  if (!f) throw std::runtime_error("cannot write run_config.json in " + out);
  f << cfg.dump(2) << "\n";
}

// flags > config file > defaults: pre-load --config and use it for defaults
json load_config_file(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      std::ifstream f(args[i + 1]);
      if (!f) throw std::runtime_error("cannot read config file " + args[i + 1]);
      return json::parse(f);
    }
  }
  return json::object();
}

struct SplitMeta {
  bool valid = false;
  std::uint64_t seed = 0;
  int n_test = 0;
  std::string data_hash;
};

SplitMeta split_meta_from(const std::string& meta_json) {
  SplitMeta sm;
  const json m = json::parse(meta_json);
  if (m.contains("split")) {
    sm.valid = true;
    sm.seed = m["split"].value("seed", std::uint64_t{0});
    sm.n_test = m["split"].value("n_test", 0);
    sm.data_hash = m["split"].value("data_config_hash", std::string{});
  }
  return sm;
}

std::string model_problem(const std::string& meta_json) {
  return json::parse(meta_json).value("problem", std::string{});
}

int cmd_gen(const json& cfg_file, const std::vector<std::string>& args);
int cmd_train(const json& cfg_file, const std::vector<std::string>& args);
int cmd_eval(const json& cfg_file, const std::vector<std::string>& args);
int cmd_predict(const json& cfg_file, const std::vector<std::string>& args);
int cmd_bench(const json& cfg_file, const std::vector<std::string>& args);

// ---------------------------------------------------------------------------

int cmd_gen(const json& cf, const std::vector<std::string>& args) {
  CLI::App app{"generate a physics dataset"};
  GenOptions opt;
  std::string problem = cf.value("problem", "heat");
  std::string out = cf.value("out", "");
  std::string config_path, dump_history, export_mesh;
  bool force = cf.value("force", false);
  opt.n_cases = cf.value("cases", opt.n_cases);
  opt.seed = cf.value("seed", opt.seed);
  opt.jobs = cf.value("jobs", opt.jobs);
  opt.dt = cf.value("dt", opt.dt);
  opt.slice_elements = cf.value("mesh_elems", opt.slice_elements);
  opt.dogbone_target_elems = cf.value("mesh_target", opt.dogbone_target_elems);

  app.add_option("--problem", problem, "heat or plastic")->check(CLI::IsMember({"heat", "plastic"}));
  app.add_option("--cases", opt.n_cases, "number of cases")->check(CLI::PositiveNumber);
  app.add_option("--seed", opt.seed, "generation seed");
  app.add_option("--out", out, "output dataset directory")->required();
  app.add_option("--jobs", opt.jobs, "parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--dt", opt.dt, "thermal time step [s]")->check(CLI::PositiveNumber);
  app.add_option("--mesh-elems", opt.slice_elements, "thermal slice elements")->check(CLI::PositiveNumber);
  app.add_option("--mesh-target", opt.dogbone_target_elems, "dog-bone element target")->check(CLI::PositiveNumber);
  app.add_option("--dump-history", dump_history, "write case 0's history as CSV");
  app.add_option("--export-mesh", export_mesh, "write the dog-bone mesh as text");
  app.add_option("--config", config_path, "JSON config file (defaults under the flags)");
  app.add_flag("--force", force, "overwrite a non-empty --out");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  opt.problem = problem_from(problem);
  opt.zero_times = deterministic_mode();
  prepare_out_dir(out, force);

  const DatasetBundle bundle = generate_dataset(opt, [](int done, int total) {
    if (done % 50 == 0 || done == total)
      std::cerr << "gen: " << done << "/" << total << " cases\n";
  });
  save_bundle(bundle, out);

  if (!dump_history.empty()) {
    LoadHistory h;
    h.kind = bundle.load_kind();
    h.horizon = bundle.horizon;
    h.values.assign(bundle.history_row(0), bundle.history_row(0) + kHistorySamples);
    dump_history_csv(h, dump_history);
  }
  if (!export_mesh.empty()) {
    if (opt.problem != Problem::plastic)
      throw std::runtime_error("--export-mesh applies to the plastic problem");
    save_mesh_txt(build_dogbone_mesh(opt.dogbone_target_elems), export_mesh);
  }

  json echo = {{"subcommand", "gen"},       {"problem", problem},
               {"cases", opt.n_cases},      {"seed", opt.seed},
               {"jobs", opt.jobs},          {"dt", opt.dt},
               {"mesh_elems", opt.slice_elements}, {"mesh_target", opt.dogbone_target_elems},
               {"deterministic", opt.zero_times},  {"config_hash", bundle.config_hash}};
  echo_config(out, echo);
  std::cout << "gen: wrote " << bundle.n_cases << " cases (" << bundle.n_points
            << " points each) to " << out << "\n";
  return 0;
}

int cmd_train(const json& cf, const std::vector<std::string>& args) {
  CLI::App app{"train a DeepONet variant"};
  std::string data = cf.value("data", ""), out = cf.value("out", "");
  std::string variant = cf.value("variant", "fnn");
  std::string config_path;
  TrainOptions opt;
  opt.epochs = cf.value("epochs", opt.epochs);
  opt.batch = cf.value("batch", opt.batch);
  opt.lr = cf.value("lr", opt.lr);
  opt.seed = cf.value("seed", std::uint64_t{1});
  opt.checkpoint_every = cf.value("checkpoint_every", opt.checkpoint_every);
  int n_test = cf.value("n_test", 50);
  bool force = cf.value("force", false);

  app.add_option("--data", data, "dataset directory")->required();
  app.add_option("--variant", variant, "fnn, lstm or gru")->check(CLI::IsMember({"fnn", "lstm", "gru"}));
  app.add_option("--epochs", opt.epochs, "training iterations (one batch each)");
  app.add_option("--batch", opt.batch, "mini-batch size")->check(CLI::PositiveNumber);
  app.add_option("--lr", opt.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--seed", opt.seed, "training seed (split, init, batching)");
  app.add_option("--n-test", n_test, "held-out test cases")->check(CLI::PositiveNumber);
  app.add_option("--checkpoint-every", opt.checkpoint_every, "checkpoint cadence in iterations");
  app.add_option("--out", out, "model output directory")->required();
  app.add_option("--config", config_path, "JSON config file (defaults under the flags)");
  app.add_flag("--force", force, "overwrite a non-empty --out");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  opt.variant = variant_from(variant);
  prepare_out_dir(out, force);
  opt.checkpoint_dir = out;
  opt.on_log = [](long it, double loss) {
    std::cerr << "train: iter " << it << " loss " << loss << "\n";
  };

  const DatasetBundle bundle = load_bundle(data);
  const SplitView split = split_dataset(bundle, n_test, opt.seed);
  const TrainResult result = train(bundle, split, opt);

  json meta;
  meta["problem"] = problem_name(bundle.problem);
  meta["split"] = {{"seed", opt.seed}, {"n_test", n_test}, {"data_config_hash", bundle.config_hash}};
  meta["training"] = {{"epochs", opt.epochs},
                      {"batch", opt.batch},
                      {"lr", opt.lr},
                      {"seed", opt.seed},
                      {"final_loss", result.loss_trace.empty() ? 0.0
                                                               : result.loss_trace.back()}};
  save_model(result.model, out, meta.dump());

  {  // coordinates ride along so `predict` is self-contained
    std::ofstream f(fs::path(out) / "coords.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bundle.coords.data()),
            static_cast<std::streamsize>(bundle.coords.size() * 4));
    std::ofstream l(fs::path(out) / "loss.csv");
    l << "iteration,loss\n";
    l.precision(9);
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
      l << i << "," << result.loss_trace[i] << "\n";
  }

  json echo = {{"subcommand", "train"}, {"data", data},   {"variant", variant},
               {"epochs", opt.epochs},  {"batch", opt.batch}, {"lr", opt.lr},
               {"seed", opt.seed},      {"n_test", n_test},
               {"deterministic", deterministic_mode()}};
  echo_config(out, echo);
  std::cout << "train: " << variant << " model with "
            << result.model.params.param_count() - 1 << " network parameters + beta, final loss "
            << (result.loss_trace.empty() ? 0.f : result.loss_trace.back()) << ", saved to " << out
            << "\n";
  return 0;
}

int cmd_eval(const json& cf, const std::vector<std::string>& args) {
  CLI::App app{"evaluate a trained model"};
  std::string model_dir = cf.value("model", ""), data = cf.value("data", ""),
              out = cf.value("out", "");
  std::string config_path;
  bool svg = cf.value("svg", false), force = cf.value("force", false);
  int n_repeat = cf.value("n_repeat", 5);

  app.add_option("--model", model_dir, "model directory")->required();
  app.add_option("--data", data, "dataset directory")->required();
  app.add_option("--out", out, "report directory")->required();
  app.add_option("--n-repeat", n_repeat, "inference timing repeats")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON config file (defaults under the flags)");
  app.add_flag("--svg", svg, "also render SVG figures");
  app.add_flag("--force", force, "overwrite a non-empty --out");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string meta_json;
  const DeepONetF model = load_model(model_dir, &meta_json);
  const DatasetBundle bundle = load_bundle(data);
  if (model_problem(meta_json) != problem_name(bundle.problem))
    throw std::runtime_error("model was trained on problem '" + model_problem(meta_json) +
                             "' but the dataset is '" + problem_name(bundle.problem) + "'");

  std::vector<int> test_idx;
  const SplitMeta sm = split_meta_from(meta_json);
  if (sm.valid && sm.data_hash == bundle.config_hash) {
    test_idx = split_dataset(bundle, sm.n_test, sm.seed).test_idx;
  } else {
    std::cerr << "eval: dataset differs from the training data; evaluating all cases\n";
    test_idx.resize(bundle.n_cases);
    for (int i = 0; i < bundle.n_cases; ++i) test_idx[i] = i;
  }

  prepare_out_dir(out, force);
  ErrorReport rep = evaluate(model, bundle, test_idx);
  const TimingSummary ts = measure_speedup(bundle, model, test_idx, n_repeat);
  rep.mean_solver_s = ts.mean_solver_s;
  rep.per_case_infer_s = ts.per_case_infer_s;
  rep.speedup = ts.speedup;
  export_report(rep, bundle, model, out, svg);

  json echo = {{"subcommand", "eval"}, {"model", model_dir}, {"data", data},
               {"svg", svg},           {"n_repeat", n_repeat}};
  echo_config(out, echo);
  std::cout << "eval: mean rel L2 " << rep.mean << " (min " << rep.min_err << ", max "
            << rep.max_err << ") over " << rep.errors.size() << " cases; speedup "
            << rep.speedup << "x; report in " << out << "\n";
  return 0;
}

int cmd_predict(const json& cf, const std::vector<std::string>& args) {
  CLI::App app{"predict a full field for one load history"};
  std::string model_dir = cf.value("model", ""), history_csv = cf.value("history", ""),
              out = cf.value("out", "");
  std::string config_path;
  app.add_option("--model", model_dir, "model directory")->required();
  app.add_option("--history", history_csv, "101-sample history CSV")->required();
  app.add_option("--out", out, "output CSV")->required();
  app.add_option("--config", config_path, "JSON config file (defaults under the flags)");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string meta_json;
  const DeepONetF model = load_model(model_dir, &meta_json);
  const Problem problem = problem_from(model_problem(meta_json));
  const LoadHistory h = load_history_csv(
      history_csv, problem == Problem::heat ? LoadKind::flux : LoadKind::displacement,
      problem == Problem::heat ? kHeatHorizonS : kSolidHorizonS);

  std::ifstream cb(fs::path(model_dir) / "coords.bin", std::ios::binary);
  if (!cb) throw std::runtime_error("model directory has no coords.bin");
  std::vector<char> raw((std::istreambuf_iterator<char>(cb)), std::istreambuf_iterator<char>());
  const int M = static_cast<int>(raw.size() / 8);
  MatF coords(M, 2);
  std::memcpy(coords.data(), raw.data(), raw.size());

  MatF hist(1, kHistorySamples);
  for (int t = 0; t < kHistorySamples; ++t) hist(0, t) = static_cast<float>(h.values[t]);
  const MatF field = predict_field(model, hist, coords);

  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  f.precision(9);
  f << "x,y,prediction\n";
  for (int i = 0; i < M; ++i)
    f << coords(i, 0) << "," << coords(i, 1) << "," << field.d[i] << "\n";
  std::cout << "predict: wrote " << M << " field values to " << out << "\n";
  return 0;
}

int cmd_bench(const json& cf, const std::vector<std::string>& args) {
  CLI::App app{"compare solver and inference cost"};
  std::string model_dir = cf.value("model", ""), data = cf.value("data", "");
  std::string config_path;
  int n_repeat = cf.value("n_repeat", 5);
  app.add_option("--model", model_dir, "model directory")->required();
  app.add_option("--data", data, "dataset directory")->required();
  app.add_option("--n-repeat", n_repeat, "timing repeats")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON config file (defaults under the flags)");
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string meta_json;
  const DeepONetF model = load_model(model_dir, &meta_json);
  const DatasetBundle bundle = load_bundle(data);
  if (model_problem(meta_json) != problem_name(bundle.problem))
    throw std::runtime_error("model/problem mismatch for bench");
  std::vector<int> idx(bundle.n_cases);
  for (int i = 0; i < bundle.n_cases; ++i) idx[i] = i;
  const TimingSummary ts = measure_speedup(bundle, model, idx, n_repeat);
  std::cout << "bench: solver_per_case_s=" << ts.mean_solver_s
            << " inference_per_case_s=" << ts.per_case_infer_s << " speedup=" << ts.speedup
            << (ts.solver_time_remeasured ? " (solver re-measured)" : "") << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  if (deterministic_mode()) force_sequential_compute();
  try {
    if (args.empty()) {
      std::cerr << "usage: seqop {gen|train|eval|predict|bench} [options]\n";
      return 2;
    }
    const json cf = load_config_file(args);
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    if (args[0] == "gen") return cmd_gen(cf, rest);
    if (args[0] == "train") return cmd_train(cf, rest);
    if (args[0] == "eval") return cmd_eval(cf, rest);
    if (args[0] == "predict") return cmd_predict(cf, rest);
    if (args[0] == "bench") return cmd_bench(cf, rest);
    std::cerr << "error: unknown subcommand '" << args[0] << "'\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace seqop
