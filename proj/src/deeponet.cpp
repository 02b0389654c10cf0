#include "seqop/deeponet.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace seqop {

using json = nlohmann::json;
namespace fs = std::filesystem;
using nn::Act;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::fnn: return "fnn";
    case Variant::lstm: return "lstm";
    case Variant::gru: return "gru";
  }
  return "?";
}

Variant variant_from(const std::string& s) {
  if (s == "fnn") return Variant::fnn;
  if (s == "lstm") return Variant::lstm;
  if (s == "gru") return Variant::gru;
  throw std::invalid_argument("unknown variant: " + s);
}

DeepONetConfig DeepONetConfig::paper(Variant v) {
  DeepONetConfig cfg;
  cfg.variant = v;
  if (v == Variant::fnn) {
    cfg.hd = 100;
    cfg.branch_widths = {101, 100, 100, 100, 100, 100, 100};
  } else {
    cfg.hd = 101;
    cfg.rnn_hidden = {256, 256};
  }
  cfg.trunk_widths = {2, 100, 100, 100, 100, 100, cfg.hd};
  return cfg;
}

void DeepONetConfig::validate() const {
  if (trunk_widths.size() < 2 || trunk_widths.front() != 2)
    throw std::invalid_argument("trunk must map 2 coordinates");
  if (trunk_widths.back() != hd)
    throw std::invalid_argument("trunk output width " + std::to_string(trunk_widths.back()) +
                                " != HD " + std::to_string(hd));
  if (variant == Variant::fnn) {
    if (branch_widths.size() < 2 || branch_widths.front() != seq_len ||
        branch_widths.back() != hd)
      throw std::invalid_argument("fnn branch widths must run from seq_len to HD");
  } else {
    if (rnn_hidden.empty()) throw std::invalid_argument("recurrent branch needs hidden widths");
  }
}

template <typename T>
DeepONetModel<T> build_model(const DeepONetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DeepONetModel<T> model;
  model.cfg = cfg;
  Rng rng(seed);
  auto& ps = model.params;

  const auto add_dense = [&](const std::string& prefix, int layer, int in, int out) {
    const int iw = ps.add(prefix + ".l" + std::to_string(layer) + ".W", in, out);
    nn::glorot_fill(ps[iw].w, in, out, rng);
    const int ib = ps.add(prefix + ".l" + std::to_string(layer) + ".b", 1, out);
    return std::array<int, 2>{iw, ib};
  };

  if (cfg.variant == Variant::fnn) {
    for (std::size_t k = 0; k + 1 < cfg.branch_widths.size(); ++k)
      model.branch_dense.push_back(
          add_dense("branch", static_cast<int>(k), cfg.branch_widths[k], cfg.branch_widths[k + 1]));
  } else {
    const int gates = cfg.variant == Variant::lstm ? 4 : 3;
    std::vector<int> hs = cfg.rnn_hidden;
    hs.push_back(cfg.hd);  // final non-sequence layer
    int in = 1;
    for (std::size_t k = 0; k < hs.size(); ++k) {
      const int h = hs[k];
      const std::string name = "branch.rnn" + std::to_string(k);
      const int iwx = ps.add(name + ".Wx", in, gates * h);
      nn::glorot_fill(ps[iwx].w, in, gates * h, rng);
      const int iwh = ps.add(name + ".Wh", h, gates * h);
      nn::glorot_fill(ps[iwh].w, h, gates * h, rng);
      const int ib = ps.add(name + ".b", 1, gates * h);
      if (cfg.variant == Variant::lstm) {
        for (int j = 0; j < h; ++j) ps[ib].w[h + j] = T(1);  // forget-gate bias
      }
      model.branch_rnn.push_back({iwx, iwh, ib});
      in = h;
    }
  }
  for (std::size_t k = 0; k + 1 < cfg.trunk_widths.size(); ++k)
    model.trunk_dense.push_back(
        add_dense("trunk", static_cast<int>(k), cfg.trunk_widths[k], cfg.trunk_widths[k + 1]));
  model.beta = ps.add("beta", 1, 1);
  return model;
}

// ---------------------------------------------------------------------------
// fusion
// ---------------------------------------------------------------------------

template <typename T>
void fuse_forward(const Mat<T>& b, const Mat<T>& t, T beta, Mat<T>& out) {
  if (b.cols != t.cols) shape_error("fusion branch/trunk width");
  out.resize(b.rows, t.rows);
  gemm<T>(false, true, T(1), b, t, T(0), out);
  for (auto& x : out.d) x += beta;
}

template <typename T>
void fuse_backward(const Mat<T>& b, const Mat<T>& t, const Mat<T>& d_out, Mat<T>& db, Mat<T>& dt,
                   T& dbeta) {
  if (d_out.rows != b.rows || d_out.cols != t.rows) shape_error("fusion d_out");
  db.resize(b.rows, b.cols);
  gemm<T>(false, false, T(1), d_out, t, T(0), db);
  dt.resize(t.rows, t.cols);
  gemm<T>(true, false, T(1), d_out, b, T(0), dt);
  double acc = 0.0;
  for (const auto& x : d_out.d) acc += static_cast<double>(x);
  dbeta = static_cast<T>(acc);
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

template <typename T>
void forward(const DeepONetModel<T>& model, const Mat<T>& histories, const Mat<T>& coords,
             Mat<T>& out, EvalCache<T>* cache) {
  const auto& cfg = model.cfg;
  if (histories.cols != cfg.seq_len)
    shape_error("histories [" + std::to_string(histories.rows) + "x" +
                std::to_string(histories.cols) + "], expected " + std::to_string(cfg.seq_len) +
                " samples");
  if (coords.cols != 2) shape_error("coords need 2 columns");
  const int B = histories.rows;
  const int M = coords.rows;
  const auto& ps = model.params;

  EvalCache<T> local;
  EvalCache<T>& c = cache ? *cache : local;

  // trunk input normalization
  c.coords_n.resize(M, 2);
  for (int a = 0; a < 2; ++a) {
    const double lo = model.tf.coord_lo[a], hi = model.tf.coord_hi[a];
    const double span = hi - lo;
    for (int i = 0; i < M; ++i)
      c.coords_n(i, a) = span > 0 ? static_cast<T>(2.0 * (coords(i, a) - lo) / span - 1.0) : T(0);
  }

  // trunk MLP (tanh output, the DeepXDE convention)
  c.trunk_acts.assign(model.trunk_dense.size() + 1, Mat<T>());
  c.trunk_acts[0] = c.coords_n;
  for (std::size_t k = 0; k < model.trunk_dense.size(); ++k) {
    const auto& W = ps[model.trunk_dense[k][0]];
    const auto& b = ps[model.trunk_dense[k][1]];
    Mat<T> Wm;
    Wm.rows = W.rows;
    Wm.cols = W.cols;
    Wm.d = W.w;
    nn::dense_forward(Wm, b.w, c.trunk_acts[k], Act::tanh_, c.trunk_acts[k + 1]);
  }
  c.trunk_out = c.trunk_acts.back();

  // branch input standardization
  const double mean = model.tf.hist_mean, sd = model.tf.hist_std;
  if (cfg.variant == Variant::fnn) {
    c.branch_in.resize(B, cfg.seq_len);
    for (std::size_t i = 0; i < c.branch_in.size(); ++i)
      c.branch_in.d[i] = static_cast<T>((histories.d[i] - mean) / sd);
    c.branch_acts.assign(model.branch_dense.size() + 1, Mat<T>());
    c.branch_acts[0] = c.branch_in;
    for (std::size_t k = 0; k < model.branch_dense.size(); ++k) {
      const auto& W = ps[model.branch_dense[k][0]];
      const auto& b = ps[model.branch_dense[k][1]];
      Mat<T> Wm;
      Wm.rows = W.rows;
      Wm.cols = W.cols;
      Wm.d = W.w;
      const Act act = (k + 1 == model.branch_dense.size()) ? Act::identity : Act::tanh_;
      nn::dense_forward(Wm, b.w, c.branch_acts[k], act, c.branch_acts[k + 1]);
    }
    c.branch_out = c.branch_acts.back();
  } else {
    // time-major [T*B x 1]
    c.branch_in.resize(cfg.seq_len * B, 1);
    for (int t = 0; t < cfg.seq_len; ++t)
      for (int i = 0; i < B; ++i)
        c.branch_in(t * B + i, 0) = static_cast<T>((histories(i, t) - mean) / sd);
    c.rnn.assign(model.branch_rnn.size(), nn::RnnCache<T>());
    const Mat<T>* x = &c.branch_in;
    for (std::size_t k = 0; k < model.branch_rnn.size(); ++k) {
      const auto& Wx = ps[model.branch_rnn[k][0]];
      const auto& Wh = ps[model.branch_rnn[k][1]];
      const auto& b = ps[model.branch_rnn[k][2]];
      Mat<T> Wxm, Whm;
      Wxm.rows = Wx.rows;
      Wxm.cols = Wx.cols;
      Wxm.d = Wx.w;
      Whm.rows = Wh.rows;
      Whm.cols = Wh.cols;
      Whm.d = Wh.w;
      if (cfg.variant == Variant::lstm)
        nn::lstm_forward(Wxm, Whm, b.w, *x, cfg.seq_len, B, c.rnn[k]);
      else
        nn::gru_forward(Wxm, Whm, b.w, *x, cfg.seq_len, B, c.rnn[k]);
      x = &c.rnn[k].H;
    }
    // final layer returns no sequence: keep the last time step only
    const auto& H = c.rnn.back().H;
    c.branch_out.resize(B, cfg.hd);
    std::memcpy(c.branch_out.data(), H.row((cfg.seq_len - 1) * B),
                sizeof(T) * static_cast<std::size_t>(B) * cfg.hd);
  }

  fuse_forward(c.branch_out, c.trunk_out, ps[model.beta].w[0], out);
}

template <typename T>
void backward(const DeepONetModel<T>& model, const EvalCache<T>& cache, const Mat<T>& d_out,
              nn::GradStore<T>& grads) {
  const auto& cfg = model.cfg;
  const auto& ps = model.params;
  const int B = cache.branch_out.rows;
  grads.init_like(ps);

  Mat<T> d_branch, d_trunk;
  T dbeta;
  fuse_backward(cache.branch_out, cache.trunk_out, d_out, d_branch, d_trunk, dbeta);
  grads.g[model.beta][0] = dbeta;

  const auto entry_mat = [&](int idx) {
    Mat<T> m;
    m.rows = ps[idx].rows;
    m.cols = ps[idx].cols;
    m.d = ps[idx].w;
    return m;
  };
  const auto mlp_backward = [&](const std::vector<std::array<int, 2>>& layers,
                                const std::vector<Mat<T>>& acts, Act last_act, Mat<T> dY) {
    for (int k = static_cast<int>(layers.size()) - 1; k >= 0; --k) {
      const Act act = (k + 1 == static_cast<int>(layers.size())) ? last_act : Act::tanh_;
      Mat<T> W = entry_mat(layers[k][0]);
      Mat<T> dW, dX;
      std::vector<T> db;
      nn::dense_backward(W, acts[k], acts[k + 1], act, dY, dW, db, dX);
      grads.g[layers[k][0]] = std::move(dW.d);
      grads.g[layers[k][1]] = std::move(db);
      dY = std::move(dX);
    }
  };

  mlp_backward(model.trunk_dense, cache.trunk_acts, Act::tanh_, std::move(d_trunk));

  if (cfg.variant == Variant::fnn) {
    mlp_backward(model.branch_dense, cache.branch_acts, Act::identity, std::move(d_branch));
  } else {
    // seed the last-step rows of the final recurrent layer
    Mat<T> dH(cfg.seq_len * B, cfg.hd);
    std::memcpy(dH.row((cfg.seq_len - 1) * B), d_branch.data(),
                sizeof(T) * static_cast<std::size_t>(B) * cfg.hd);
    for (int k = static_cast<int>(model.branch_rnn.size()) - 1; k >= 0; --k) {
      const Mat<T> Wx = entry_mat(model.branch_rnn[k][0]);
      const Mat<T> Wh = entry_mat(model.branch_rnn[k][1]);
      const Mat<T>& xseq = (k == 0) ? cache.branch_in : cache.rnn[k - 1].H;
      Mat<T> dWx, dWh, dX;
      std::vector<T> db;
      Mat<T>* dx_ptr = k > 0 ? &dX : nullptr;
      if (cfg.variant == Variant::lstm)
        nn::lstm_backward(Wx, Wh, xseq, cache.rnn[k], dH, dWx, dWh, db, dx_ptr);
      else
        nn::gru_backward(Wx, Wh, xseq, cache.rnn[k], dH, dWx, dWh, db, dx_ptr);
      grads.g[model.branch_rnn[k][0]] = std::move(dWx.d);
      grads.g[model.branch_rnn[k][1]] = std::move(dWh.d);
      grads.g[model.branch_rnn[k][2]] = std::move(db);
      if (k > 0) dH = std::move(dX);
    }
  }
}

template <typename T>
Mat<T> predict_field(const DeepONetModel<T>& model, const Mat<T>& histories, const Mat<T>& coords) {
  Mat<T> out;
  forward(model, histories, coords, out);
  for (auto& x : out.d) x = static_cast<T>(model.tf.field.unscale(static_cast<double>(x)));
  return out;
}

template <typename T>
std::size_t count_params(const DeepONetModel<T>& model) {
  return model.params.param_count();
}

template <typename T>
std::size_t network_param_count(const DeepONetModel<T>& model) {
  return model.params.param_count() - model.params[model.beta].size();
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_model(const DeepONetModel<float>& model, const std::string& dir,
                const std::string& extra_json) {
  fs::create_directories(dir);
  json j;
  j["format_version"] = 1;
  j["variant"] = variant_name(model.cfg.variant);
  j["hd"] = model.cfg.hd;
  j["seq_len"] = model.cfg.seq_len;
  j["branch_widths"] = model.cfg.branch_widths;
  j["trunk_widths"] = model.cfg.trunk_widths;
  j["rnn_hidden"] = model.cfg.rnn_hidden;
  j["transforms"] = {{"coord_lo", model.tf.coord_lo}, {"coord_hi", model.tf.coord_hi},
                     {"hist_mean", model.tf.hist_mean}, {"hist_std", model.tf.hist_std},
                     {"field_lo", model.tf.field.lo},   {"field_hi", model.tf.field.hi}};
  j["meta"] = json::parse(extra_json);
  std::ofstream f(fs::path(dir) / "model.json");
  if (!f) throw std::runtime_error("cannot write model.json in " + dir);
  f << j.dump(2) << "\n";
  nn::save_params(model.params, (fs::path(dir) / "params.json").string(),
                  (fs::path(dir) / "params.bin").string());
}

DeepONetModel<float> load_model(const std::string& dir, std::string* meta_json) {
  std::ifstream f(fs::path(dir) / "model.json");
  if (!f) throw std::runtime_error("cannot read model.json in " + dir);
  json j = json::parse(f);
  DeepONetConfig cfg;
  cfg.variant = variant_from(j.at("variant").get<std::string>());
  cfg.hd = j.at("hd").get<int>();
  cfg.seq_len = j.at("seq_len").get<int>();
  cfg.branch_widths = j.at("branch_widths").get<std::vector<int>>();
  cfg.trunk_widths = j.at("trunk_widths").get<std::vector<int>>();
  cfg.rnn_hidden = j.at("rnn_hidden").get<std::vector<int>>();

  DeepONetModel<float> model = build_model<float>(cfg, 0);
  model.params = nn::load_params((fs::path(dir) / "params.json").string(),
                                 (fs::path(dir) / "params.bin").string());
  const auto& t = j.at("transforms");
  model.tf.coord_lo = t.at("coord_lo").get<std::array<double, 2>>();
  model.tf.coord_hi = t.at("coord_hi").get<std::array<double, 2>>();
  model.tf.hist_mean = t.at("hist_mean").get<double>();
  model.tf.hist_std = t.at("hist_std").get<double>();
  model.tf.field.lo = t.at("field_lo").get<double>();
  model.tf.field.hi = t.at("field_hi").get<double>();
  if (meta_json) *meta_json = j.at("meta").dump();
  return model;
}

// ---------------------------------------------------------------------------

#define SEQOP_DON_INSTANTIATE(T)                                                                \
  template DeepONetModel<T> build_model<T>(const DeepONetConfig&, std::uint64_t);               \
  template void fuse_forward<T>(const Mat<T>&, const Mat<T>&, T, Mat<T>&);                      \
  template void fuse_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&, Mat<T>&, \
                                 T&);                                                          \
  template void forward<T>(const DeepONetModel<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&,     \
                           EvalCache<T>*);                                                     \
  template void backward<T>(const DeepONetModel<T>&, const EvalCache<T>&, const Mat<T>&,       \
                            nn::GradStore<T>&);                                                \
  template Mat<T> predict_field<T>(const DeepONetModel<T>&, const Mat<T>&, const Mat<T>&);     \
  template std::size_t count_params<T>(const DeepONetModel<T>&);                               \
  template std::size_t network_param_count<T>(const DeepONetModel<T>&);

SEQOP_DON_INSTANTIATE(float)
SEQOP_DON_INSTANTIATE(double)

}  // namespace seqop
