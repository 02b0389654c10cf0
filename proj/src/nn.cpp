#include "seqop/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace seqop::nn {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

namespace {

// tanh via exp keeps the float path auto-vectorizable (libmvec expf); the
// formula is exact up to rounding, so 1 - y^2 is the true derivative.
inline float tanh_ew(float x) {
  x = x < -20.f ? -20.f : (x > 20.f ? 20.f : x);
  const float e = std::exp(2.f * x);
  return (e - 1.f) / (e + 1.f);
}
inline double tanh_ew(double x) { return std::tanh(x); }

inline float sigmoid_ew(float x) {
  x = x < -30.f ? -30.f : (x > 30.f ? 30.f : x);
  return 1.f / (1.f + std::exp(-x));
}
inline double sigmoid_ew(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename T>
void add_bias_rows(Mat<T>& Y, const std::vector<T>& b) {
  if (static_cast<int>(b.size()) != Y.cols)
    shape_error("bias length " + std::to_string(b.size()) + " vs cols " + std::to_string(Y.cols));
  const std::int64_t rows = Y.rows, cols = Y.cols;
#pragma omp parallel for if (rows * cols > 16384)
  for (std::int64_t i = 0; i < rows; ++i) {
    T* y = Y.row(static_cast<int>(i));
    for (std::int64_t j = 0; j < cols; ++j) y[j] += b[j];
  }
}

template <typename T>
void colsum(const Mat<T>& A, std::vector<T>& out) {
  out.assign(A.cols, T(0));
  for (int i = 0; i < A.rows; ++i) {
    const T* a = A.row(i);
    for (int j = 0; j < A.cols; ++j) out[j] += a[j];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

template <typename T>
int ParamStore<T>::add(const std::string& name, int rows, int cols) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter name: " + name);
  ParamEntry<T> e;
  e.name = name;
  e.rows = rows;
  e.cols = cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  e.w.assign(n, T(0));
  e.m.assign(n, T(0));
  e.v.assign(n, T(0));
  entries.push_back(std::move(e));
  return static_cast<int>(entries.size()) - 1;
}

template <typename T>
int ParamStore<T>::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

template <typename T>
std::size_t ParamStore<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.size();
  return n;
}

template <typename T>
void GradStore<T>::init_like(const ParamStore<T>& s) {
  g.resize(s.entries.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i].assign(s.entries[i].size(), T(0));
}

template <typename T>
void GradStore<T>::zero() {
  for (auto& v : g) std::fill(v.begin(), v.end(), T(0));
}

template <typename T>
void adam_update(ParamStore<T>& store, const GradStore<T>& grads, T lr, T beta1, T beta2, T eps) {
  if (grads.g.size() != store.entries.size())
    shape_error("adam: " + std::to_string(grads.g.size()) + " gradient slots vs " +
                std::to_string(store.entries.size()) + " parameters");
  for (std::size_t k = 0; k < store.entries.size(); ++k) {
    const auto& e = store.entries[k];
    if (grads.g[k].size() != e.size())
      shape_error("adam gradient size for " + e.name);
    if (!all_finite(grads.g[k].data(), grads.g[k].size()))
      throw std::runtime_error("non-finite gradient for parameter " + e.name);
  }
  store.step += 1;
  const T c1 = T(1) / T(1 - std::pow(static_cast<double>(beta1), static_cast<double>(store.step)));
  const T c2 = T(1) / T(1 - std::pow(static_cast<double>(beta2), static_cast<double>(store.step)));
  for (std::size_t k = 0; k < store.entries.size(); ++k) {
    auto& e = store.entries[k];
    const T* g = grads.g[k].data();
    const std::int64_t n = static_cast<std::int64_t>(e.size());
    T* w = e.w.data();
    T* m = e.m.data();
    T* v = e.v.data();
#pragma omp parallel for if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
      v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
  }
}

void FieldScaler::validate() const {
  if (!(hi > lo)) throw std::invalid_argument("field scaler requires hi > lo");
}

template <typename T>
double scaled_mse(const Mat<T>& pred, const Mat<T>& target, const FieldScaler& s) {
  s.validate();
  if (pred.rows != target.rows || pred.cols != target.cols)
    shape_error("scaled_mse pred vs target");
  const double inv = 1.0 / (s.hi - s.lo);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = (static_cast<double>(pred.d[i]) - static_cast<double>(target.d[i])) * inv;
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

template <typename T>
double scaled_mse_backward(const Mat<T>& pred, const Mat<T>& target, const FieldScaler& s,
                           Mat<T>& dpred) {
  const double loss = scaled_mse(pred, target, s);
  dpred.resize(pred.rows, pred.cols);
  const double c = 2.0 / (static_cast<double>(pred.size()) * (s.hi - s.lo) * (s.hi - s.lo));
  for (std::size_t i = 0; i < pred.size(); ++i)
    dpred.d[i] = static_cast<T>(c * (static_cast<double>(pred.d[i]) - static_cast<double>(target.d[i])));
  return loss;
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

template <typename T>
void dense_forward(const Mat<T>& W, const std::vector<T>& b, const Mat<T>& X, Act act, Mat<T>& Y) {
  if (X.cols != W.rows)
    shape_error("dense X[" + std::to_string(X.rows) + "x" + std::to_string(X.cols) + "] * W[" +
                std::to_string(W.rows) + "x" + std::to_string(W.cols) + "]");
  Y.resize(X.rows, W.cols);
  gemm<T>(false, false, T(1), X, W, T(0), Y);
  add_bias_rows(Y, b);
  if (act == Act::tanh_) {
    const std::int64_t n = static_cast<std::int64_t>(Y.size());
    T* y = Y.data();
#pragma omp parallel for if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) y[i] = tanh_ew(y[i]);
  }
}

template <typename T>
void dense_backward(const Mat<T>& W, const Mat<T>& X, const Mat<T>& Y, Act act, const Mat<T>& dY,
                    Mat<T>& dW, std::vector<T>& db, Mat<T>& dX) {
  if (dY.rows != Y.rows || dY.cols != Y.cols) shape_error("dense dY vs Y");
  Mat<T> dP(dY.rows, dY.cols);
  if (act == Act::tanh_) {
    const std::int64_t n = static_cast<std::int64_t>(dP.size());
#pragma omp parallel for if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) dP.d[i] = dY.d[i] * (T(1) - Y.d[i] * Y.d[i]);
  } else {
    dP.d = dY.d;
  }
  dW.resize(W.rows, W.cols);
  gemm<T>(true, false, T(1), X, dP, T(0), dW);
  colsum(dP, db);
  dX.resize(X.rows, X.cols);
  gemm<T>(false, true, T(1), dP, W, T(0), dX);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

template <typename T>
void lstm_forward(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& Xseq,
                  int t_len, int batch, RnnCache<T>& cache) {
  const int in = Wx.rows;
  const int h = Wh.rows;
  if (Wx.cols != 4 * h || Wh.cols != 4 * h || static_cast<int>(b.size()) != 4 * h)
    shape_error("lstm weight shapes");
  if (Xseq.rows != t_len * batch || Xseq.cols != in) shape_error("lstm input sequence");

  cache.t_len = t_len;
  cache.batch = batch;
  cache.in = in;
  cache.h = h;
  cache.G.resize(t_len * batch, 4 * h);
  cache.H.resize(t_len * batch, h);
  cache.C.resize(t_len * batch, h);
  cache.Ct.resize(t_len * batch, h);

  // input projection for all time steps in one GEMM
  gemm<T>(false, false, T(1), Xseq, Wx, T(0), cache.G);
  add_bias_rows(cache.G, b);

  for (int t = 0; t < t_len; ++t) {
    const int r0 = t * batch;
    if (t > 0) {
      gemm_raw<T>(false, false, batch, 4 * h, h, T(1), cache.H.row(r0 - batch), h, Wh.data(),
                  4 * h, T(1), cache.G.row(r0), 4 * h);
    }
    const T* cprev0 = t > 0 ? cache.C.row(r0 - batch) : nullptr;
#pragma omp parallel for if (batch * h > 8192)
    for (int r = 0; r < batch; ++r) {
      T* g = cache.G.row(r0 + r);
      T* c = cache.C.row(r0 + r);
      T* ct = cache.Ct.row(r0 + r);
      T* hh = cache.H.row(r0 + r);
      const T* cp = cprev0 ? cprev0 + static_cast<std::size_t>(r) * h : nullptr;
      for (int j = 0; j < h; ++j) {
        const T gi = sigmoid_ew(g[j]);
        const T gf = sigmoid_ew(g[h + j]);
        const T gg = tanh_ew(g[2 * h + j]);
        const T go = sigmoid_ew(g[3 * h + j]);
        g[j] = gi;
        g[h + j] = gf;
        g[2 * h + j] = gg;
        g[3 * h + j] = go;
        const T cpj = cp ? cp[j] : T(0);
        c[j] = gf * cpj + gi * gg;
        ct[j] = tanh_ew(c[j]);
        hh[j] = go * ct[j];
      }
    }
  }
}

template <typename T>
void lstm_backward(const Mat<T>& Wx, const Mat<T>& Wh, const Mat<T>& Xseq,
                   const RnnCache<T>& cache, const Mat<T>& dH, Mat<T>& dWx, Mat<T>& dWh,
                   std::vector<T>& db, Mat<T>* dX) {
  const int t_len = cache.t_len, batch = cache.batch, h = cache.h;
  if (dH.rows != t_len * batch || dH.cols != h) shape_error("lstm dH");

  Mat<T> dG(t_len * batch, 4 * h);
  Mat<T> dh_carry(batch, h), dc_carry(batch, h);

  for (int t = t_len - 1; t >= 0; --t) {
    const int r0 = t * batch;
    const T* cprev0 = t > 0 ? cache.C.row(r0 - batch) : nullptr;
#pragma omp parallel for if (batch * h > 8192)
    for (int r = 0; r < batch; ++r) {
      const T* g = cache.G.row(r0 + r);
      const T* c = cache.C.row(r0 + r);
      const T* ct = cache.Ct.row(r0 + r);
      const T* dhin = dH.row(r0 + r);
      const T* cp = cprev0 ? cprev0 + static_cast<std::size_t>(r) * h : nullptr;
      T* dhc = dh_carry.row(r);
      T* dcc = dc_carry.row(r);
      T* dg = dG.row(r0 + r);
      for (int j = 0; j < h; ++j) {
        const T gi = g[j], gf = g[h + j], gg = g[2 * h + j], go = g[3 * h + j];
        const T dh = dhin[j] + dhc[j];
        const T dout = dh * ct[j];
        const T dc = dh * go * (T(1) - ct[j] * ct[j]) + dcc[j];
        const T cpj = cp ? cp[j] : T(0);
        dg[j] = dc * gg * gi * (T(1) - gi);
        dg[h + j] = dc * cpj * gf * (T(1) - gf);
        dg[2 * h + j] = dc * gi * (T(1) - gg * gg);
        dg[3 * h + j] = dout * go * (T(1) - go);
        dcc[j] = dc * gf;
        dhc[j] = T(0);  // filled by the GEMM below
      }
    }
    gemm_raw<T>(false, true, batch, h, 4 * h, T(1), dG.row(r0), 4 * h, Wh.data(), 4 * h, T(0),
                dh_carry.data(), h);
  }

  dWx.resize(Wx.rows, Wx.cols);
  gemm<T>(true, false, T(1), Xseq, dG, T(0), dWx);
  // dWh = sum_t H_{t-1}^T dG_t: with time-major rows this is one strided GEMM.
  dWh.resize(Wh.rows, Wh.cols);
  dWh.zero();
  if (t_len > 1) {
    gemm_raw<T>(true, false, h, 4 * h, (t_len - 1) * batch, T(1), cache.H.data(), h,
                dG.row(batch), 4 * h, T(0), dWh.data(), 4 * h);
  }
  colsum(dG, db);
  if (dX) {
    dX->resize(Xseq.rows, Xseq.cols);
    gemm<T>(false, true, T(1), dG, Wx, T(0), *dX);
  }
}

// ---------------------------------------------------------------------------
// GRU (single bias set; candidate uses r .* h_prev)
// ---------------------------------------------------------------------------

template <typename T>
void gru_forward(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& Xseq,
                 int t_len, int batch, RnnCache<T>& cache) {
  const int in = Wx.rows;
  const int h = Wh.rows;
  if (Wx.cols != 3 * h || Wh.cols != 3 * h || static_cast<int>(b.size()) != 3 * h)
    shape_error("gru weight shapes");
  if (Xseq.rows != t_len * batch || Xseq.cols != in) shape_error("gru input sequence");

  cache.t_len = t_len;
  cache.batch = batch;
  cache.in = in;
  cache.h = h;
  cache.G.resize(t_len * batch, 3 * h);
  cache.H.resize(t_len * batch, h);
  cache.Hr.resize(t_len * batch, h);

  gemm<T>(false, false, T(1), Xseq, Wx, T(0), cache.G);
  add_bias_rows(cache.G, b);

  for (int t = 0; t < t_len; ++t) {
    const int r0 = t * batch;
    const T* hprev0 = t > 0 ? cache.H.row(r0 - batch) : nullptr;
    if (t > 0) {
      gemm_raw<T>(false, false, batch, 2 * h, h, T(1), hprev0, h, Wh.data(), 3 * h, T(1),
                  cache.G.row(r0), 3 * h);
    }
#pragma omp parallel for if (batch * h > 8192)
    for (int r = 0; r < batch; ++r) {
      T* g = cache.G.row(r0 + r);
      T* hr = cache.Hr.row(r0 + r);
      const T* hp = hprev0 ? hprev0 + static_cast<std::size_t>(r) * h : nullptr;
      for (int j = 0; j < h; ++j) {
        g[j] = sigmoid_ew(g[j]);          // z
        g[h + j] = sigmoid_ew(g[h + j]);  // r
        hr[j] = hp ? g[h + j] * hp[j] : T(0);
      }
    }
    gemm_raw<T>(false, false, batch, h, h, T(1), cache.Hr.row(r0), h, Wh.data() + 2 * h, 3 * h,
                T(1), cache.G.row(r0) + 2 * h, 3 * h);
#pragma omp parallel for if (batch * h > 8192)
    for (int r = 0; r < batch; ++r) {
      T* g = cache.G.row(r0 + r);
      T* hh = cache.H.row(r0 + r);
      const T* hp = hprev0 ? hprev0 + static_cast<std::size_t>(r) * h : nullptr;
      for (int j = 0; j < h; ++j) {
        const T n = tanh_ew(g[2 * h + j]);
        g[2 * h + j] = n;
        const T z = g[j];
        hh[j] = hp ? z * hp[j] + (T(1) - z) * n : (T(1) - z) * n;
      }
    }
  }
}

template <typename T>
void gru_backward(const Mat<T>& Wx, const Mat<T>& Wh, const Mat<T>& Xseq, const RnnCache<T>& cache,
                  const Mat<T>& dH, Mat<T>& dWx, Mat<T>& dWh, std::vector<T>& db, Mat<T>* dX) {
  const int t_len = cache.t_len, batch = cache.batch, h = cache.h;
  if (dH.rows != t_len * batch || dH.cols != h) shape_error("gru dH");

  Mat<T> dG(t_len * batch, 3 * h);
  Mat<T> dh_carry(batch, h), dHr(batch, h);

  for (int t = t_len - 1; t >= 0; --t) {
    const int r0 = t * batch;
    const T* hprev0 = t > 0 ? cache.H.row(r0 - batch) : nullptr;
    // candidate-gate pre-activation gradient first; it feeds dHr
#pragma omp parallel for if (batch * h > 8192)
    for (int r = 0; r < batch; ++r) {
      const T* g = cache.G.row(r0 + r);
      const T* dhin = dH.row(r0 + r);
      const T* hp = hprev0 ? hprev0 + static_cast<std::size_t>(r) * h : nullptr;
      T* dhc = dh_carry.row(r);
      T* dg = dG.row(r0 + r);
      for (int j = 0; j < h; ++j) {
        const T z = g[j], n = g[2 * h + j];
        const T dh = dhin[j] + dhc[j];
        const T hpj = hp ? hp[j] : T(0);
        const T dz = dh * (hpj - n);
        const T dn = dh * (T(1) - z);
        dg[j] = dz * z * (T(1) - z);
        dg[2 * h + j] = dn * (T(1) - n * n);
        dhc[j] = dh * z;  // partial dh_prev; GEMM contributions added below
      }
    }
    gemm_raw<T>(false, true, batch, h, h, T(1), dG.row(r0) + 2 * h, 3 * h, Wh.data() + 2 * h,
                3 * h, T(0), dHr.data(), h);
#pragma omp parallel for if (batch * h > 8192)
    for (int r = 0; r < batch; ++r) {
      const T* g = cache.G.row(r0 + r);
      const T* hp = hprev0 ? hprev0 + static_cast<std::size_t>(r) * h : nullptr;
      const T* dhr = dHr.row(r);
      T* dhc = dh_carry.row(r);
      T* dg = dG.row(r0 + r);
      for (int j = 0; j < h; ++j) {
        const T rr = g[h + j];
        const T hpj = hp ? hp[j] : T(0);
        const T dr = dhr[j] * hpj;
        dg[h + j] = dr * rr * (T(1) - rr);
        dhc[j] += dhr[j] * rr;
      }
    }
    gemm_raw<T>(false, true, batch, h, 2 * h, T(1), dG.row(r0), 3 * h, Wh.data(), 3 * h, T(1),
                dh_carry.data(), h);
  }

  dWx.resize(Wx.rows, Wx.cols);
  gemm<T>(true, false, T(1), Xseq, dG, T(0), dWx);
  dWh.resize(Wh.rows, Wh.cols);
  dWh.zero();
  if (t_len > 1) {
    gemm_raw<T>(true, false, h, 2 * h, (t_len - 1) * batch, T(1), cache.H.data(), h,
                dG.row(batch), 3 * h, T(0), dWh.data(), 3 * h);
  }
  gemm_raw<T>(true, false, h, h, t_len * batch, T(1), cache.Hr.data(), h, dG.data() + 2 * h, 3 * h,
              T(0), dWh.data() + 2 * h, 3 * h);
  colsum(dG, db);
  if (dX) {
    dX->resize(Xseq.rows, Xseq.cols);
    gemm<T>(false, true, T(1), dG, Wx, T(0), *dX);
  }
}

// ---------------------------------------------------------------------------
// single-step and sequence wrappers
// ---------------------------------------------------------------------------

template <typename T>
void lstm_step(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& x_t,
               const Mat<T>& h_prev, const Mat<T>& c_prev, Mat<T>& h_t, Mat<T>& c_t) {
  const int h = Wh.rows;
  const int batch = x_t.rows;
  if (h_prev.rows != batch || h_prev.cols != h || c_prev.rows != batch || c_prev.cols != h)
    shape_error("lstm_step state shapes");
  Mat<T> G(batch, 4 * h);
  gemm<T>(false, false, T(1), x_t, Wx, T(0), G);
  add_bias_rows(G, b);
  gemm<T>(false, false, T(1), h_prev, Wh, T(1), G);
  h_t.resize(batch, h);
  c_t.resize(batch, h);
  for (int r = 0; r < batch; ++r) {
    const T* g = G.row(r);
    for (int j = 0; j < h; ++j) {
      const T gi = sigmoid_ew(g[j]);
      const T gf = sigmoid_ew(g[h + j]);
      const T gg = tanh_ew(g[2 * h + j]);
      const T go = sigmoid_ew(g[3 * h + j]);
      c_t(r, j) = gf * c_prev(r, j) + gi * gg;
      h_t(r, j) = go * tanh_ew(c_t(r, j));
    }
  }
}

template <typename T>
void gru_step(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& x_t,
              const Mat<T>& h_prev, Mat<T>& h_t) {
  const int h = Wh.rows;
  const int batch = x_t.rows;
  if (h_prev.rows != batch || h_prev.cols != h) shape_error("gru_step state shapes");
  Mat<T> G(batch, 3 * h);
  gemm<T>(false, false, T(1), x_t, Wx, T(0), G);
  add_bias_rows(G, b);
  gemm_raw<T>(false, false, batch, 2 * h, h, T(1), h_prev.data(), h, Wh.data(), 3 * h, T(1),
              G.data(), 3 * h);
  h_t.resize(batch, h);
  Mat<T> hr(batch, h);
  for (int r = 0; r < batch; ++r) {
    T* g = G.row(r);
    for (int j = 0; j < h; ++j) {
      g[j] = sigmoid_ew(g[j]);
      g[h + j] = sigmoid_ew(g[h + j]);
      hr(r, j) = g[h + j] * h_prev(r, j);
    }
  }
  gemm_raw<T>(false, false, batch, h, h, T(1), hr.data(), h, Wh.data() + 2 * h, 3 * h, T(1),
              G.data() + 2 * h, 3 * h);
  for (int r = 0; r < batch; ++r) {
    const T* g = G.row(r);
    for (int j = 0; j < h; ++j) {
      const T n = tanh_ew(g[2 * h + j]);
      const T z = g[j];
      h_t(r, j) = z * h_prev(r, j) + (T(1) - z) * n;
    }
  }
}

template <typename T>
Mat<T> run_sequence(Cell cell, const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b,
                    const Mat<T>& X, bool return_sequence) {
  if (X.rows < 1) shape_error("run_sequence needs at least one time step");
  const int t_len = X.rows;
  RnnCache<T> cache;
  if (cell == Cell::lstm)
    lstm_forward(Wx, Wh, b, X, t_len, 1, cache);
  else
    gru_forward(Wx, Wh, b, X, t_len, 1, cache);
  if (return_sequence) return cache.H;
  Mat<T> last(1, cache.h);
  std::memcpy(last.data(), cache.H.row(t_len - 1), sizeof(T) * cache.h);
  return last;
}

// ---------------------------------------------------------------------------

template <typename T>
void glorot_fill(std::vector<T>& w, int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / (static_cast<double>(rows) + cols));
  for (auto& x : w) x = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void glorot_fill(Mat<T>& W, Rng& rng) {
  glorot_fill(W.d, W.rows, W.cols, rng);
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

void save_params(const ParamStore<float>& store, const std::string& json_path,
                 const std::string& blob_path) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native != std::endian::little)
    throw std::runtime_error("param blob format requires a little-endian host");

  json manifest;
  manifest["format_version"] = 1;
  manifest["dtype"] = "float32";
  manifest["step"] = store.step;
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& e : store.entries) {
    json je;
    je["name"] = e.name;
    je["shape"] = {e.rows, e.cols};
    je["dtype"] = "float32";
    je["offset_values"] = offset;
    offset += e.size() * 4;
    je["offset_m"] = offset;
    offset += e.size() * 4;
    je["offset_v"] = offset;
    offset += e.size() * 4;
    je["opt_state"] = true;
    entries.push_back(je);
  }
  manifest["entries"] = entries;
  manifest["blob_bytes"] = offset;

  std::ofstream jf(json_path);
  if (!jf) throw std::runtime_error("cannot write " + json_path);
  jf << manifest.dump(2) << "\n";

  std::ofstream bf(blob_path, std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write " + blob_path);
  for (const auto& e : store.entries) {
    bf.write(reinterpret_cast<const char*>(e.w.data()), static_cast<std::streamsize>(e.size() * 4));
    bf.write(reinterpret_cast<const char*>(e.m.data()), static_cast<std::streamsize>(e.size() * 4));
    bf.write(reinterpret_cast<const char*>(e.v.data()), static_cast<std::streamsize>(e.size() * 4));
  }
}

ParamStore<float> load_params(const std::string& json_path, const std::string& blob_path) {
  if constexpr (std::endian::native != std::endian::little)
    throw std::runtime_error("param blob format requires a little-endian host");
  std::ifstream jf(json_path);
  if (!jf) throw std::runtime_error("cannot read " + json_path);
  json manifest = json::parse(jf);
  if (manifest.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported param manifest version");

  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw std::runtime_error("cannot read " + blob_path);
  std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  if (blob.size() != manifest.at("blob_bytes").get<std::size_t>())
    throw std::runtime_error("param blob size mismatch for " + blob_path);

  ParamStore<float> store;
  store.step = manifest.at("step").get<std::int64_t>();
  for (const auto& je : manifest.at("entries")) {
    const auto shape = je.at("shape");
    const int idx = store.add(je.at("name").get<std::string>(), shape[0].get<int>(),
                              shape[1].get<int>());
    auto& e = store.entries[idx];
    const auto nbytes = e.size() * 4;
    const auto need = [&](std::size_t off) {
      if (off + nbytes > blob.size()) throw std::runtime_error("param blob offset out of range");
      return blob.data() + off;
    };
    std::memcpy(e.w.data(), need(je.at("offset_values").get<std::size_t>()), nbytes);
    if (je.value("opt_state", false)) {
      std::memcpy(e.m.data(), need(je.at("offset_m").get<std::size_t>()), nbytes);
      std::memcpy(e.v.data(), need(je.at("offset_v").get<std::size_t>()), nbytes);
    }
  }
  return store;
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

#define SEQOP_NN_INSTANTIATE(T)                                                                  \
  template struct ParamStore<T>;                                                                 \
  template struct GradStore<T>;                                                                  \
  template void adam_update<T>(ParamStore<T>&, const GradStore<T>&, T, T, T, T);                 \
  template double scaled_mse<T>(const Mat<T>&, const Mat<T>&, const FieldScaler&);               \
  template double scaled_mse_backward<T>(const Mat<T>&, const Mat<T>&, const FieldScaler&,       \
                                         Mat<T>&);                                              \
  template void dense_forward<T>(const Mat<T>&, const std::vector<T>&, const Mat<T>&, Act,       \
                                 Mat<T>&);                                                      \
  template void dense_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, Act,              \
                                  const Mat<T>&, Mat<T>&, std::vector<T>&, Mat<T>&);            \
  template void lstm_forward<T>(const Mat<T>&, const Mat<T>&, const std::vector<T>&,             \
                                const Mat<T>&, int, int, RnnCache<T>&);                         \
  template void lstm_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,                    \
                                 const RnnCache<T>&, const Mat<T>&, Mat<T>&, Mat<T>&,           \
                                 std::vector<T>&, Mat<T>*);                                     \
  template void gru_forward<T>(const Mat<T>&, const Mat<T>&, const std::vector<T>&,              \
                               const Mat<T>&, int, int, RnnCache<T>&);                          \
  template void gru_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, const RnnCache<T>&, \
                                const Mat<T>&, Mat<T>&, Mat<T>&, std::vector<T>&, Mat<T>*);     \
  template void lstm_step<T>(const Mat<T>&, const Mat<T>&, const std::vector<T>&, const Mat<T>&, \
                             const Mat<T>&, const Mat<T>&, Mat<T>&, Mat<T>&);                   \
  template void gru_step<T>(const Mat<T>&, const Mat<T>&, const std::vector<T>&, const Mat<T>&,  \
                            const Mat<T>&, Mat<T>&);                                            \
  template Mat<T> run_sequence<T>(Cell, const Mat<T>&, const Mat<T>&, const std::vector<T>&,     \
                                  const Mat<T>&, bool);                                         \
  template void glorot_fill<T>(Mat<T>&, Rng&);                                                   \
  template void glorot_fill<T>(std::vector<T>&, int, int, Rng&);

SEQOP_NN_INSTANTIATE(float)
SEQOP_NN_INSTANTIATE(double)

}  // namespace seqop::nn
