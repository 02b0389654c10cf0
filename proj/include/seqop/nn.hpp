#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqop/rng.hpp"
#include "seqop/tensor.hpp"

namespace seqop::nn {

enum class Act { identity, tanh_ };
enum class Cell { lstm, gru };

/// One named parameter tensor with its Adam moment buffers.
template <typename T>
struct ParamEntry {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<T> w, m, v;
  std::size_t size() const { return w.size(); }
};

/// Ordered parameter set of one network. The step counter is shared by all
/// entries and advances once per adam_update call.
template <typename T>
struct ParamStore {
  std::vector<ParamEntry<T>> entries;
  std::int64_t step = 0;

  int add(const std::string& name, int rows, int cols);
  int find(const std::string& name) const;  // -1 if absent
  ParamEntry<T>& operator[](int i) { return entries[i]; }
  const ParamEntry<T>& operator[](int i) const { return entries[i]; }
  std::size_t param_count() const;
};

/// Gradient buffers aligned index-for-index with a ParamStore.
template <typename T>
struct GradStore {
  std::vector<std::vector<T>> g;
  void init_like(const ParamStore<T>& s);
  void zero();
};

/// Bias-corrected Adam. Throws if any gradient is non-finite, naming the
/// offending parameter.
template <typename T>
void adam_update(ParamStore<T>& store, const GradStore<T>& grads, T lr, T beta1 = T(0.9),
                 T beta2 = T(0.999), T eps = T(1e-8));

/// Min-max scaling of target fields, fitted on the training split only.
struct FieldScaler {
  double lo = 0.0;
  double hi = 1.0;
  double scale(double x) const { return (x - lo) / (hi - lo); }
  double unscale(double y) const { return lo + (hi - lo) * y; }
  void validate() const;
};

/// MSE on min-max-scaled values; pred and target are in field units.
template <typename T>
double scaled_mse(const Mat<T>& pred, const Mat<T>& target, const FieldScaler& s);
template <typename T>
double scaled_mse_backward(const Mat<T>& pred, const Mat<T>& target, const FieldScaler& s,
                           Mat<T>& dpred);

// ---------------------------------------------------------------------------
// Dense layer: Y = act(X W + b), X is [B x in], W is [in x out].
// ---------------------------------------------------------------------------

template <typename T>
void dense_forward(const Mat<T>& W, const std::vector<T>& b, const Mat<T>& X, Act act, Mat<T>& Y);

/// Exact gradients given the cached input X and post-activation output Y.
/// dW/db/dX are overwritten.
template <typename T>
void dense_backward(const Mat<T>& W, const Mat<T>& X, const Mat<T>& Y, Act act, const Mat<T>& dY,
                    Mat<T>& dW, std::vector<T>& db, Mat<T>& dX);

// ---------------------------------------------------------------------------
// Recurrent layers. Sequences are time-major: row index t*batch + b.
// LSTM gate order [i | f | g | o]; GRU gate order [z | r | n].
// Wx is [in x gates*h], Wh is [h x gates*h], b has gates*h entries.
// ---------------------------------------------------------------------------

template <typename T>
struct RnnCache {
  int t_len = 0, batch = 0, in = 0, h = 0;
  Mat<T> G;   // gates, post-activation
  Mat<T> H;   // hidden states
  Mat<T> C;   // lstm cell states
  Mat<T> Ct;  // lstm tanh(c)
  Mat<T> Hr;  // gru r .* h_prev
};

template <typename T>
void lstm_forward(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& Xseq,
                  int t_len, int batch, RnnCache<T>& cache);

template <typename T>
void lstm_backward(const Mat<T>& Wx, const Mat<T>& Wh, const Mat<T>& Xseq,
                   const RnnCache<T>& cache, const Mat<T>& dH, Mat<T>& dWx, Mat<T>& dWh,
                   std::vector<T>& db, Mat<T>* dX);

template <typename T>
void gru_forward(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& Xseq,
                 int t_len, int batch, RnnCache<T>& cache);

template <typename T>
void gru_backward(const Mat<T>& Wx, const Mat<T>& Wh, const Mat<T>& Xseq, const RnnCache<T>& cache,
                  const Mat<T>& dH, Mat<T>& dWx, Mat<T>& dWh, std::vector<T>& db, Mat<T>* dX);

/// Single recurrent step for a [B x in] input block.
template <typename T>
void lstm_step(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& x_t,
               const Mat<T>& h_prev, const Mat<T>& c_prev, Mat<T>& h_t, Mat<T>& c_t);

template <typename T>
void gru_step(const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b, const Mat<T>& x_t,
              const Mat<T>& h_prev, Mat<T>& h_t);

/// Unrolls one sequence [T x in] from zero initial state. Returns the full
/// hidden sequence [T x h], or just the final state [1 x h].
template <typename T>
Mat<T> run_sequence(Cell cell, const Mat<T>& Wx, const Mat<T>& Wh, const std::vector<T>& b,
                    const Mat<T>& X, bool return_sequence);

// ---------------------------------------------------------------------------

/// Uniform Glorot fill: +-sqrt(6/(rows+cols)), drawn row-major.
template <typename T>
void glorot_fill(Mat<T>& W, Rng& rng);
template <typename T>
void glorot_fill(std::vector<T>& w, int rows, int cols, Rng& rng);

constexpr std::size_t dense_param_count(int in, int out) {
  return std::size_t(in) * out + out;
}
constexpr std::size_t lstm_param_count(int in, int h) {
  return 4 * (std::size_t(h) * (h + in) + h);
}
constexpr std::size_t gru_param_count(int in, int h) {
  return 3 * (std::size_t(h) * (h + in) + h);
}

/// Checkpoint format: JSON manifest (names, shapes, dtype, byte offsets,
/// optimizer-state flag, step counter) plus one little-endian float32 blob.
/// Round-trips are bit-exact.
void save_params(const ParamStore<float>& store, const std::string& json_path,
                 const std::string& blob_path);
ParamStore<float> load_params(const std::string& json_path, const std::string& blob_path);

}  // namespace seqop::nn
