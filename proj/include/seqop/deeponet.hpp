#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "seqop/nn.hpp"

namespace seqop {

enum class Variant { fnn, lstm, gru };

std::string variant_name(Variant v);
Variant variant_from(const std::string& s);

struct DeepONetConfig {
  Variant variant = Variant::fnn;
  int hd = 100;      // fusion width; 100 for fnn, 101 for the recurrent branches
  int seq_len = 101;
  std::vector<int> branch_widths;  // fnn branch, input width first
  std::vector<int> trunk_widths;   // input width 2 first
  std::vector<int> rnn_hidden;     // recurrent stack before the final HD layer

  /// Paper-quoted widths for each variant.
  static DeepONetConfig paper(Variant v);
  void validate() const;
};

/// Affine input/output maps stored with the model so inference is
/// self-contained: trunk coordinates to [-1,1] per axis, branch magnitudes
/// standardized, fields min-max scaled. All fitted on the training split.
struct InputTransforms {
  std::array<double, 2> coord_lo{0.0, 0.0};
  std::array<double, 2> coord_hi{1.0, 1.0};
  double hist_mean = 0.0;
  double hist_std = 1.0;
  nn::FieldScaler field;
};

template <typename T>
struct DeepONetModel {
  DeepONetConfig cfg;
  nn::ParamStore<T> params;
  InputTransforms tf;

  // parameter-store indices resolved at build time
  std::vector<std::array<int, 2>> branch_dense;  // (W, b)
  std::vector<std::array<int, 3>> branch_rnn;    // (Wx, Wh, b)
  std::vector<std::array<int, 2>> trunk_dense;
  int beta = -1;
};

using DeepONetF = DeepONetModel<float>;
using DeepONetD = DeepONetModel<double>;

/// Initializes all parameters from the seed (Glorot uniform, LSTM forget
/// bias +1, beta 0) in a fixed entry order, so equal seeds give equal bits.
template <typename T>
DeepONetModel<T> build_model(const DeepONetConfig& cfg, std::uint64_t seed);

/// out[i][j] = sum_k b[i][k] t[j][k] + beta
template <typename T>
void fuse_forward(const Mat<T>& b, const Mat<T>& t, T beta, Mat<T>& out);
template <typename T>
void fuse_backward(const Mat<T>& b, const Mat<T>& t, const Mat<T>& d_out, Mat<T>& db, Mat<T>& dt,
                   T& dbeta);

template <typename T>
struct EvalCache {
  Mat<T> branch_in;                   // standardized branch input
  Mat<T> coords_n;                    // normalized trunk input
  std::vector<Mat<T>> branch_acts;    // fnn branch activations per layer
  std::vector<nn::RnnCache<T>> rnn;   // recurrent branch caches
  std::vector<Mat<T>> trunk_acts;     // trunk activations per layer
  Mat<T> branch_out;                  // [B x HD]
  Mat<T> trunk_out;                   // [M x HD]
};

/// histories are raw magnitudes [B x 101]; coords are raw coordinates
/// [M x 2]. The output is the fusion value (scaled field space); the trunk is
/// evaluated once per coordinate set and reused across the batch.
template <typename T>
void forward(const DeepONetModel<T>& model, const Mat<T>& histories, const Mat<T>& coords,
             Mat<T>& out, EvalCache<T>* cache = nullptr);

/// Accumulates gradients for all parameters into `grads` (overwrites).
template <typename T>
void backward(const DeepONetModel<T>& model, const EvalCache<T>& cache, const Mat<T>& d_out,
              nn::GradStore<T>& grads);

/// Physical-unit field prediction: field.unscale(forward(...)).
template <typename T>
Mat<T> predict_field(const DeepONetModel<T>& model, const Mat<T>& histories, const Mat<T>& coords);

/// Exact enumeration over the parameter store, beta included.
template <typename T>
std::size_t count_params(const DeepONetModel<T>& model);
/// Same, excluding the fusion bias beta.
template <typename T>
std::size_t network_param_count(const DeepONetModel<T>& model);

/// Checkpoint directory: model.json (config, transforms, caller metadata)
/// plus the ParamStore manifest and blob.
void save_model(const DeepONetModel<float>& model, const std::string& dir,
                const std::string& extra_json = "{}");
DeepONetModel<float> load_model(const std::string& dir, std::string* meta_json = nullptr);

}  // namespace seqop
