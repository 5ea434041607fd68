#pragma once

#include <array>
#include <utility>
#include <vector>

#include "gdance/tensor.hpp"

namespace gdance {

enum class MaskMode { symmetric, causal };

// Additive attention mask: 0 inside the aligned window, -inf outside.
// symmetric: |l - m| <= w; causal: 0 <= l - m <= w (keys not after queries).
struct AlignmentMask {
  int length = 0;
  int window = 0;
  MaskMode mode = MaskMode::symmetric;
  std::vector<double> values;  // length x length
};
AlignmentMask build_alignment_mask(int length, int window, MaskMode mode);

// Two-branch differential attention. Queries/keys project to 2d channels
// split into branch pairs, values stay 2d wide:
//   out = (softmax(Q1 K1^T / sqrt(d)) - lambda softmax(Q2 K2^T / sqrt(d))) V
// then a 2d -> d output projection. tau > 0 switches to the dense path and
// zeroes combined weights with |entry| < tau.
struct DiffAttnParams {
  Tensor wq, wk, wv;  // [d, 2d]
  Tensor wo;          // [2d, d]
  Tensor lambda_;     // scalar, learnable
  double tau = 0.0;
};
Tensor diff_attention(const Tensor& x, const DiffAttnParams& p, int window = -1,
                      bool causal = false);

// Music cross-attention restricted by an AlignmentMask; windowed kernel,
// O(L w d). Music features must already be projected to width d.
struct CrossAttnParams {
  Tensor wq, wk, wv;  // [d, d]
};
Tensor masked_cross_attention(const Tensor& x, const Tensor& music, const AlignmentMask& mask,
                              const CrossAttnParams& p);

// Diagonal state-space parameters, d independent channels with n states.
struct SsmParams {
  Tensor a;      // [d, n], entries < 0
  Tensor b;      // [d, n]
  Tensor c;      // [d, n]
  Tensor delta;  // [d, 1] or [d, n], entries > 0
};
enum class SsmMode { scan, kernel };

// ZOH: abar = exp(delta a); bbar = (exp(delta a) - 1) / a * b, with the
// analytic limit bbar = delta b when |delta a| < 1e-8.
std::pair<Tensor, Tensor> ssm_discretize(const Tensor& a, const Tensor& b, const Tensor& delta);

// scan: recurrence on the tape. kernel: causal convolution with
// K_l = C Abar^l Bbar, tape-free verification dual; both agree to 1e-8.
Tensor ssm_apply(const Tensor& x, const SsmParams& p, SsmMode mode);

// Rank-order code of the dancers' end positions: argsort by x then by y
// (ties by id), embedded as the mean of per-(slot, id) table rows.
struct SwapCode {
  std::vector<int> index_sequence;  // 2N entries
  Tensor embedding;                 // [1, d]
};
SwapCode swap_mode_encode(const std::vector<std::array<double, 2>>& start,
                          const std::vector<std::array<double, 2>>& end, const Tensor& table,
                          int n_max);

// Sinusoidal timestep features on t/t_max, scaled so the map from the
// normalized timestep to the feature vector is exactly 1-Lipschitz.
Tensor timestep_sinusoid(const std::vector<double>& t, double t_max, int dim);

struct TimestepMlp {
  Tensor w1, b1, w2, b2;  // [dim,h],[1,h],[h,d],[1,d]
};
Tensor timestep_embed(const std::vector<double>& t, double t_max, const TimestepMlp& mlp);

// One temporal layer: pre-LN residual sublayers in the order
// DiffAttn -> masked cross-attention -> SSM (scan) -> feed-forward.
struct TemporalLayerParams {
  DiffAttnParams attn;
  CrossAttnParams cross;
  SsmParams ssm;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b, ln4_g, ln4_b;
};
Tensor temporal_layer(const Tensor& x, const Tensor& music, const AlignmentMask& mask,
                      const TemporalLayerParams& p, int self_window, bool self_causal);

}  // namespace gdance
