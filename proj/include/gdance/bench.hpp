#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdance/model.hpp"
#include "gdance/temporal.hpp"
#include "gdance/tensor.hpp"

namespace gdance {

// Analytic multiply counts for one forward pass of each block, matching the
// instrumented FlopCounter exactly (matmul/bmm/scan/windowed-attention
// multiplies only; elementwise ops and normalizations are excluded on both
// sides by the same convention).
struct FlopBreakdown {
  std::uint64_t gcn = 0;                // spatial block, all layers
  std::uint64_t diff_attn_windowed = 0; // differential attention, tau = 0 path
  std::uint64_t diff_attn_dense = 0;    // differential attention, tau > 0 path
  std::uint64_t cross_attn = 0;         // masked music cross-attention
  std::uint64_t ssm = 0;                // state-space scan, all channels
  std::uint64_t dense_baseline = 0;     // full attention over N*L tokens
  std::uint64_t decoder_total = 0;      // whole decoder forward (windowed path)
};

// Sum over query rows of the attended window width; mirrors the attention
// kernel's span rule (window < 0 attends everything, causal clips at l).
std::uint64_t attention_span_sum(int L, int window, bool causal);

FlopBreakdown flop_count(const DecoderConfig& cfg, int L, int N);

// Reference model: single full-attention layer over the flattened N*L token
// sequence at the decoder's width. Quadratic in token count by construction.
struct DenseBaseline {
  Tensor wq, wk, wv, wo;  // [d, d]
  DenseBaseline(int d, std::uint64_t seed);
  Tensor forward(const Tensor& x) const;  // [T, d] -> [T, d]
};

// Least-squares slope of log(value) against log(size); the empirical growth
// exponent. Sizes and values must be positive and equally long.
double fit_exponent(const std::vector<double>& sizes, const std::vector<double>& values);

enum class ScalingAxis { frames, dancers };

struct ScalingConfig {
  ScalingAxis axis = ScalingAxis::frames;
  std::vector<int> sizes;   // >= 4, strictly increasing
  int repeats = 5;          // >= 5 timed runs per point, one warm-up discarded
  int fixed = 3;            // dancers when sweeping frames, frames when sweeping dancers
  std::uint64_t seed = 0;
  DecoderConfig decoder;    // width/layer/window template
};

struct ScalingReport {
  ScalingAxis axis = ScalingAxis::frames;
  std::vector<int> sizes;
  std::vector<double> decoupled_seconds;         // median over repeats
  std::vector<double> dense_seconds;             // median over repeats
  std::vector<std::uint64_t> decoupled_flops;    // analytic decoder_total
  std::vector<std::uint64_t> dense_flops;        // analytic dense_baseline
  double decoupled_exponent = 0.0;
  double dense_exponent = 0.0;
  std::string advisory;  // set when timings sit near timer resolution
};

ScalingReport run_scaling(const ScalingConfig& sc);

std::string scaling_json(const ScalingReport& r);
std::string scaling_csv(const ScalingReport& r);

// Fraction of the L x L combined attention map A1 - lambda * A2 whose
// entries fall below the threshold in magnitude (zeros outside the window
// count; they are genuinely never attended).
double diff_attention_sparsity(const Tensor& x, const DiffAttnParams& p, int window, bool causal,
                               double threshold = 1e-3);

struct SparsityReport {
  double threshold = 1e-3;
  std::vector<double> layer_fraction;  // one entry per temporal layer
};

// Runs the probe input through each temporal layer's attention parameters.
SparsityReport sparsity_probe(const Decoder& dec, const Tensor& probe, double threshold = 1e-3);

}  // namespace gdance
