#pragma once

#include <array>
#include <vector>

#include "gdance/tensor.hpp"

namespace gdance {

// Inter-dancer proximity graph for one frame. Edge weights grow as dancers
// approach; `normalized` is the dense symmetric D^{-1/2} A D^{-1/2}.
struct SpatialGraph {
  struct Edge {
    int i, j;  // i < j
    double weight;
  };
  int n = 0;
  std::vector<Edge> edges;
  std::vector<double> normalized;  // n*n, row-major
};

struct SpatialOptions {
  double eps = 1e-6;
  double d_min = 0.05;  // meters; closer pairs are clamped (or dropped)
  double k = 0.5;       // <1: fraction of N-1 kept per node; >=1: count
  bool drop_close = false;
  int layers = 2;
};

// A_ij = 1 / (max(dist_ij, d_min) + eps), per-node top-k, symmetrized by
// union, then degree-normalized. drop_close removes sub-d_min edges
// instead of clamping the distance.
SpatialGraph build_adjacency(const std::vector<std::array<double, 2>>& positions, double eps,
                             double k, double d_min, bool drop_close = false);

// D^{-1/2} A D^{-1/2} for a symmetric non-negative A with zero diagonal;
// zero-degree rows map to zero rows.
std::vector<double> normalize_adjacency(const std::vector<double>& a, int n);

// ReLU(Ã (H W)) with optional residual (projected through w_res when the
// widths differ). The adjacency is a constant: no gradient flows into it.
Tensor gcn_layer(const Tensor& h, const SpatialGraph& graph, const Tensor& w,
                 const Tensor* w_res, bool residual);

// Per-frame graph construction + `layers` stacked gcn_layers with identity
// residuals, batched over frames. X: [L,N,d]; roots_xy: L*N*2 ground
// positions; layer_weights: one [d,d] per layer. Matches per-frame
// gcn_layer results exactly.
Tensor spatial_block(const Tensor& x, const std::vector<double>& roots_xy,
                     const std::vector<Tensor>& layer_weights, const SpatialOptions& opt);

}  // namespace gdance
