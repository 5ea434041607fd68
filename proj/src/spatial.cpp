#include "gdance/spatial.hpp"

#include <algorithm>
#include <cmath>

#include "gdance/error.hpp"

namespace gdance {

namespace {

int top_k_count(double k, int n) {
  if (n <= 1) return 0;
  int c;
  if (k <= 0.0)
    c = (n - 1 + 1) / 2;  // ceil(0.5 * (n-1))
  else if (k < 1.0)
    c = static_cast<int>(std::ceil(k * (n - 1)));
  else
    c = static_cast<int>(k);
  return std::min(std::max(c, 1), n - 1);
}

}  // namespace

SpatialGraph build_adjacency(const std::vector<std::array<double, 2>>& positions, double eps,
                             double k, double d_min, bool drop_close) {
  const int n = static_cast<int>(positions.size());
  if (n < 1) throw ValueError("adjacency: need at least one position");
  if (eps <= 0.0) throw ValueError("adjacency: eps must be positive");
  if (d_min < 0.0) throw ValueError("adjacency: d_min must be non-negative");
  for (const auto& p : positions)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw NumericError("adjacency: non-finite position");

  std::vector<double> weight(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      const double dist = std::sqrt(dx * dx + dy * dy);
      double w;
      if (drop_close && dist < d_min)
        w = 0.0;
      else
        w = 1.0 / (std::max(dist, d_min) + eps);
      weight[static_cast<std::size_t>(i) * n + j] = w;
      weight[static_cast<std::size_t>(j) * n + i] = w;
    }

  // Per-node strongest candidates, then union over directions.
  const int keep = top_k_count(k, n);
  std::vector<std::uint8_t> kept(static_cast<std::size_t>(n) * n, 0);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i && weight[static_cast<std::size_t>(i) * n + j] > 0.0) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return weight[static_cast<std::size_t>(i) * n + a] >
             weight[static_cast<std::size_t>(i) * n + b];
    });
    const int take = std::min<int>(keep, static_cast<int>(order.size()));
    for (int t = 0; t < take; ++t) kept[static_cast<std::size_t>(i) * n + order[t]] = 1;
  }

  SpatialGraph g;
  g.n = n;
  std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (!kept[static_cast<std::size_t>(i) * n + j] &&
          !kept[static_cast<std::size_t>(j) * n + i])
        continue;
      const double w = weight[static_cast<std::size_t>(i) * n + j];
      g.edges.push_back({i, j, w});
      a[static_cast<std::size_t>(i) * n + j] = w;
      a[static_cast<std::size_t>(j) * n + i] = w;
    }
  g.normalized = normalize_adjacency(a, n);
  return g;
}

std::vector<double> normalize_adjacency(const std::vector<double>& a, int n) {
  if (a.size() != static_cast<std::size_t>(n) * n)
    throw ShapeError("normalize: matrix size " + std::to_string(a.size()) + " != " +
                     std::to_string(n) + "^2");
  for (int i = 0; i < n; ++i) {
    if (a[static_cast<std::size_t>(i) * n + i] != 0.0)
      throw ValueError("normalize: diagonal must be zero");
    for (int j = 0; j < n; ++j) {
      const double v = a[static_cast<std::size_t>(i) * n + j];
      if (v < 0.0) throw ValueError("normalize: negative weight");
      if (v != a[static_cast<std::size_t>(j) * n + i])
        throw ValueError("normalize: asymmetric input at (" + std::to_string(i) + "," +
                         std::to_string(j) + ")");
    }
  }
  std::vector<double> dinv(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += a[static_cast<std::size_t>(i) * n + j];
    dinv[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  // Each unordered pair is computed once and mirrored so the result is
  // symmetric bit for bit.
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = dinv[i] * a[static_cast<std::size_t>(i) * n + j] * dinv[j];
      out[static_cast<std::size_t>(i) * n + j] = v;
      out[static_cast<std::size_t>(j) * n + i] = v;
    }
  return out;
}

Tensor gcn_layer(const Tensor& h, const SpatialGraph& graph, const Tensor& w,
                 const Tensor* w_res, bool residual) {
  if (h.rank() != 2 || h.shape[0] != graph.n)
    throw ShapeError("gcn: features " + shape_str(h.shape) + " vs graph n=" +
                     std::to_string(graph.n));
  if (w.rank() != 2 || w.shape[0] != h.shape[1])
    throw ShapeError("gcn: weight " + shape_str(w.shape) + " vs features " + shape_str(h.shape));
  Tensor ahat = Tensor::from({graph.n, graph.n}, graph.normalized);
  Tensor out = ops::relu(ops::matmul(ahat, ops::matmul(h, w)));
  if (!residual) return out;
  if (w_res != nullptr) return ops::add(out, ops::matmul(h, *w_res));
  if (w.shape[1] != h.shape[1])
    throw ShapeError("gcn: identity residual needs square weight, got " + shape_str(w.shape));
  return ops::add(out, h);
}

Tensor spatial_block(const Tensor& x, const std::vector<double>& roots_xy,
                     const std::vector<Tensor>& layer_weights, const SpatialOptions& opt) {
  if (x.rank() != 3) throw ShapeError("spatial_block: expected [L,N,d], got " + shape_str(x.shape));
  const int L = x.shape[0], N = x.shape[1], d = x.shape[2];
  if (roots_xy.size() != static_cast<std::size_t>(L) * N * 2)
    throw ShapeError("spatial_block: roots size " + std::to_string(roots_xy.size()) +
                     " != L*N*2");
  if (layer_weights.empty()) throw ValueError("spatial_block: no layer weights");
  for (const Tensor& w : layer_weights)
    if (w.rank() != 2 || w.shape[0] != d || w.shape[1] != d)
      throw ShapeError("spatial_block: layer weight must be [d,d], got " + shape_str(w.shape));

  // Per-frame normalized adjacency, constant w.r.t. the tape.
  std::vector<double> ahat(static_cast<std::size_t>(L) * N * N);
  std::vector<std::array<double, 2>> pos(N);
  for (int l = 0; l < L; ++l) {
    for (int n = 0; n < N; ++n) {
      pos[n][0] = roots_xy[(static_cast<std::size_t>(l) * N + n) * 2];
      pos[n][1] = roots_xy[(static_cast<std::size_t>(l) * N + n) * 2 + 1];
    }
    SpatialGraph g = build_adjacency(pos, opt.eps, opt.k, opt.d_min, opt.drop_close);
    std::copy(g.normalized.begin(), g.normalized.end(),
              ahat.begin() + static_cast<std::size_t>(l) * N * N);
  }
  Tensor a = Tensor::from({L, N, N}, std::move(ahat));

  Tensor h = x;
  for (const Tensor& w : layer_weights) {
    Tensor hw = ops::matmul(ops::reshape(h, {L * N, d}), w);
    Tensor prop = ops::bmm(a, ops::reshape(hw, {L, N, d}));
    h = ops::add(ops::relu(prop), h);
  }
  return h;
}

}  // namespace gdance
