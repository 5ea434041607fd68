#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "gdance/spatial.hpp"

using namespace gdance;

namespace {

std::vector<std::array<double, 2>> random_positions(RngStream& rng, int n, double span) {
  std::vector<std::array<double, 2>> p(n);
  for (auto& q : p) {
    q[0] = span * (rng.next_uniform() - 0.5);
    q[1] = span * (rng.next_uniform() - 0.5);
  }
  return p;
}

double max_abs_eigenvalue(const std::vector<double>& m, int n, RngStream& rng) {
  std::vector<double> v(n), w(n);
  for (double& x : v) x = rng.next_gaussian();
  double lambda = 0.0;
  for (int it = 0; it < 300; ++it) {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += m[static_cast<std::size_t>(i) * n + j] * v[j];
      w[i] = s;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lambda = norm;
    for (int i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  return lambda;
}

}  // namespace

TEST_CASE("adjacency weight follows inverse distance with clamping") {
  auto g = build_adjacency({{0, 0}, {3, 4}}, 1e-12, 0.5, 0.0);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].weight == doctest::Approx(0.2).epsilon(1e-9));

  auto close = build_adjacency({{1, 1}, {1, 1}}, 1e-12, 0.5, 0.05);
  REQUIRE(close.edges.size() == 1);
  CHECK(close.edges[0].weight == doctest::Approx(20.0).epsilon(1e-9));

  auto dropped = build_adjacency({{1, 1}, {1, 1}}, 1e-12, 0.5, 0.05, true);
  CHECK(dropped.edges.empty());

  CHECK_THROWS_AS(build_adjacency({{0, 0}, {std::nan(""), 0}}, 1e-6, 0.5, 0.05), NumericError);
}

TEST_CASE("top-k keeps each node's strongest neighbors, union-symmetrized") {
  // Weights: 0-1 stronger than 1-2 stronger than 0-2.
  auto g = build_adjacency({{0, 0}, {1, 0}, {3, 0}}, 1e-12, 1.0, 0.0);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0].i == 0);
  CHECK(g.edges[0].j == 1);
  CHECK(g.edges[1].i == 1);
  CHECK(g.edges[1].j == 2);

  // Union bound: at most N*k directed picks, at least ceil(N*k/2) edges,
  // and every node's strongest neighbor always survives.
  RngStream rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 5;
    auto pos = random_positions(rng, n, 4.0);
    auto gr = build_adjacency(pos, 1e-6, 1.0, 0.05);
    CHECK(gr.edges.size() >= 3);  // ceil(5*1/2)
    CHECK(gr.edges.size() <= 5);
    for (int i = 0; i < n; ++i) {
      int best = -1;
      double bw = -1.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = pos[i][0] - pos[j][0], dy = pos[i][1] - pos[j][1];
        const double w = 1.0 / (std::max(std::sqrt(dx * dx + dy * dy), 0.05) + 1e-6);
        if (w > bw) {
          bw = w;
          best = j;
        }
      }
      bool found = false;
      for (const auto& e : gr.edges)
        if ((e.i == std::min(i, best) && e.j == std::max(i, best))) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("normalization oracles") {
  // Single edge: degrees equal the weight, normalization cancels it.
  for (double w : {0.3, 2.0, 17.5}) {
    auto t = normalize_adjacency({0, w, w, 0}, 2);
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t[3] == 0.0);
  }

  // Complete 3-graph, unit weights: D = 2I.
  std::vector<double> k3 = {0, 1, 1, 1, 0, 1, 1, 1, 0};
  auto t3 = normalize_adjacency(k3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(t3[static_cast<std::size_t>(i) * 3 + j] ==
            doctest::Approx(i == j ? 0.0 : 0.5).epsilon(1e-12));

  // Isolated node: zero row and column.
  std::vector<double> iso = {0, 1, 0, 1, 0, 0, 0, 0, 0};
  auto ti = normalize_adjacency(iso, 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(ti[2 * 3 + j] == 0.0);
    CHECK(ti[static_cast<std::size_t>(j) * 3 + 2] == 0.0);
  }

  CHECK_THROWS_AS(normalize_adjacency({0, 1, 2, 0}, 2), ValueError);   // asymmetric
  CHECK_THROWS_AS(normalize_adjacency({1, 1, 1, 0}, 2), ValueError);   // diagonal
  CHECK_THROWS_AS(normalize_adjacency({0, -1, -1, 0}, 2), ValueError); // negative
}

TEST_CASE("single dancer graph is empty with a zero matrix") {
  auto g = build_adjacency({{0.5, 0.5}}, 1e-6, 0.5, 0.05);
  CHECK(g.edges.empty());
  REQUIRE(g.normalized.size() == 1);
  CHECK(g.normalized[0] == 0.0);
}

TEST_CASE("normalized adjacency is symmetric with spectral radius <= 1") {
  RngStream rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_u64() % 4);
    auto g = build_adjacency(random_positions(rng, n, 5.0), 1e-6, 0.6, 0.05);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(g.normalized[static_cast<std::size_t>(i) * n + j] ==
              g.normalized[static_cast<std::size_t>(j) * n + i]);
    CHECK(max_abs_eigenvalue(g.normalized, n, rng) <= 1.0 + 1e-8);
  }
}

TEST_CASE("gcn layer oracles") {
  SpatialGraph lone;
  lone.n = 1;
  lone.normalized = {0.0};
  Tensor h1 = Tensor::from({1, 3}, {1.0, -2.0, 3.0});
  Tensor wr = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor w13 = Tensor::from({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  Tensor out = gcn_layer(h1, lone, w13, &wr, true);
  // Zero propagation: result is exactly the residual projection H @ wr.
  CHECK((*out.data)[0] == doctest::Approx(1.0 + 3.0));
  CHECK((*out.data)[1] == doctest::Approx(-2.0 + 3.0));

  SpatialGraph pair;
  pair.n = 2;
  pair.normalized = {0, 1, 1, 0};
  Tensor h = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor swapped = gcn_layer(h, pair, eye, nullptr, false);
  CHECK((*swapped.data) == std::vector<double>{0, 1, 1, 0});

  CHECK_THROWS_AS(gcn_layer(h, pair, Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}), nullptr, false),
                  ShapeError);
}

TEST_CASE("gcn layer gradients pass finite differences") {
  RngStream rng(29);
  auto g = build_adjacency(random_positions(rng, 4, 3.0), 1e-6, 0.5, 0.05);
  Tensor h0 = Tensor::randn(rng, {4, 5});
  Tensor w0 = Tensor::randn(rng, {5, 5});
  Tensor probe = Tensor::randn(rng, {4, 5});
  auto rh = grad_check(
      [&](const Tensor& h) {
        return ops::sum_all(ops::mul(gcn_layer(h, g, w0, nullptr, true), probe));
      },
      h0, 1e-4);
  CHECK_MESSAGE(rh.pass, rh.max_rel_err);
  auto rw = grad_check(
      [&](const Tensor& w) {
        return ops::sum_all(ops::mul(gcn_layer(h0, g, w, nullptr, true), probe));
      },
      w0, 1e-4);
  CHECK_MESSAGE(rw.pass, rw.max_rel_err);
}

TEST_CASE("spatial block equals stacked per-frame gcn layers exactly") {
  RngStream rng(31);
  const int L = 4, N = 3, d = 6;
  Tensor x = Tensor::randn(rng, {L, N, d});
  std::vector<double> roots(static_cast<std::size_t>(L) * N * 2);
  for (double& v : roots) v = 4.0 * (rng.next_uniform() - 0.5);
  SpatialOptions opt;
  std::vector<Tensor> ws = {Tensor::randn(rng, {d, d}), Tensor::randn(rng, {d, d})};

  Tensor block = spatial_block(x, roots, ws, opt);
  REQUIRE(block.shape == std::vector<int>{L, N, d});

  for (int l = 0; l < L; ++l) {
    std::vector<std::array<double, 2>> pos(N);
    for (int n = 0; n < N; ++n) {
      pos[n][0] = roots[(static_cast<std::size_t>(l) * N + n) * 2];
      pos[n][1] = roots[(static_cast<std::size_t>(l) * N + n) * 2 + 1];
    }
    SpatialGraph g = build_adjacency(pos, opt.eps, opt.k, opt.d_min, opt.drop_close);
    Tensor h = ops::slice(x, 0, l, 1);
    h = ops::reshape(h, {N, d});
    for (const Tensor& w : ws) h = gcn_layer(h, g, w, nullptr, true);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < d; ++c)
        CHECK((*block.data)[(static_cast<std::size_t>(l) * N + n) * d + c] ==
              (*h.data)[static_cast<std::size_t>(n) * d + c]);
  }
}

TEST_CASE("spatial block with one dancer passes features through") {
  RngStream rng(37);
  const int L = 5, d = 4;
  Tensor x = Tensor::randn(rng, {L, 1, d});
  std::vector<double> roots(static_cast<std::size_t>(L) * 2, 0.0);
  std::vector<Tensor> ws = {Tensor::randn(rng, {d, d})};
  Tensor out = spatial_block(x, roots, ws, SpatialOptions{});
  // No edges: ReLU(0) + x == x, bit for bit.
  CHECK((*out.data) == (*x.data));
}

TEST_CASE("spatial block is permutation-equivariant over dancers") {
  RngStream rng(41);
  const int L = 3, N = 4, d = 5;
  Tensor x = Tensor::randn(rng, {L, N, d});
  std::vector<double> roots(static_cast<std::size_t>(L) * N * 2);
  for (double& v : roots) v = 5.0 * (rng.next_uniform() - 0.5);
  std::vector<Tensor> ws = {Tensor::randn(rng, {d, d}), Tensor::randn(rng, {d, d})};
  const std::vector<int> perm = {2, 0, 3, 1};

  Tensor base = spatial_block(x, roots, ws, SpatialOptions{});

  Tensor xp = Tensor::zeros({L, N, d});
  std::vector<double> rootsp(roots.size());
  for (int l = 0; l < L; ++l)
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < d; ++c)
        (*xp.data)[(static_cast<std::size_t>(l) * N + n) * d + c] =
            (*x.data)[(static_cast<std::size_t>(l) * N + perm[n]) * d + c];
      for (int c = 0; c < 2; ++c)
        rootsp[(static_cast<std::size_t>(l) * N + n) * 2 + c] =
            roots[(static_cast<std::size_t>(l) * N + perm[n]) * 2 + c];
    }
  Tensor permuted = spatial_block(xp, rootsp, ws, SpatialOptions{});

  for (int l = 0; l < L; ++l)
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < d; ++c)
        CHECK((*permuted.data)[(static_cast<std::size_t>(l) * N + n) * d + c] ==
              doctest::Approx(
                  (*base.data)[(static_cast<std::size_t>(l) * N + perm[n]) * d + c])
                  .epsilon(1e-10));
}

TEST_CASE("spatial block keeps bounded inputs bounded and differentiable") {
  RngStream rng(43);
  const int L = 3, N = 3, d = 4;
  Tensor x = Tensor::randn(rng, {L, N, d});
  std::vector<double> roots(static_cast<std::size_t>(L) * N * 2);
  for (double& v : roots) v = 3.0 * (rng.next_uniform() - 0.5);
  std::vector<Tensor> ws = {Tensor::randn(rng, {d, d}), Tensor::randn(rng, {d, d})};
  Tensor out = spatial_block(x, roots, ws, SpatialOptions{});
  for (double v : *out.data) CHECK(std::isfinite(v));

  auto rep = grad_check(
      [&](const Tensor& t) { return ops::mean_all(spatial_block(t, roots, ws, SpatialOptions{})); },
      x, 1e-4);
  CHECK_MESSAGE(rep.pass, rep.max_rel_err);
}
