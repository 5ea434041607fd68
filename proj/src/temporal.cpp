#include "gdance/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gdance {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_2d(const Tensor& t, int rows, int cols, const char* name) {
  if (t.rank() != 2 || t.size(0) != rows || t.size(1) != cols) {
    throw ShapeError(std::string(name) + " must be [" + std::to_string(rows) + "," +
                     std::to_string(cols) + "], got " + shape_str(t.shape));
  }
}

}  // namespace

AlignmentMask build_alignment_mask(int length, int window, MaskMode mode) {
  if (length <= 0) throw ValueError("alignment mask: length must be positive");
  if (window < 0) throw ValueError("alignment mask: window must be non-negative");
  AlignmentMask m;
  m.length = length;
  m.window = window;
  m.mode = mode;
  m.values.assign(static_cast<std::size_t>(length) * length, -kInf);
  for (int l = 0; l < length; ++l) {
    for (int k = 0; k < length; ++k) {
      bool in = mode == MaskMode::causal ? (k <= l && l - k <= window) : (std::abs(l - k) <= window);
      if (in) m.values[static_cast<std::size_t>(l) * length + k] = 0.0;
    }
  }
  return m;
}

Tensor diff_attention(const Tensor& x, const DiffAttnParams& p, int window, bool causal) {
  if (x.rank() != 2) throw ShapeError("diffattn: input must be [L,d], got " + shape_str(x.shape));
  int L = x.size(0);
  int d = x.size(1);
  check_2d(p.wq, d, 2 * d, "diffattn: wq");
  check_2d(p.wk, d, 2 * d, "diffattn: wk");
  check_2d(p.wv, d, 2 * d, "diffattn: wv");
  check_2d(p.wo, 2 * d, d, "diffattn: wo");
  if (p.lambda_.numel() != 1) throw ShapeError("diffattn: lambda must be a scalar");
  if (!std::isfinite(p.lambda_.item())) throw NumericError("diffattn: lambda is non-finite");

  Tensor q = ops::matmul(x, p.wq);
  Tensor k = ops::matmul(x, p.wk);
  Tensor v = ops::matmul(x, p.wv);  // values keep both halves: [L, 2d]
  auto qs = ops::split(q, 1, {d, d});
  auto ks = ops::split(k, 1, {d, d});

  if (p.tau > 0.0) {
    // Dense path so the combined weight matrix exists to prune.
    double inv = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor s1 = ops::scale(ops::matmul(qs[0], ops::transpose(ks[0])), inv);
    Tensor s2 = ops::scale(ops::matmul(qs[1], ops::transpose(ks[1])), inv);
    if (window >= 0 || causal) {
      AlignmentMask am = build_alignment_mask(L, window >= 0 ? window : L,
                                              causal ? MaskMode::causal : MaskMode::symmetric);
      std::vector<std::uint8_t> outside(am.values.size(), 0);
      for (std::size_t i = 0; i < am.values.size(); ++i) outside[i] = am.values[i] != 0.0;
      s1 = ops::masked_fill(s1, outside, -kInf);
      s2 = ops::masked_fill(s2, outside, -kInf);
    }
    Tensor w = ops::sub(ops::softmax_last(s1), ops::mul(ops::softmax_last(s2), p.lambda_));
    std::vector<std::uint8_t> prune(w.numel(), 0);
    for (std::size_t i = 0; i < w.numel(); ++i) prune[i] = std::fabs(w.ptr()[i]) < p.tau;
    w = ops::masked_fill(w, prune, 0.0);
    return ops::matmul(ops::matmul(w, v), p.wo);
  }

  Tensor a1 = ops::windowed_attention(qs[0], ks[0], v, window, causal);
  Tensor a2 = ops::windowed_attention(qs[1], ks[1], v, window, causal);
  return ops::matmul(ops::sub(a1, ops::mul(a2, p.lambda_)), p.wo);
}

Tensor masked_cross_attention(const Tensor& x, const Tensor& music, const AlignmentMask& mask,
                              const CrossAttnParams& p) {
  if (x.rank() != 2) throw ShapeError("crossattn: input must be [L,d], got " + shape_str(x.shape));
  int L = x.size(0);
  int d = x.size(1);
  if (music.rank() != 2 || music.size(1) != d) {
    throw ShapeError("crossattn: music must be [L," + std::to_string(d) + "], got " +
                     shape_str(music.shape));
  }
  if (music.size(0) != L || mask.length != L) {
    throw ShapeError("crossattn: motion/music/mask lengths disagree");
  }
  Tensor q = ops::matmul(x, p.wq);
  Tensor k = ops::matmul(music, p.wk);
  Tensor v = ops::matmul(music, p.wv);
  return ops::windowed_attention(q, k, v, mask.window, mask.mode == MaskMode::causal);
}

std::pair<Tensor, Tensor> ssm_discretize(const Tensor& a, const Tensor& b, const Tensor& delta) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape != b.shape) {
    throw ShapeError("ssm: a and b must be matching [d,n], got " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  }
  if (delta.rank() != 2 || delta.size(0) != a.size(0) ||
      (delta.size(1) != 1 && delta.size(1) != a.size(1))) {
    throw ShapeError("ssm: delta must be [d,1] or [d,n], got " + shape_str(delta.shape));
  }
  for (std::size_t i = 0; i < delta.numel(); ++i) {
    if (!(delta.ptr()[i] > 0.0)) throw ValueError("ssm: delta entries must be positive");
  }
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (!(a.ptr()[i] < 0.0)) throw ValueError("ssm: continuous matrix entries must be negative");
  }

  Tensor da = ops::mul(delta, a);
  Tensor abar = ops::exp(da);

  // Piecewise bbar: the generic (exp(da)-1)/a path degrades near da = 0, so
  // that region takes the limit delta*b. a is patched before dividing to keep
  // the untaken branch free of non-finite intermediates.
  std::vector<std::uint8_t> small(da.numel(), 0);
  std::vector<std::uint8_t> large(da.numel(), 0);
  for (std::size_t i = 0; i < da.numel(); ++i) {
    small[i] = std::fabs(da.ptr()[i]) < 1e-8;
    large[i] = !small[i];
  }
  Tensor a_safe = ops::masked_fill(a, small, -1.0);
  Tensor generic = ops::mul(ops::div(ops::expm1(ops::mul(delta, a_safe)), a_safe), b);
  Tensor limit = ops::mul(delta, b);
  Tensor bbar = ops::add(ops::masked_fill(generic, small, 0.0), ops::masked_fill(limit, large, 0.0));
  return {abar, bbar};
}

Tensor ssm_apply(const Tensor& x, const SsmParams& p, SsmMode mode) {
  if (x.rank() != 2) throw ShapeError("ssm: input must be [L,d], got " + shape_str(x.shape));
  int d = p.a.rank() == 2 ? p.a.size(0) : -1;
  if (x.size(1) != d) {
    throw ShapeError("ssm: input width " + std::to_string(x.size(1)) + " does not match " +
                     std::to_string(d) + " channels");
  }
  if (p.c.shape != p.a.shape) {
    throw ShapeError("ssm: c must match a, got " + shape_str(p.c.shape) + " and " +
                     shape_str(p.a.shape));
  }
  auto [abar, bbar] = ssm_discretize(p.a, p.b, p.delta);
  if (mode == SsmMode::scan) return ops::ssm_scan(x, abar, bbar, p.c);

  // Tape-free convolution dual: y[l,j] = sum_{m<=l} K[l-m][j] x[m,j] with
  // K_t[j] = sum_i c[j,i] abar[j,i]^t bbar[j,i].
  int L = x.size(0);
  int n = p.a.size(1);
  std::vector<double> kernel(static_cast<std::size_t>(L) * d, 0.0);
  std::vector<double> pw(static_cast<std::size_t>(d) * n, 1.0);
  for (int t = 0; t < L; ++t) {
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        std::size_t ji = static_cast<std::size_t>(j) * n + i;
        acc += p.c.ptr()[ji] * pw[ji] * bbar.ptr()[ji];
      }
      kernel[static_cast<std::size_t>(t) * d + j] = acc;
    }
    for (std::size_t ji = 0; ji < pw.size(); ++ji) pw[ji] *= abar.ptr()[ji];
  }
  std::vector<double> y(static_cast<std::size_t>(L) * d, 0.0);
  for (int l = 0; l < L; ++l) {
    for (int m = 0; m <= l; ++m) {
      const double* kr = kernel.data() + static_cast<std::size_t>(l - m) * d;
      const double* xr = x.ptr() + static_cast<std::size_t>(m) * d;
      double* yr = y.data() + static_cast<std::size_t>(l) * d;
      for (int j = 0; j < d; ++j) yr[j] += kr[j] * xr[j];
    }
  }
  return Tensor::from({L, d}, std::move(y));
}

SwapCode swap_mode_encode(const std::vector<std::array<double, 2>>& start,
                          const std::vector<std::array<double, 2>>& end, const Tensor& table,
                          int n_max) {
  int n = static_cast<int>(start.size());
  if (static_cast<int>(end.size()) != n) {
    throw ShapeError("swap code: start has " + std::to_string(n) + " dancers, end has " +
                     std::to_string(end.size()));
  }
  if (n < 1 || n > n_max) throw ValueError("swap code: dancer count out of range");
  if (table.rank() != 2 || table.size(0) != 2 * n_max * n_max) {
    throw ShapeError("swap code: table must be [2*n_max*n_max,d], got " + shape_str(table.shape));
  }
  for (const auto& pt : end) {
    if (!std::isfinite(pt[0]) || !std::isfinite(pt[1])) {
      throw NumericError("swap code: non-finite end position");
    }
  }

  auto order_by = [n](const std::vector<std::array<double, 2>>& pts, int axis) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return pts[a][axis] < pts[b][axis]; });
    return idx;
  };

  SwapCode code;
  std::vector<int> by_x = order_by(end, 0);
  std::vector<int> by_y = order_by(end, 1);
  code.index_sequence = by_x;
  code.index_sequence.insert(code.index_sequence.end(), by_y.begin(), by_y.end());

  std::vector<int> rows(code.index_sequence.size());
  for (std::size_t s = 0; s < rows.size(); ++s) {
    rows[s] = static_cast<int>(s) * n_max + code.index_sequence[s];
  }
  Tensor picked = ops::gather_rows(table, rows);
  code.embedding = ops::transpose(ops::mean_last(ops::transpose(picked)));
  return code;
}

Tensor timestep_sinusoid(const std::vector<double>& t, double t_max, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ValueError("timestep: feature dim must be even and >= 2");
  if (!(t_max > 0.0)) throw ValueError("timestep: t_max must be positive");
  for (double v : t) {
    if (!(v >= 0.0 && v <= t_max)) {
      throw ValueError("timestep: value " + std::to_string(v) + " outside [0," +
                       std::to_string(t_max) + "]");
    }
  }
  int half = dim / 2;
  std::vector<double> omega(half);
  for (int k = 0; k < half; ++k) {
    double e = half > 1 ? static_cast<double>(k) / (half - 1) : 0.0;
    omega[k] = M_PI * std::pow(100.0, e);
  }
  // Feature scale 1/sqrt(sum omega^2) makes the derivative of the feature map
  // in the normalized time exactly unit-norm, so the map is 1-Lipschitz.
  double z = 0.0;
  for (double w : omega) z += w * w;
  z = 1.0 / std::sqrt(z);

  int L = static_cast<int>(t.size());
  std::vector<double> out(static_cast<std::size_t>(L) * dim);
  for (int l = 0; l < L; ++l) {
    double u = t[l] / t_max;
    double* row = out.data() + static_cast<std::size_t>(l) * dim;
    for (int k = 0; k < half; ++k) {
      row[k] = std::sin(omega[k] * u) * z;
      row[half + k] = std::cos(omega[k] * u) * z;
    }
  }
  return Tensor::from({L, dim}, std::move(out));
}

Tensor timestep_embed(const std::vector<double>& t, double t_max, const TimestepMlp& mlp) {
  Tensor feats = timestep_sinusoid(t, t_max, mlp.w1.size(0));
  Tensor h = ops::relu(ops::add(ops::matmul(feats, mlp.w1), mlp.b1));
  return ops::add(ops::matmul(h, mlp.w2), mlp.b2);
}

Tensor temporal_layer(const Tensor& x, const Tensor& music, const AlignmentMask& mask,
                      const TemporalLayerParams& p, int self_window, bool self_causal) {
  Tensor h = x;
  h = ops::add(h, diff_attention(ops::layer_norm(h, p.ln1_g, p.ln1_b), p.attn, self_window,
                                 self_causal));
  h = ops::add(h, masked_cross_attention(ops::layer_norm(h, p.ln2_g, p.ln2_b), music, mask,
                                         p.cross));
  h = ops::add(h, ssm_apply(ops::layer_norm(h, p.ln3_g, p.ln3_b), p.ssm, SsmMode::scan));
  Tensor ff_in = ops::layer_norm(h, p.ln4_g, p.ln4_b);
  Tensor ff = ops::relu(ops::add(ops::matmul(ff_in, p.ff_w1), p.ff_b1));
  ff = ops::add(ops::matmul(ff, p.ff_w2), p.ff_b2);
  return ops::add(h, ff);
}

}  // namespace gdance
