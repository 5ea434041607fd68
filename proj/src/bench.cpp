#include "gdance/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gdance/error.hpp"
#include "gdance/motion.hpp"
#include "gdance/rng.hpp"

namespace gdance {

namespace {

std::uint64_t u64(int v) { return static_cast<std::uint64_t>(v); }

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const char* axis_name(ScalingAxis axis) {
  return axis == ScalingAxis::frames ? "frames" : "dancers";
}

}  // namespace

std::uint64_t attention_span_sum(int L, int window, bool causal) {
  if (L < 1) throw ValueError("bench: span sum needs at least one frame");
  std::uint64_t total = 0;
  for (int l = 0; l < L; ++l) {
    int lo, hi;
    if (window < 0) {
      lo = 0;
      hi = causal ? std::min(l, L - 1) : L - 1;
    } else {
      lo = std::max(0, l - window);
      hi = causal ? std::min(l, L - 1) : std::min(L - 1, l + window);
    }
    total += u64(hi - lo + 1);
  }
  return total;
}

FlopBreakdown flop_count(const DecoderConfig& cfg, int L, int N) {
  cfg.validate();
  if (L < 1) throw ValueError("bench: flop count needs at least one frame");
  if (N < 1) throw ValueError("bench: flop count needs at least one dancer");
  std::uint64_t uL = u64(L);
  std::uint64_t uN = u64(N);
  std::uint64_t d = u64(cfg.d);
  std::uint64_t n = u64(cfg.ssm_state_dim);
  std::uint64_t h = u64(cfg.hidden());
  std::uint64_t m = u64(cfg.music_dim);
  std::uint64_t S = attention_span_sum(L, cfg.window, cfg.causal);

  FlopBreakdown b;
  // Per spatial layer: one [L*N,d]x[d,d] projection plus one batched
  // [N,N]x[N,d] adjacency mix per frame.
  b.gcn = u64(cfg.gcn_layers) * (uL * uN * d * d + uL * uN * uN * d);
  // Three [L,d]x[d,2d] projections, two windowed passes with d-wide keys and
  // 2d-wide values, and the [L,2d]x[2d,d] output projection.
  b.diff_attn_windowed = 8 * uL * d * d + 6 * d * S;
  // Dense path swaps the windowed passes for two LxL score products and one
  // [L,L]x[L,2d] combine; pruning zeroes weights but multiplies all of them.
  b.diff_attn_dense = 8 * uL * d * d + 4 * uL * uL * d;
  // Three [L,d]x[d,d] projections plus one windowed pass, d-wide both sides.
  b.cross_attn = 3 * uL * d * d + 2 * d * S;
  // Recurrence touches each (frame, channel, state) three times.
  b.ssm = 3 * uL * d * n;
  std::uint64_t T = uN * uL;
  b.dense_baseline = 4 * T * d * d + 2 * T * T * d;
  std::uint64_t per_layer =
      b.diff_attn_windowed + b.cross_attn + b.ssm + 2 * uL * d * h;
  b.decoder_total = 2 * T * u64(kPoseDim) * d  // pose in/out projections
                    + 4 * uL * uN * uN * d * d // group fusion MLP
                    + b.gcn
                    + 4 * uL * d * d           // timestep MLP
                    + uL * m * d               // music projection
                    + uN * u64(cfg.temporal_layers) * per_layer;
  return b;
}

DenseBaseline::DenseBaseline(int d, std::uint64_t seed) {
  if (d < 1) throw ValueError("bench: baseline width must be positive");
  RngStream rng(seed);
  double s = 1.0 / std::sqrt(static_cast<double>(d));
  auto init = [&](std::uint64_t salt) {
    RngStream sub = rng.fork(salt);
    Tensor t = Tensor::randn(sub, {d, d});
    double* p = t.ptr();
    for (int i = 0; i < d * d; ++i) p[i] *= s;
    return t;
  };
  wq = init(1);
  wk = init(2);
  wv = init(3);
  wo = init(4);
}

Tensor DenseBaseline::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.size(1) != wq.size(0)) {
    throw ShapeError("bench: baseline wants [T," + std::to_string(wq.size(0)) + "] input");
  }
  Tensor q = ops::matmul(x, wq);
  Tensor k = ops::matmul(x, wk);
  Tensor v = ops::matmul(x, wv);
  double inv = 1.0 / std::sqrt(static_cast<double>(wq.size(0)));
  Tensor att = ops::softmax_last(ops::scale(ops::matmul(q, ops::transpose(k)), inv));
  return ops::matmul(ops::matmul(att, v), wo);
}

double fit_exponent(const std::vector<double>& sizes, const std::vector<double>& values) {
  if (sizes.size() != values.size() || sizes.size() < 2) {
    throw ValueError("bench: exponent fit needs matching series of at least two points");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] <= 0.0 || values[i] <= 0.0) {
      throw ValueError("bench: exponent fit needs positive sizes and values");
    }
    double x = std::log(sizes[i]);
    double y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double count = static_cast<double>(sizes.size());
  double denom = count * sxx - sx * sx;
  if (denom <= std::max(1e-30, 1e-12 * count * sxx)) {
    throw ValueError("bench: exponent fit needs distinct sizes");
  }
  return (count * sxy - sx * sy) / denom;
}

ScalingReport run_scaling(const ScalingConfig& sc) {
  if (sc.sizes.size() < 4) throw ValueError("bench: scaling sweep needs at least 4 sizes");
  for (std::size_t i = 0; i < sc.sizes.size(); ++i) {
    if (sc.sizes[i] < 1) throw ValueError("bench: scaling sizes must be positive");
    if (i > 0 && sc.sizes[i] <= sc.sizes[i - 1]) {
      throw ValueError("bench: scaling sizes must increase strictly");
    }
  }
  if (sc.repeats < 5) throw ValueError("bench: scaling sweep needs at least 5 repeats");
  if (sc.fixed < 1) throw ValueError("bench: fixed sweep size must be positive");

  ScalingReport r;
  r.axis = sc.axis;
  r.sizes = sc.sizes;
  NoGradGuard guard;  // time the forward math, not tape bookkeeping

  for (int size : sc.sizes) {
    int L = sc.axis == ScalingAxis::frames ? size : sc.fixed;
    int N = sc.axis == ScalingAxis::frames ? sc.fixed : size;
    DecoderConfig cfg = sc.decoder;
    cfg.dancers = N;
    if (cfg.max_dancers < N) cfg.max_dancers = N;
    cfg.validate();

    Decoder dec(cfg, sc.seed);
    RngStream rng = RngStream(sc.seed).fork(u64(L), u64(N));
    Tensor x = Tensor::randn(rng, {L, N, kPoseDim});
    Tensor music = Tensor::randn(rng, {L, cfg.music_dim});
    std::vector<int> t(L, cfg.T / 2);
    std::vector<std::array<double, 2>> start(N), end(N);
    for (int i = 0; i < N; ++i) {
      start[i] = {static_cast<double>(i), 0.0};
      end[i] = {static_cast<double>(N - 1 - i), 1.0};
    }
    SwapCode swap = dec.encode_swap(start, end);

    double sink = 0.0;
    auto time_calls = [&](auto&& call) {
      call();  // warm-up, discarded
      std::vector<double> runs;
      runs.reserve(static_cast<std::size_t>(sc.repeats));
      for (int rep = 0; rep < sc.repeats; ++rep) {
        auto t0 = std::chrono::steady_clock::now();
        call();
        auto t1 = std::chrono::steady_clock::now();
        runs.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
      return median_of(runs);
    };

    r.decoupled_seconds.push_back(
        time_calls([&] { sink += dec.forward(x, t, music, swap).ptr()[0]; }));
    DenseBaseline base(cfg.d, sc.seed);
    Tensor flat = Tensor::randn(rng, {N * L, cfg.d});
    r.dense_seconds.push_back(time_calls([&] { sink += base.forward(flat).ptr()[0]; }));
    if (!std::isfinite(sink)) throw NumericError("bench: non-finite forward output");

    FlopBreakdown fb = flop_count(cfg, L, N);
    r.decoupled_flops.push_back(fb.decoder_total);
    r.dense_flops.push_back(fb.dense_baseline);
  }

  std::vector<double> xs(sc.sizes.begin(), sc.sizes.end());
  r.decoupled_exponent = fit_exponent(xs, r.decoupled_seconds);
  r.dense_exponent = fit_exponent(xs, r.dense_seconds);
  double lo = *std::min_element(r.decoupled_seconds.begin(), r.decoupled_seconds.end());
  lo = std::min(lo, *std::min_element(r.dense_seconds.begin(), r.dense_seconds.end()));
  if (lo < 1e-6) {
    r.advisory = "fastest median under 1us; exponents may reflect timer resolution";
  }
  return r;
}

std::string scaling_json(const ScalingReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto ints = [&](const std::vector<int>& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << "]";
  };
  auto reals = [&](const std::vector<double>& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << "]";
  };
  auto counts = [&](const std::vector<std::uint64_t>& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    os << "]";
  };
  os << "{\n  \"axis\": \"" << axis_name(r.axis) << "\",\n  \"sizes\": ";
  ints(r.sizes);
  os << ",\n  \"decoupled_seconds\": ";
  reals(r.decoupled_seconds);
  os << ",\n  \"dense_seconds\": ";
  reals(r.dense_seconds);
  os << ",\n  \"decoupled_flops\": ";
  counts(r.decoupled_flops);
  os << ",\n  \"dense_flops\": ";
  counts(r.dense_flops);
  os << ",\n  \"decoupled_exponent\": " << r.decoupled_exponent;
  os << ",\n  \"dense_exponent\": " << r.dense_exponent;
  os << ",\n  \"advisory\": \"" << r.advisory << "\"\n}\n";
  return os.str();
}

std::string scaling_csv(const ScalingReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "axis,size,decoupled_seconds,dense_seconds,decoupled_flops,dense_flops\n";
  for (std::size_t i = 0; i < r.sizes.size(); ++i) {
    os << axis_name(r.axis) << "," << r.sizes[i] << "," << r.decoupled_seconds[i] << ","
       << r.dense_seconds[i] << "," << r.decoupled_flops[i] << "," << r.dense_flops[i] << "\n";
  }
  return os.str();
}

double diff_attention_sparsity(const Tensor& x, const DiffAttnParams& p, int window, bool causal,
                               double threshold) {
  if (threshold <= 0.0) throw ValueError("bench: sparsity threshold must be positive");
  if (x.rank() != 2) throw ShapeError("bench: sparsity probe input must be [L,d]");
  int L = x.size(0);
  int d = x.size(1);
  if (p.wq.rank() != 2 || p.wq.size(0) != d || p.wq.size(1) != 2 * d) {
    throw ShapeError("bench: attention projections disagree with probe width " +
                     std::to_string(d));
  }
  NoGradGuard guard;
  Tensor q = ops::matmul(x, p.wq);
  Tensor k = ops::matmul(x, p.wk);
  Tensor q1 = ops::slice(q, 1, 0, d);
  Tensor q2 = ops::slice(q, 1, d, d);
  Tensor k1 = ops::slice(k, 1, 0, d);
  Tensor k2 = ops::slice(k, 1, d, d);
  std::vector<double> a1 = ops::windowed_attention_weights(q1, k1, window, causal);
  std::vector<double> a2 = ops::windowed_attention_weights(q2, k2, window, causal);
  double lambda = p.lambda_.ptr()[0];
  std::size_t below = 0;
  for (std::size_t i = 0; i < a1.size(); ++i) {
    if (std::abs(a1[i] - lambda * a2[i]) < threshold) ++below;
  }
  return static_cast<double>(below) / (static_cast<double>(L) * static_cast<double>(L));
}

SparsityReport sparsity_probe(const Decoder& dec, const Tensor& probe, double threshold) {
  const DecoderConfig& cfg = dec.config();
  if (probe.rank() != 2 || probe.size(1) != cfg.d) {
    throw ShapeError("bench: sparsity probe must be [L," + std::to_string(cfg.d) + "]");
  }
  SparsityReport rep;
  rep.threshold = threshold;
  const ParamStore& ps = dec.params();
  for (int i = 0; i < cfg.temporal_layers; ++i) {
    std::string base = "layer." + std::to_string(i) + ".attn.";
    const Tensor* wq = ps.find(base + "wq");
    const Tensor* wk = ps.find(base + "wk");
    const Tensor* wv = ps.find(base + "wv");
    const Tensor* wo = ps.find(base + "wo");
    const Tensor* la = ps.find(base + "lambda");
    if (!wq || !wk || !wv || !wo || !la) {
      throw ValueError("bench: decoder lacks attention parameters for layer " +
                       std::to_string(i));
    }
    DiffAttnParams p;
    p.wq = *wq;
    p.wk = *wk;
    p.wv = *wv;
    p.wo = *wo;
    p.lambda_ = *la;
    rep.layer_fraction.push_back(
        diff_attention_sparsity(probe, p, cfg.window, cfg.causal, threshold));
  }
  return rep;
}

}  // namespace gdance
