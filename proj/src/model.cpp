#include "gdance/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

namespace gdance {

void DecoderConfig::validate() const {
  if (d < 2 || d % 2 != 0) throw ConfigError("latent width must be even and >= 2");
  if (temporal_layers < 1) throw ConfigError("temporal_layers must be >= 1");
  if (gcn_layers < 1) throw ConfigError("gcn_layers must be >= 1");
  if (ssm_state_dim < 1) throw ConfigError("ssm_state_dim must be >= 1");
  if (window < 0) throw ConfigError("window must be >= 0");
  if (T < 1) throw ConfigError("T must be >= 1");
  if (segment_len < 1) throw ConfigError("segment_len must be >= 1");
  if (dancers < 1) throw ConfigError("dancers must be >= 1");
  if (dancers > max_dancers) throw ConfigError("dancers exceeds max_dancers");
  if (music_dim < 1) throw ConfigError("music_dim must be >= 1");
  if (ff_hidden < 0) throw ConfigError("ff_hidden must be >= 0");
  for (double w : {weights.simple, weights.vel, weights.fk, weights.contact, weights.dist}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
}

Tensor ParamStore::add(const std::string& name, Tensor t) {
  for (const auto& [n, _] : items) {
    if (n == name) throw ValueError("duplicate parameter name: " + name);
  }
  items.emplace_back(name, t);
  return t;
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const Tensor* ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : items) t.zero_grad();
}

Tensor group_fusion(const Tensor& x, const FusionParams& p) {
  if (x.rank() != 3) throw ShapeError("fusion: input must be [L,N,d], got " + shape_str(x.shape));
  int L = x.size(0), N = x.size(1), din = x.size(2);
  if (N != p.dancers) {
    throw ShapeError("fusion: built for " + std::to_string(p.dancers) + " dancers, got " +
                     std::to_string(N));
  }
  if (p.w1.size(0) != N * din) {
    throw ShapeError("fusion: weight expects width " + std::to_string(p.w1.size(0)) + ", input " +
                     std::to_string(N * din));
  }
  int wide = p.w2.size(1);
  if (wide % N != 0) throw ShapeError("fusion: output width not divisible by dancer count");
  Tensor flat = ops::reshape(x, {L, N * din});
  Tensor h = ops::relu(ops::add(ops::matmul(flat, p.w1), p.b1));
  Tensor out = ops::add(ops::matmul(h, p.w2), p.b2);
  return ops::reshape(out, {L, N, wide / N});
}

namespace {

Tensor mse_all(const Tensor& a, const Tensor& b) {
  Tensor d = ops::sub(a, b);
  return ops::mean_all(ops::mul(d, d));
}

Tensor frame_diff(const Tensor& x) {  // [L,...] -> [L-1,...]
  int L = x.size(0);
  return ops::sub(ops::slice(x, 0, 1, L - 1), ops::slice(x, 0, 0, L - 1));
}

}  // namespace

LossBreakdown compute_losses(const Tensor& xhat, const Tensor& x0, const Skeleton& skeleton,
                             const LossWeights& w) {
  if (xhat.shape != x0.shape) {
    throw ShapeError("loss: prediction " + shape_str(xhat.shape) + " vs target " +
                     shape_str(x0.shape));
  }
  if (xhat.rank() != 3 || xhat.size(2) != kPoseDim) {
    throw ShapeError("loss: motions must be [L,N,151], got " + shape_str(xhat.shape));
  }
  int L = xhat.size(0), N = xhat.size(1);

  LossBreakdown out;
  out.simple = mse_all(xhat, x0);
  out.vel = L > 1 ? mse_all(frame_diff(xhat), frame_diff(x0)) : Tensor::zeros({1});

  Tensor pos_hat = fk_positions(ops::reshape(xhat, {L * N, kPoseDim}), skeleton);
  Tensor pos_gt = fk_positions(ops::reshape(x0, {L * N, kPoseDim}), skeleton);
  out.fk = mse_all(pos_hat, pos_gt);

  // Predicted contacts gate the predicted foot-joint velocities: feet that
  // claim ground contact must not slide.
  if (L > 1) {
    Tensor acc;
    for (int k = 0; k < kContactDim; ++k) {
      int joint = kContactJoints[static_cast<std::size_t>(k)];
      Tensor feet = ops::reshape(ops::slice(pos_hat, 1, 3 * joint, 3), {L, N, 3});
      Tensor vel = frame_diff(feet);
      Tensor gate = ops::slice(ops::slice(xhat, 2, kContactOffset + k, 1), 0, 0, L - 1);
      Tensor gv = ops::mul(vel, gate);
      Tensor term = ops::sum_all(ops::mul(gv, gv));
      acc = k == 0 ? term : ops::add(acc, term);
    }
    out.contact = ops::scale(acc, 1.0 / (static_cast<double>(L - 1) * N));
  } else {
    out.contact = Tensor::zeros({1});
  }

  // Pairwise relative-root consistency, mean over frames and unordered pairs.
  if (N >= 2) {
    Tensor roots_hat = ops::slice(xhat, 2, kRootOffset, 3);
    Tensor roots_gt = ops::slice(x0, 2, kRootOffset, 3);
    Tensor acc;
    int pairs = 0;
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        Tensor rel_hat = ops::sub(ops::slice(roots_hat, 1, i, 1), ops::slice(roots_hat, 1, j, 1));
        Tensor rel_gt = ops::sub(ops::slice(roots_gt, 1, i, 1), ops::slice(roots_gt, 1, j, 1));
        Tensor err = ops::sub(rel_hat, rel_gt);
        Tensor term = ops::sum_all(ops::mul(err, err));
        acc = pairs == 0 ? term : ops::add(acc, term);
        ++pairs;
      }
    }
    out.dist = ops::scale(acc, 1.0 / (static_cast<double>(L) * pairs));
  } else {
    out.dist = Tensor::zeros({1});
  }

  out.total = ops::add(
      ops::add(ops::add(ops::scale(out.simple, w.simple), ops::scale(out.vel, w.vel)),
               ops::add(ops::scale(out.fk, w.fk), ops::scale(out.contact, w.contact))),
      ops::scale(out.dist, w.dist));
  return out;
}

Decoder::Decoder(const DecoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  sched_ = make_schedule(cfg_.T, cfg_.schedule);
  RngStream rng(seed);

  auto init = [&](const std::string& name, const std::vector<int>& shape, double scale) {
    Tensor t = Tensor::randn(rng, shape, true);
    for (double& v : *t.data) v *= scale;
    return params_.add(name, t);
  };
  auto constant = [&](const std::string& name, const std::vector<int>& shape, double value) {
    return params_.add(name, Tensor::full(shape, value, true));
  };

  int d = cfg_.d, n = cfg_.ssm_state_dim, N = cfg_.dancers, hid = cfg_.hidden();
  in_w_ = init("in.w", {kPoseDim, d}, 1.0 / std::sqrt(static_cast<double>(kPoseDim)));
  in_b_ = constant("in.b", {1, d}, 0.0);

  fusion_.dancers = N;
  int fw = N * d;
  fusion_.w1 = init("fusion.w1", {fw, 2 * fw}, 1.0 / std::sqrt(static_cast<double>(fw)));
  fusion_.b1 = constant("fusion.b1", {1, 2 * fw}, 0.0);
  fusion_.w2 = init("fusion.w2", {2 * fw, fw}, 1.0 / std::sqrt(2.0 * fw));
  fusion_.b2 = constant("fusion.b2", {1, fw}, 0.0);

  for (int g = 0; g < cfg_.gcn_layers; ++g) {
    gcn_w_.push_back(
        init("gcn." + std::to_string(g) + ".w", {d, d}, 1.0 / std::sqrt(static_cast<double>(d))));
  }

  music_w_ = init("music.w", {cfg_.music_dim, d}, 1.0 / std::sqrt(static_cast<double>(cfg_.music_dim)));
  music_b_ = constant("music.b", {1, d}, 0.0);

  tmlp_.w1 = init("time.w1", {d, 2 * d}, 1.0 / std::sqrt(static_cast<double>(d)));
  tmlp_.b1 = constant("time.b1", {1, 2 * d}, 0.0);
  tmlp_.w2 = init("time.w2", {2 * d, d}, 1.0 / std::sqrt(2.0 * d));
  tmlp_.b2 = constant("time.b2", {1, d}, 0.0);

  int slots = 2 * cfg_.max_dancers * cfg_.max_dancers;
  swap_table_ = init("swap.table", {slots, d}, 1.0 / std::sqrt(static_cast<double>(d)));

  for (int i = 0; i < cfg_.temporal_layers; ++i) {
    std::string p = "layer." + std::to_string(i) + ".";
    DecoderLayer lay;
    double sd = 1.0 / std::sqrt(static_cast<double>(d));
    lay.params.attn.wq = init(p + "attn.wq", {d, 2 * d}, sd);
    lay.params.attn.wk = init(p + "attn.wk", {d, 2 * d}, sd);
    lay.params.attn.wv = init(p + "attn.wv", {d, 2 * d}, sd);
    lay.params.attn.wo = init(p + "attn.wo", {2 * d, d}, 1.0 / std::sqrt(2.0 * d));
    lay.params.attn.lambda_ = constant(p + "attn.lambda", {1}, 0.5);
    lay.params.cross.wq = init(p + "cross.wq", {d, d}, sd);
    lay.params.cross.wk = init(p + "cross.wk", {d, d}, sd);
    lay.params.cross.wv = init(p + "cross.wv", {d, d}, sd);

    std::vector<double> alog(static_cast<std::size_t>(d) * n);
    for (int j = 0; j < d; ++j)
      for (int s = 0; s < n; ++s) alog[static_cast<std::size_t>(j) * n + s] = std::log(1.0 + s);
    lay.a_log = params_.add(p + "ssm.a_log", Tensor::from({d, n}, alog, true));
    lay.params.ssm.b = init(p + "ssm.b", {d, n}, 1.0 / std::sqrt(static_cast<double>(n)));
    lay.params.ssm.c = init(p + "ssm.c", {d, n}, 1.0 / std::sqrt(static_cast<double>(n)));
    lay.delta_log = constant(p + "ssm.delta_log", {d, 1}, std::log(0.1));

    lay.params.ff_w1 = init(p + "ff.w1", {d, hid}, sd);
    lay.params.ff_b1 = constant(p + "ff.b1", {1, hid}, 0.0);
    lay.params.ff_w2 = init(p + "ff.w2", {hid, d}, 1.0 / std::sqrt(static_cast<double>(hid)));
    lay.params.ff_b2 = constant(p + "ff.b2", {1, d}, 0.0);
    lay.params.ln1_g = constant(p + "ln1.g", {1, d}, 1.0);
    lay.params.ln1_b = constant(p + "ln1.b", {1, d}, 0.0);
    lay.params.ln2_g = constant(p + "ln2.g", {1, d}, 1.0);
    lay.params.ln2_b = constant(p + "ln2.b", {1, d}, 0.0);
    lay.params.ln3_g = constant(p + "ln3.g", {1, d}, 1.0);
    lay.params.ln3_b = constant(p + "ln3.b", {1, d}, 0.0);
    lay.params.ln4_g = constant(p + "ln4.g", {1, d}, 1.0);
    lay.params.ln4_b = constant(p + "ln4.b", {1, d}, 0.0);
    layers_.push_back(std::move(lay));
  }

  // Zero output weight with a rest-pose bias: the initial prediction is a
  // valid pose (identity rotations), so kinematic losses are defined from
  // step one.
  out_w_ = constant("out.w", {d, kPoseDim}, 0.0);
  std::vector<double> rest(kPoseDim, 0.0);
  for (int j = 0; j < kJoints; ++j) {
    rest[static_cast<std::size_t>(j) * 6 + 0] = 1.0;
    rest[static_cast<std::size_t>(j) * 6 + 4] = 1.0;
  }
  for (int k = 0; k < kContactDim; ++k) rest[static_cast<std::size_t>(kContactOffset) + k] = 0.5;
  out_b_ = params_.add("out.b", Tensor::from({1, kPoseDim}, rest, true));
}

Tensor Decoder::forward(const Tensor& x_t, const std::vector<int>& t, const Tensor& music,
                        const SwapCode& swap) const {
  int N = cfg_.dancers, d = cfg_.d;
  if (x_t.rank() != 3 || x_t.size(1) != N || x_t.size(2) != kPoseDim) {
    throw ShapeError("decoder: input must be [L," + std::to_string(N) + ",151], got " +
                     shape_str(x_t.shape));
  }
  int L = x_t.size(0);
  if (static_cast<int>(t.size()) != L) {
    throw ShapeError("decoder: " + std::to_string(t.size()) + " timesteps for " +
                     std::to_string(L) + " frames");
  }
  if (music.rank() != 2 || music.size(0) != L || music.size(1) != cfg_.music_dim) {
    throw ShapeError("decoder: music must be [" + std::to_string(L) + "," +
                     std::to_string(cfg_.music_dim) + "], got " + shape_str(music.shape));
  }
  if (swap.embedding.rank() != 2 || swap.embedding.size(1) != d) {
    throw ShapeError("decoder: swap embedding width mismatch");
  }

  // Ground positions feed the proximity graph as plain constants.
  std::vector<double> roots(static_cast<std::size_t>(L) * N * 2);
  for (int l = 0; l < L; ++l) {
    for (int m = 0; m < N; ++m) {
      const double* row = x_t.ptr() + (static_cast<std::size_t>(l) * N + m) * kPoseDim;
      roots[(static_cast<std::size_t>(l) * N + m) * 2 + 0] = row[kRootOffset + 0];
      roots[(static_cast<std::size_t>(l) * N + m) * 2 + 1] = row[kRootOffset + 1];
    }
  }

  Tensor h = ops::add(ops::matmul(ops::reshape(x_t, {L * N, kPoseDim}), in_w_), in_b_);
  h = ops::reshape(h, {L, N, d});
  h = group_fusion(h, fusion_);
  SpatialOptions sopt;
  sopt.layers = cfg_.gcn_layers;
  h = spatial_block(h, roots, gcn_w_, sopt);

  std::vector<double> td(t.begin(), t.end());
  Tensor cond = ops::add(timestep_embed(td, cfg_.T, tmlp_), swap.embedding);
  Tensor mus = ops::add(ops::matmul(music, music_w_), music_b_);
  AlignmentMask mask =
      build_alignment_mask(L, cfg_.window, cfg_.causal ? MaskMode::causal : MaskMode::symmetric);

  std::vector<Tensor> streams;
  streams.reserve(N);
  for (int m = 0; m < N; ++m) {
    Tensor s = ops::reshape(ops::slice(h, 1, m, 1), {L, d});
    s = ops::add(s, cond);
    for (const DecoderLayer& lay : layers_) {
      TemporalLayerParams lp = lay.params;
      lp.ssm.a = ops::neg(ops::exp(lay.a_log));
      lp.ssm.delta = ops::exp(lay.delta_log);
      s = temporal_layer(s, mus, mask, lp, cfg_.window, cfg_.causal);
    }
    streams.push_back(ops::reshape(s, {L, 1, d}));
  }
  Tensor stacked = ops::concat(streams, 1);
  Tensor out = ops::add(ops::matmul(ops::reshape(stacked, {L * N, d}), out_w_), out_b_);
  return ops::reshape(out, {L, N, kPoseDim});
}

SwapCode Decoder::encode_swap(const std::vector<std::array<double, 2>>& start,
                              const std::vector<std::array<double, 2>>& end) const {
  return swap_mode_encode(start, end, swap_table_, cfg_.max_dancers);
}

SwapCode Decoder::encode_swap(const GroupMotion& motion) const {
  std::vector<std::array<double, 2>> start(motion.dancers), end(motion.dancers);
  for (int n = 0; n < motion.dancers; ++n) {
    Pose a = motion.pose(0, n);
    Pose b = motion.pose(motion.frames - 1, n);
    start[n] = {a.root[0], a.root[1]};
    end[n] = {b.root[0], b.root[1]};
  }
  return encode_swap(start, end);
}

DenoiseFn Decoder::denoiser(const SwapCode& swap) const {
  return [this, swap](const Tensor& x, const Tensor& music, const std::vector<int>& t) {
    int L = x.size(0);
    Tensor x3 = ops::reshape(x, {L, cfg_.dancers, kPoseDim});
    Tensor out = forward(x3, t, music, swap);
    return ops::reshape(out, {L, cfg_.dancers * kPoseDim});
  };
}

void Adam::step(ParamStore& params) {
  if (m_.empty()) {
    m_.resize(params.items.size());
    v_.resize(params.items.size());
    for (std::size_t i = 0; i < params.items.size(); ++i) {
      m_[i].assign(params.items[i].second.numel(), 0.0);
      v_[i].assign(params.items[i].second.numel(), 0.0);
    }
  }
  if (m_.size() != params.items.size()) throw ValueError("adam: parameter set changed size");
  ++steps_;
  double bc1 = 1.0 - std::pow(beta1, steps_);
  double bc2 = 1.0 - std::pow(beta2, steps_);
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    Tensor& t = params.items[i].second;
    if (m_[i].size() != t.numel()) throw ValueError("adam: parameter shape changed");
    double* p = t.ptr();
    for (std::size_t k = 0; k < t.numel(); ++k) {
      double g = t.grad ? (*t.grad)[k] : 0.0;
      m_[i][k] = beta1 * m_[i][k] + (1.0 - beta1) * g;
      v_[i][k] = beta2 * v_[i][k] + (1.0 - beta2) * g * g;
      double mhat = m_[i][k] / bc1;
      double vhat = v_[i][k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

TrainResult train_loop(Decoder& dec, const std::vector<std::pair<GroupMotion, MusicTrack>>& data,
                       const TrainConfig& tc) {
  if (data.empty()) throw ValueError("train: empty dataset");
  const DecoderConfig& cfg = dec.config();
  for (const auto& [gm, mus] : data) {
    gm.validate();
    mus.validate();
    if (gm.dancers != cfg.dancers) {
      throw ShapeError("train: sequence has " + std::to_string(gm.dancers) + " dancers, model " +
                       std::to_string(cfg.dancers));
    }
    if (mus.dim != cfg.music_dim || mus.frames != gm.frames) {
      throw ShapeError("train: music track does not match motion length or width");
    }
  }
  Skeleton skel = Skeleton::standard();
  RngStream rng(tc.seed);
  Adam opt;
  opt.lr = tc.lr;
  TrainResult res;
  const char* names[] = {"simple", "vel", "fk", "contact", "dist", "total"};

  for (int step = 1; step <= tc.steps; ++step) {
    const auto& [gm, mus] = data[rng.next_u64() % data.size()];
    int L = gm.frames, N = gm.dancers;
    Tensor x0 = to_tensor(gm);
    Tensor music = Tensor::from({L, mus.dim}, mus.features);

    int segments = (L + cfg.segment_len - 1) / cfg.segment_len;
    int kappa = tns_kappa(cfg.T, segments);
    int max_phase = cfg.T + (segments - 1) * kappa;
    int phase = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_phase + 1));
    NoisePlan plan = tns_levels(phase, segments, cfg.T, cfg.segment_len);

    Tensor x_t = tns_noise(ops::reshape(x0, {L, N * kPoseDim}), plan, dec.schedule(), rng);
    std::vector<int> t(L);
    for (int l = 0; l < L; ++l) t[l] = plan.levels[l / cfg.segment_len];

    SwapCode swap = dec.encode_swap(gm);
    Tensor xhat = dec.forward(ops::reshape(x_t, {L, N, kPoseDim}), t, music, swap);
    LossBreakdown loss = compute_losses(xhat, x0, skel, cfg.weights);

    LossRow row;
    row.step = step;
    double vals[6] = {loss.simple.item(), loss.vel.item(),     loss.fk.item(),
                      loss.contact.item(), loss.dist.item(),   loss.total.item()};
    for (int k = 0; k < 6; ++k) {
      if (!std::isfinite(vals[k])) {
        throw NumericError("train: non-finite " + std::string(names[k]) + " loss at step " +
                           std::to_string(step));
      }
    }
    row.simple = vals[0];
    row.vel = vals[1];
    row.fk = vals[2];
    row.contact = vals[3];
    row.dist = vals[4];
    row.total = vals[5];
    res.curve.push_back(row);

    loss.total.backward();
    opt.step(dec.params());
    dec.params().zero_grad();
  }
  if (!tc.curve_path.empty()) write_loss_csv(tc.curve_path, res.curve);
  return res;
}

namespace {

void put_u8(std::string& s, std::uint8_t v) { s.push_back(static_cast<char>(v)); }

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& s, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(s, bits);
}

struct CkptReader {
  std::string buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw IoError(std::string("truncated payload while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    return v;
  }
  float f32(const char* what) {
    std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::string buf = "GDCK";
  put_u32(buf, static_cast<std::uint32_t>(params.items.size()));
  for (const auto& [name, t] : params.items) {
    if (name.size() > 0xffff) throw ValueError("checkpoint: parameter name too long");
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    put_u8(buf, static_cast<std::uint8_t>(t.rank()));
    for (int dim : t.shape) put_u32(buf, static_cast<std::uint32_t>(dim));
    for (double v : *t.data) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  CkptReader r;
  r.buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  r.need(4, "magic");
  if (r.buf.compare(0, 4, "GDCK") != 0) throw IoError("bad magic, expected GDCK: " + path);
  r.pos = 4;
  std::uint32_t count = r.u32("parameter count");
  if (count != params.items.size()) {
    throw IoError("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                  std::to_string(params.items.size()));
  }
  for (auto& [name, t] : params.items) {
    std::uint16_t len = r.u16("name length");
    r.need(len, "name");
    std::string got = r.buf.substr(r.pos, len);
    r.pos += len;
    if (got != name) {
      throw IoError("checkpoint parameter '" + got + "' where model expects '" + name + "'");
    }
    std::uint8_t rank = r.u8("rank");
    if (rank != t.rank()) throw IoError("rank mismatch for parameter " + name);
    for (int a = 0; a < rank; ++a) {
      std::uint32_t dim = r.u32("dim");
      if (static_cast<int>(dim) != t.shape[static_cast<std::size_t>(a)]) {
        throw IoError("shape mismatch for parameter " + name);
      }
    }
    for (double& v : *t.data) v = static_cast<double>(r.f32("payload"));
  }
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve) {
  std::ostringstream s;
  s << "step,simple,vel,fk,contact,dist,total\n";
  s << std::setprecision(17);
  for (const LossRow& r : curve) {
    s << r.step << ',' << r.simple << ',' << r.vel << ',' << r.fk << ',' << r.contact << ','
      << r.dist << ',' << r.total << '\n';
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open loss curve for writing: " + path);
  out << s.str();
  if (!out) throw IoError("failed writing loss curve: " + path);
}

}  // namespace gdance
