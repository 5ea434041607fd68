#include "gdance/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace gdance {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

ScheduleKind schedule_kind_from(const std::string& name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind: " + name);
}

double Schedule::alpha_bar(int t) const {
  if (t < 0 || t > T) {
    throw ValueError("schedule: timestep " + std::to_string(t) + " outside [0," +
                     std::to_string(T) + "]");
  }
  return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t) - 1];
}

Schedule make_schedule(int T, ScheduleKind kind) {
  if (T < 1) throw ValueError("schedule: T must be >= 1");
  Schedule s;
  s.T = T;
  s.betas.resize(T);
  if (kind == ScheduleKind::linear) {
    const double lo = 1e-4, hi = 0.02;
    for (int t = 1; t <= T; ++t) {
      s.betas[t - 1] = T == 1 ? lo : lo + (hi - lo) * (t - 1) / (T - 1);
    }
  } else {
    // Squared-cosine alpha-bar curve; betas derived from consecutive ratios.
    const double off = 0.008;
    auto f = [&](double t) {
      double u = (t / T + off) / (1.0 + off) * (M_PI / 2.0);
      double c = std::cos(u);
      return c * c;
    };
    double f0 = f(0.0);
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      double ab = f(static_cast<double>(t)) / f0;
      s.betas[t - 1] = std::min(1.0 - ab / prev, 0.999);
      prev = ab;
    }
  }
  s.alphas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    if (!(s.betas[t] > 0.0 && s.betas[t] < 1.0)) {
      throw NumericError("schedule: beta out of (0,1) at step " + std::to_string(t + 1));
    }
    s.alphas[t] = 1.0 - s.betas[t];
    prod *= s.alphas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const Schedule& sched) {
  if (noise.shape != x0.shape) {
    throw ShapeError("q_sample: noise " + shape_str(noise.shape) + " vs x0 " +
                     shape_str(x0.shape));
  }
  double ab = sched.alpha_bar(t);
  return ops::add(ops::scale(x0, std::sqrt(ab)), ops::scale(noise, std::sqrt(1.0 - ab)));
}

int tns_kappa(int T, int segments) {
  if (T < 1 || segments < 1) throw ValueError("staircase: T and segment count must be >= 1");
  return (T + segments - 1) / segments;
}

NoisePlan tns_levels(int phase, int segments, int T, int segment_len) {
  int kappa = tns_kappa(T, segments);
  int max_phase = T + (segments - 1) * kappa;
  if (phase < 0 || phase > max_phase) {
    throw ValueError("staircase: phase " + std::to_string(phase) + " outside [0," +
                     std::to_string(max_phase) + "]");
  }
  NoisePlan plan;
  plan.segments = segments;
  plan.segment_len = segment_len;
  plan.phase = phase;
  plan.levels.resize(segments);
  for (int s = 0; s < segments; ++s) {
    plan.levels[s] = std::clamp(phase - (segments - 1 - s) * kappa, 0, T);
  }
  return plan;
}

Tensor tns_noise(const Tensor& x0, const NoisePlan& plan, const Schedule& sched, RngStream& rng) {
  if (x0.rank() != 2) throw ShapeError("staircase: motion must be [L,D], got " + shape_str(x0.shape));
  if (plan.segment_len < 1) throw ValueError("staircase: plan has no segment length");
  int L = x0.size(0);
  int D = x0.size(1);
  int implied = (L + plan.segment_len - 1) / plan.segment_len;
  if (implied != plan.segments) {
    throw ShapeError("staircase: motion spans " + std::to_string(implied) + " segments, plan has " +
                     std::to_string(plan.segments));
  }
  std::vector<double> out(x0.numel());
  for (int s = 0; s < plan.segments; ++s) {
    int lo = s * plan.segment_len;
    int hi = std::min(L, lo + plan.segment_len);
    int tau = plan.levels[s];
    if (tau == 0) {
      std::copy(x0.ptr() + static_cast<std::size_t>(lo) * D,
                x0.ptr() + static_cast<std::size_t>(hi) * D,
                out.begin() + static_cast<std::size_t>(lo) * D);
      continue;
    }
    double sa = std::sqrt(sched.alpha_bar(tau));
    double sb = std::sqrt(1.0 - sched.alpha_bar(tau));
    for (std::size_t i = static_cast<std::size_t>(lo) * D; i < static_cast<std::size_t>(hi) * D;
         ++i) {
      out[i] = sa * x0.ptr()[i] + sb * rng.next_gaussian();
    }
  }
  return Tensor::from(x0.shape, std::move(out));
}

double NoiseField::gaussian(std::uint64_t frame, std::uint64_t level, std::uint64_t channel) const {
  RngStream s = base_.fork(frame, level, channel);
  return s.next_gaussian();
}

Tensor ddpm_step(const DenoiseFn& model, const Tensor& x_t, const Tensor& music,
                 const std::vector<int>& t, const Schedule& sched, const NoiseField& noise,
                 std::uint64_t frame0) {
  if (x_t.rank() != 2) throw ShapeError("ddpm: x_t must be [L,D], got " + shape_str(x_t.shape));
  int L = x_t.size(0);
  int D = x_t.size(1);
  if (static_cast<int>(t.size()) != L) {
    throw ShapeError("ddpm: timestep vector length " + std::to_string(t.size()) + " vs " +
                     std::to_string(L) + " frames");
  }
  bool any = false;
  for (int tl : t) {
    if (tl < 0 || tl > sched.T) throw ValueError("ddpm: timestep out of range");
    any = any || tl > 0;
  }
  if (!any) throw ValueError("ddpm: no frame has a positive timestep to step");

  Tensor xhat = model(x_t, music, t);
  if (xhat.shape != x_t.shape) {
    throw ShapeError("ddpm: model output " + shape_str(xhat.shape) + " vs input " +
                     shape_str(x_t.shape));
  }
  std::vector<double> out(x_t.numel());
  for (int l = 0; l < L; ++l) {
    const double* xr = x_t.ptr() + static_cast<std::size_t>(l) * D;
    const double* hr = xhat.ptr() + static_cast<std::size_t>(l) * D;
    double* orow = out.data() + static_cast<std::size_t>(l) * D;
    int tl = t[l];
    if (tl == 0) {
      std::copy(xr, xr + D, orow);
      continue;
    }
    if (tl == 1) {
      // Degenerate final posterior: mean is exactly x0_hat, variance 0.
      std::copy(hr, hr + D, orow);
      continue;
    }
    double ab = sched.alpha_bar(tl);
    double ab_prev = sched.alpha_bar(tl - 1);
    double beta = sched.betas[static_cast<std::size_t>(tl) - 1];
    double alpha = sched.alphas[static_cast<std::size_t>(tl) - 1];
    double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    double cx = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
    double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
    for (int c = 0; c < D; ++c) {
      double z = noise.gaussian(frame0 + static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(tl),
                                static_cast<std::uint64_t>(c));
      orow[c] = c0 * hr[c] + cx * xr[c] + sigma * z;
      if (!std::isfinite(orow[c])) {
        throw NumericError("ddpm: non-finite sample at frame " + std::to_string(l));
      }
    }
  }
  return Tensor::from(x_t.shape, std::move(out));
}

SampleResult sample_offline(const DenoiseFn& model, const Tensor& music, int dim,
                            const Schedule& sched, std::uint64_t seed) {
  if (music.rank() != 2) throw ShapeError("sample: music must be [L,dm], got " + shape_str(music.shape));
  if (dim < 1) throw ValueError("sample: motion dim must be >= 1");
  NoGradGuard ng;
  NoiseField field(seed);
  int L = music.size(0);
  double start = now_seconds();
  std::vector<double> init(static_cast<std::size_t>(L) * dim);
  for (int l = 0; l < L; ++l)
    for (int c = 0; c < dim; ++c)
      init[static_cast<std::size_t>(l) * dim + c] = field.gaussian(l, 0, c);
  Tensor x = Tensor::from({L, dim}, std::move(init));
  SampleResult res;
  for (int t = sched.T; t >= 1; --t) {
    x = ddpm_step(model, x, music, std::vector<int>(L, t), sched, field, 0);
    ++res.model_calls;
  }
  res.motion = x;
  res.seconds = now_seconds() - start;
  return res;
}

SampleResult sample_tns(const DenoiseFn& model, const Tensor& music, int dim,
                        const Schedule& sched, int s_window, int segment_len, std::uint64_t seed) {
  if (music.rank() != 2) throw ShapeError("sample: music must be [L,dm], got " + shape_str(music.shape));
  if (dim < 1 || segment_len < 1) throw ValueError("sample: dim and segment length must be >= 1");
  NoGradGuard ng;
  NoiseField field(seed);
  int L = music.size(0);
  int M = (L + segment_len - 1) / segment_len;
  int kappa = tns_kappa(sched.T, s_window);
  double start = now_seconds();

  std::vector<double> buf(static_cast<std::size_t>(L) * dim);
  for (int l = 0; l < L; ++l)
    for (int c = 0; c < dim; ++c)
      buf[static_cast<std::size_t>(l) * dim + c] = field.gaussian(l, 0, c);
  std::vector<int> level(M, sched.T);

  SampleResult res;
  int total_sweeps = (M - 1) * kappa + sched.T;
  for (int sweep = 1; sweep <= total_sweeps; ++sweep) {
    // Segment s starts descending at sweep s*kappa + 1.
    int last = std::min(M - 1, (sweep - 1) / kappa);
    int frames = std::min(L, (last + 1) * segment_len);
    std::vector<int> t(frames, 0);
    for (int s = 0; s <= last; ++s) {
      if (level[s] < 1) continue;
      int lo = s * segment_len, hi = std::min(L, lo + segment_len);
      for (int l = lo; l < hi; ++l) t[l] = level[s];
    }
    Tensor xw = Tensor::from({frames, dim},
                             std::vector<double>(buf.begin(),
                                                 buf.begin() + static_cast<std::size_t>(frames) * dim));
    Tensor mw = ops::slice(music, 0, 0, frames);
    Tensor stepped = ddpm_step(model, xw, mw, t, sched, field, 0);
    ++res.model_calls;
    std::copy(stepped.ptr(), stepped.ptr() + stepped.numel(), buf.begin());
    for (int s = 0; s <= last; ++s)
      if (level[s] > 0) --level[s];
  }
  res.motion = Tensor::from({L, dim}, std::move(buf));
  res.seconds = now_seconds() - start;
  return res;
}

StreamEngine::StreamEngine(DenoiseFn model, const Schedule& sched, const StreamConfig& cfg,
                           std::uint64_t seed)
    : model_(std::move(model)), sched_(sched), cfg_(cfg), noise_(seed) {
  if (cfg.dim < 1) throw ValueError("stream: motion dim must be >= 1");
  if (cfg.segment_len < 1 || cfg.s_window < 1) {
    throw ValueError("stream: segment length and window must be >= 1");
  }
  if (cfg.history_segments < 0) throw ValueError("stream: history size must be >= 0");
  kappa_ = tns_kappa(sched.T, cfg.s_window);
}

void StreamEngine::push_music(const Tensor& rows) {
  if (finished_) throw ValueError("stream: music pushed after finish");
  if (rows.rank() != 2) throw ShapeError("stream: music rows must be [n,dm], got " + shape_str(rows.shape));
  if (music_dim_ < 0) music_dim_ = rows.size(1);
  if (rows.size(1) != music_dim_) {
    throw ShapeError("stream: music width changed from " + std::to_string(music_dim_) + " to " +
                     std::to_string(rows.size(1)));
  }
  music_rows_.insert(music_rows_.end(), rows.ptr(), rows.ptr() + rows.numel());
  music_frames_ += rows.size(0);
}

void StreamEngine::finish() { finished_ = true; }

bool StreamEngine::done() const {
  return finished_ && window_.empty() && music_frames_ == static_cast<int>(next_frame_);
}

bool StreamEngine::admission_due() const {
  int pending = music_frames_ - static_cast<int>(next_frame_);
  if (pending <= 0) return false;
  // Full segments admit any time; a short tail only once the source is done.
  return pending >= cfg_.segment_len || finished_;
}

void StreamEngine::admit_next() {
  int pending = music_frames_ - static_cast<int>(next_frame_);
  Segment seg;
  seg.len = std::min(cfg_.segment_len, pending);
  seg.level = sched_.T;
  seg.frame0 = next_frame_;
  seg.x.resize(static_cast<std::size_t>(seg.len) * cfg_.dim);
  for (int l = 0; l < seg.len; ++l)
    for (int c = 0; c < cfg_.dim; ++c)
      seg.x[static_cast<std::size_t>(l) * cfg_.dim + c] =
          noise_.gaussian(seg.frame0 + static_cast<std::uint64_t>(l), 0, c);
  window_.push_back(std::move(seg));
  ++admitted_;
  next_frame_ += static_cast<std::uint64_t>(window_.back().len);
}

void StreamEngine::sweep() {
  bool any = false;
  for (const Segment& s : window_) any = any || s.level >= 1;
  if (!any) return;

  int frames = 0;
  for (const Segment& s : history_) frames += s.len;
  for (const Segment& s : window_) frames += s.len;
  std::uint64_t frame0 = history_.empty() ? window_.front().frame0 : history_.front().frame0;

  std::vector<double> xbuf;
  xbuf.reserve(static_cast<std::size_t>(frames) * cfg_.dim);
  std::vector<int> t;
  t.reserve(frames);
  for (const Segment& s : history_) {
    xbuf.insert(xbuf.end(), s.x.begin(), s.x.end());
    t.insert(t.end(), s.len, 0);
  }
  for (const Segment& s : window_) {
    xbuf.insert(xbuf.end(), s.x.begin(), s.x.end());
    t.insert(t.end(), s.len, s.level);
  }
  Tensor xw = Tensor::from({frames, cfg_.dim}, std::move(xbuf));
  Tensor mw = Tensor::from({frames, music_dim_},
                           std::vector<double>(music_rows_.begin() + frame0 * music_dim_,
                                               music_rows_.begin() +
                                                   (frame0 + frames) * music_dim_));
  Tensor stepped = ddpm_step(model_, xw, mw, t, sched_, noise_, frame0);

  int row = 0;
  for (const Segment& s : history_) row += s.len;
  for (Segment& s : window_) {
    std::copy(stepped.ptr() + static_cast<std::size_t>(row) * cfg_.dim,
              stepped.ptr() + static_cast<std::size_t>(row + s.len) * cfg_.dim, s.x.begin());
    row += s.len;
    if (s.level > 0) --s.level;
  }
}

bool StreamEngine::tick(std::vector<Tensor>& out) {
  if (done()) return false;
  if (admission_due()) admit_next();
  if (window_.empty()) return false;  // nothing active: waiting for music

  for (int i = 0; i < kappa_; ++i) sweep();
  ++ticks_;

  while (!window_.empty() && window_.front().level == 0) {
    Segment seg = std::move(window_.front());
    window_.erase(window_.begin());
    out.push_back(Tensor::from({seg.len, cfg_.dim}, seg.x));
    ++emitted_;
    history_.push_back(std::move(seg));
    while (static_cast<int>(history_.size()) > cfg_.history_segments) {
      history_.erase(history_.begin());
    }
  }
  return true;
}

}  // namespace gdance
