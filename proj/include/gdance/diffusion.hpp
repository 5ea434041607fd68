#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gdance/tensor.hpp"

namespace gdance {

enum class ScheduleKind { linear, cosine };
ScheduleKind schedule_kind_from(const std::string& name);  // ConfigError on unknown names

// Variance schedule. Step indices run t = 1..T; betas[t-1] is the step-t
// variance increment and alpha_bar(t) the cumulative signal fraction, with
// alpha_bar(0) = 1 exactly (clean data).
struct Schedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  double alpha_bar(int t) const;
};
Schedule make_schedule(int T, ScheduleKind kind);

// Forward noising: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. t = 0 returns x0.
Tensor q_sample(const Tensor& x0, int t, const Tensor& noise, const Schedule& sched);

// Staircase noise plan over S segments: tau_s = clamp(p - (S-1-s) kappa, 0, T)
// with kappa = ceil(T/S). Later segments carry more noise; dropping the phase
// by kappa advances every active segment one rung.
struct NoisePlan {
  int segments = 0;
  int segment_len = 0;
  int phase = 0;
  std::vector<int> levels;
};
int tns_kappa(int T, int segments);
NoisePlan tns_levels(int phase, int segments, int T, int segment_len = 0);

// Applies q_sample segment-wise at each segment's own level, drawing fresh
// noise from rng. Level-0 segments are copied through bit-exactly.
Tensor tns_noise(const Tensor& x0, const NoisePlan& plan, const Schedule& sched, RngStream& rng);

// Deterministic noise addressed by (frame, level, channel): reproducible
// across offline and streaming evaluation orders.
class NoiseField {
 public:
  explicit NoiseField(std::uint64_t seed) : base_(seed) {}
  double gaussian(std::uint64_t frame, std::uint64_t level, std::uint64_t channel) const;

 private:
  RngStream base_;
};

// Denoiser interface: maps (x_t, per-frame conditions, per-frame timesteps)
// to the predicted clean signal x0_hat. Frames with t = 0 are clean context.
using DenoiseFn = std::function<Tensor(const Tensor& x, const Tensor& music,
                                       const std::vector<int>& t)>;

// One reverse step on every frame with t >= 1: posterior mean from x0_hat and
// x_t, variance beta_tilde, step noise keyed (frame0 + l, t_l, channel).
// Frames at t = 0 pass through bit-exactly; an all-zero t vector is an error,
// as is any t outside [0, T]. The t = 1 step adds no noise.
Tensor ddpm_step(const DenoiseFn& model, const Tensor& x_t, const Tensor& music,
                 const std::vector<int>& t, const Schedule& sched, const NoiseField& noise,
                 std::uint64_t frame0 = 0);

struct SampleResult {
  Tensor motion;
  double seconds = 0.0;
  int model_calls = 0;
};

// Classic ancestral sampling, all frames sharing one timestep T..1.
SampleResult sample_offline(const DenoiseFn& model, const Tensor& music, int dim,
                            const Schedule& sched, std::uint64_t seed);

// Full-sequence staircase sampling: the global plan over all segments with
// kappa = ceil(T / s_window), swept one level per pass so segment s descends
// from T starting at sweep s*kappa + 1. The streaming engine evaluates the
// same schedule lazily; with a causal model both paths step identical frames
// with identical noise keys.
SampleResult sample_tns(const DenoiseFn& model, const Tensor& music, int dim,
                        const Schedule& sched, int s_window, int segment_len, std::uint64_t seed);

struct StreamConfig {
  int dim = 0;            // motion channels per frame
  int segment_len = 30;   // frames per segment (final one may be short)
  int s_window = 4;       // pipeline depth: max segments in flight
  int history_segments = 4;  // emitted segments kept as clean model context
};

// Incremental evaluator of the staircase schedule. Music rows arrive via
// push_music; each tick admits the next due segment (at level T), runs kappa
// denoise sweeps over the active window, then emits the front segment if it
// reached level 0. finish() switches to flush mode: remaining segments drain
// without new admissions. Emission is strictly in order, each segment once,
// and the first segment appears after at most s_window ticks.
class StreamEngine {
 public:
  StreamEngine(DenoiseFn model, const Schedule& sched, const StreamConfig& cfg,
               std::uint64_t seed);

  void push_music(const Tensor& rows);  // [n, music_dim]
  void finish();

  // Runs one tick; emitted segments are appended to out. Returns false when
  // the engine is done or must wait for more music.
  bool tick(std::vector<Tensor>& out);

  bool done() const;
  int ticks_run() const { return ticks_; }
  int emitted_segments() const { return emitted_; }
  int admitted_segments() const { return admitted_; }

 private:
  struct Segment {
    std::vector<double> x;
    int len = 0;
    int level = 0;
    std::uint64_t frame0 = 0;
  };

  bool admission_due() const;
  void admit_next();
  void sweep();

  DenoiseFn model_;
  Schedule sched_;
  StreamConfig cfg_;
  NoiseField noise_;
  int kappa_ = 0;
  std::vector<double> music_rows_;
  int music_dim_ = -1;
  int music_frames_ = 0;
  bool finished_ = false;
  std::vector<Segment> window_;   // active segments, front = oldest
  std::vector<Segment> history_;  // emitted clean context, capped
  int admitted_ = 0;
  int emitted_ = 0;
  int ticks_ = 0;
  std::uint64_t next_frame_ = 0;
};

}  // namespace gdance
