#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gdance/diffusion.hpp"
#include "gdance/motion.hpp"
#include "gdance/spatial.hpp"
#include "gdance/temporal.hpp"

namespace gdance {

struct LossWeights {
  double simple = 0.636;
  double vel = 2.964;
  double fk = 0.646;
  double contact = 10.942;
  double dist = 100.0;
};

struct DecoderConfig {
  int d = 64;              // latent width (even: timestep features pair up)
  int temporal_layers = 4;
  int gcn_layers = 2;
  int ssm_state_dim = 16;
  int window = 8;          // aligned-attention radius
  bool causal = false;     // streaming decoders mask strictly backwards
  int T = 1000;
  ScheduleKind schedule = ScheduleKind::linear;
  int segment_len = 30;
  int dancers = 3;         // fusion weights are sized for this N
  int max_dancers = 8;     // swap-code table capacity
  int music_dim = 35;
  int ff_hidden = 0;       // 0 selects 2*d
  LossWeights weights;

  int hidden() const { return ff_hidden > 0 ? ff_hidden : 2 * d; }
  void validate() const;  // ConfigError on any violated bound
};

// Named parameter registry; iteration order is registration order, which
// fixes the optimizer and checkpoint layouts.
struct ParamStore {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor add(const std::string& name, Tensor t);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  void zero_grad();
};

// Cross-dancer mixing: [L,N,d_in] flattened per frame to N*d_in, two-layer
// MLP, reshaped back. Deliberately not permutation-equivariant: slots carry
// identity.
struct FusionParams {
  int dancers = 0;
  Tensor w1, b1, w2, b2;
};
Tensor group_fusion(const Tensor& x, const FusionParams& p);

// Five-term objective; every field is a scalar tensor on the tape so the
// total can drive backward(). dist is zero when fewer than two dancers.
struct LossBreakdown {
  Tensor simple, vel, fk, contact, dist, total;
};
LossBreakdown compute_losses(const Tensor& xhat, const Tensor& x0, const Skeleton& skeleton,
                             const LossWeights& w);

class Decoder {
 public:
  Decoder(const DecoderConfig& cfg, std::uint64_t seed);

  // x_t: [L,N,151]; t: one timestep per frame (0 = clean context); music:
  // [L, music_dim] raw features. Deterministic; output is the predicted
  // clean motion, same shape as x_t.
  Tensor forward(const Tensor& x_t, const std::vector<int>& t, const Tensor& music,
                 const SwapCode& swap) const;

  // Swap code of a motion's ground-truth start/end root positions.
  SwapCode encode_swap(const GroupMotion& motion) const;
  SwapCode encode_swap(const std::vector<std::array<double, 2>>& start,
                       const std::vector<std::array<double, 2>>& end) const;

  // Adapter for the diffusion samplers: x rows are flattened [L, N*151].
  DenoiseFn denoiser(const SwapCode& swap) const;

  const DecoderConfig& config() const { return cfg_; }
  const Schedule& schedule() const { return sched_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  // The state-space sign constraints (A < 0, delta > 0) are kept by training
  // log-parameters and deriving a = -exp(a_log), delta = exp(delta_log) on
  // each forward pass.
  struct DecoderLayer {
    TemporalLayerParams params;  // params.ssm.a / .delta filled per forward
    Tensor a_log, delta_log;
  };

  DecoderConfig cfg_;
  Schedule sched_;
  ParamStore params_;

  Tensor in_w_, in_b_;
  FusionParams fusion_;
  std::vector<Tensor> gcn_w_;
  Tensor music_w_, music_b_;
  TimestepMlp tmlp_;
  Tensor swap_table_;
  std::vector<DecoderLayer> layers_;
  Tensor out_w_, out_b_;
};

// Adam with bias correction; state vectors are kept per parameter in store
// order. No weight decay.
struct Adam {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(ParamStore& params);

 private:
  int steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LossRow {
  int step = 0;
  double simple = 0, vel = 0, fk = 0, contact = 0, dist = 0, total = 0;
};

struct TrainConfig {
  int steps = 1000;
  double lr = 5e-5;
  std::uint64_t seed = 0;
  std::string curve_path;  // when set, the loss curve is written as CSV
};

struct TrainResult {
  std::vector<LossRow> curve;
};

// One sequence per step: sample a staircase phase uniformly, noise the
// motion segment-wise, predict, apply the five-term loss, one Adam update.
// Aborts with NumericError naming the step and component if a loss goes
// non-finite.
TrainResult train_loop(Decoder& dec, const std::vector<std::pair<GroupMotion, MusicTrack>>& data,
                       const TrainConfig& tc);

// Checkpoint container: magic GDCK, u32 count, then per parameter u16 name
// length + bytes, u8 rank, u32 dims, float32 payload (values round-trip
// through f32).
void save_checkpoint(const std::string& path, const ParamStore& params);
void load_checkpoint(const std::string& path, ParamStore& params);

void write_loss_csv(const std::string& path, const std::vector<LossRow>& curve);

}  // namespace gdance
