#include "gdance/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdance/error.hpp"

namespace gdance {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

std::array<double, kPoseDim> Pose::pack() const {
  std::array<double, kPoseDim> v{};
  std::copy(rot6d.begin(), rot6d.end(), v.begin());
  std::copy(contacts.begin(), contacts.end(), v.begin() + kContactOffset);
  std::copy(root.begin(), root.end(), v.begin() + kRootOffset);
  return v;
}

Pose Pose::unpack(const double* v) {
  Pose p;
  std::copy(v, v + kRotDim, p.rot6d.begin());
  for (int i = 0; i < kContactDim; ++i) p.contacts[i] = clamp01(v[kContactOffset + i]);
  std::copy(v + kRootOffset, v + kPoseDim, p.root.begin());
  return p;
}

GroupMotion GroupMotion::blank(int frames, int dancers, double fps) {
  GroupMotion m;
  m.frames = frames;
  m.dancers = dancers;
  m.fps = fps;
  m.values.assign(static_cast<std::size_t>(frames) * dancers * kPoseDim, 0.0);
  // Identity rotation channels so a blank motion is a valid pose.
  for (int l = 0; l < frames; ++l)
    for (int n = 0; n < dancers; ++n) {
      double* p = m.at(l, n);
      for (int j = 0; j < kJoints; ++j) {
        p[j * 6 + 0] = 1.0;
        p[j * 6 + 4] = 1.0;
      }
    }
  return m;
}

double* GroupMotion::at(int l, int n) {
  return values.data() + (static_cast<std::size_t>(l) * dancers + n) * kPoseDim;
}

const double* GroupMotion::at(int l, int n) const {
  return values.data() + (static_cast<std::size_t>(l) * dancers + n) * kPoseDim;
}

Pose GroupMotion::pose(int l, int n) const { return Pose::unpack(at(l, n)); }

void GroupMotion::set_pose(int l, int n, const Pose& p) {
  auto v = p.pack();
  std::copy(v.begin(), v.end(), at(l, n));
}

void GroupMotion::validate() const {
  if (frames < 2) throw ValueError("motion: frames must be >= 2, got " + std::to_string(frames));
  if (dancers < 1)
    throw ValueError("motion: dancers must be >= 1, got " + std::to_string(dancers));
  if (fps <= 0.0) throw ValueError("motion: fps must be positive");
  const std::size_t want = static_cast<std::size_t>(frames) * dancers * kPoseDim;
  if (values.size() != want)
    throw ShapeError("motion: storage holds " + std::to_string(values.size()) +
                     " values, expected " + std::to_string(want));
  for (double v : values)
    if (!std::isfinite(v)) throw NumericError("motion: non-finite value");
}

void MusicTrack::validate() const {
  if (frames < 1) throw ValueError("music: frames must be >= 1");
  if (dim < 1) throw ValueError("music: dim must be >= 1");
  if (fps <= 0.0) throw ValueError("music: fps must be positive");
  if (features.size() != static_cast<std::size_t>(frames) * dim)
    throw ShapeError("music: storage holds " + std::to_string(features.size()) +
                     " values, expected " + std::to_string(static_cast<std::size_t>(frames) * dim));
  for (double v : features)
    if (!std::isfinite(v)) throw NumericError("music: non-finite value");
}

Skeleton Skeleton::standard() {
  Skeleton s;
  s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  // Average-body rest offsets, meters, z up, +x toward the left side.
  s.offsets = {{
      {0.0, 0.0, 0.0},       // 0 pelvis
      {0.09, 0.0, -0.08},    // 1 left hip
      {-0.09, 0.0, -0.08},   // 2 right hip
      {0.0, 0.0, 0.11},      // 3 spine1
      {0.015, 0.0, -0.38},   // 4 left knee
      {-0.015, 0.0, -0.38},  // 5 right knee
      {0.0, 0.0, 0.13},      // 6 spine2
      {0.0, -0.02, -0.40},   // 7 left ankle
      {0.0, -0.02, -0.40},   // 8 right ankle
      {0.0, 0.0, 0.06},      // 9 spine3
      {0.0, 0.12, -0.06},    // 10 left toe
      {0.0, 0.12, -0.06},    // 11 right toe
      {0.0, 0.0, 0.21},      // 12 neck
      {0.07, 0.0, 0.12},     // 13 left collar
      {-0.07, 0.0, 0.12},    // 14 right collar
      {0.0, 0.0, 0.07},      // 15 head
      {0.10, 0.0, 0.03},     // 16 left shoulder
      {-0.10, 0.0, 0.03},    // 17 right shoulder
      {0.26, 0.0, 0.0},      // 18 left elbow
      {-0.26, 0.0, 0.0},     // 19 right elbow
      {0.25, 0.0, 0.0},      // 20 left wrist
      {-0.25, 0.0, 0.0},     // 21 right wrist
      {0.08, 0.0, 0.0},      // 22 left hand
      {-0.08, 0.0, 0.0},     // 23 right hand
  }};
  return s;
}

void Skeleton::validate() const {
  if (parents[0] != -1) throw ValueError("skeleton: joint 0 must be the root");
  for (int j = 1; j < kJoints; ++j) {
    if (parents[j] < 0 || parents[j] >= j)
      throw ValueError("skeleton: parent of joint " + std::to_string(j) +
                       " must precede it, got " + std::to_string(parents[j]));
  }
  for (const auto& o : offsets)
    for (double v : o)
      if (!std::isfinite(v)) throw NumericError("skeleton: non-finite offset");
}

void rot6d_to_matrix(const double r[6], double out[9]) {
  const double* a1 = r;
  const double* a2 = r + 3;
  double n1 = std::sqrt(a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2]);
  if (n1 <= 1e-8) throw NumericError("rot6d: first vector near zero");
  double b1[3] = {a1[0] / n1, a1[1] / n1, a1[2] / n1};
  double d = b1[0] * a2[0] + b1[1] * a2[1] + b1[2] * a2[2];
  double p[3] = {a2[0] - d * b1[0], a2[1] - d * b1[1], a2[2] - d * b1[2]};
  double n2 = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  if (n2 <= 1e-8) throw NumericError("rot6d: second vector parallel to first");
  double b2[3] = {p[0] / n2, p[1] / n2, p[2] / n2};
  double b3[3] = {b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2],
                  b1[0] * b2[1] - b1[1] * b2[0]};
  for (int i = 0; i < 3; ++i) {
    out[i * 3 + 0] = b1[i];
    out[i * 3 + 1] = b2[i];
    out[i * 3 + 2] = b3[i];
  }
}

std::array<std::array<double, 3>, kJoints> forward_kinematics(const Pose& pose,
                                                              const Skeleton& skeleton) {
  std::array<std::array<double, 3>, kJoints> pos;
  std::array<std::array<double, 9>, kJoints> rot;
  for (int j = 0; j < kJoints; ++j) {
    double local[9];
    rot6d_to_matrix(pose.rot6d.data() + j * 6, local);
    if (j == 0) {
      rot[0] = {local[0], local[1], local[2], local[3], local[4],
                local[5], local[6], local[7], local[8]};
      pos[0] = pose.root;
      continue;
    }
    const int p = skeleton.parents[j];
    const auto& pr = rot[p];
    const auto& off = skeleton.offsets[j];
    for (int i = 0; i < 3; ++i)
      pos[j][i] = pos[p][i] + pr[i * 3 + 0] * off[0] + pr[i * 3 + 1] * off[1] +
                  pr[i * 3 + 2] * off[2];
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k)
        rot[j][i * 3 + k] = pr[i * 3 + 0] * local[0 * 3 + k] + pr[i * 3 + 1] * local[1 * 3 + k] +
                            pr[i * 3 + 2] * local[2 * 3 + k];
  }
  return pos;
}

Tensor rot6d_to_matrix_batch(const Tensor& r) {
  if (r.rank() != 2 || r.shape[1] != 6)
    throw ShapeError("rot6d batch: expected [B,6], got " + shape_str(r.shape));
  const int B = r.shape[0];
  Tensor a1 = ops::slice(r, 1, 0, 3);
  Tensor a2 = ops::slice(r, 1, 3, 3);
  Tensor n1 = ops::sqrt(ops::sum_last(ops::mul(a1, a1)));
  for (int i = 0; i < B; ++i)
    if ((*n1.data)[i] <= 1e-8)
      throw NumericError("rot6d: first vector near zero at row " + std::to_string(i));
  Tensor b1 = ops::div(a1, n1);
  Tensor dot = ops::sum_last(ops::mul(b1, a2));
  Tensor proj = ops::sub(a2, ops::mul(b1, dot));
  Tensor n2 = ops::sqrt(ops::sum_last(ops::mul(proj, proj)));
  for (int i = 0; i < B; ++i)
    if ((*n2.data)[i] <= 1e-8)
      throw NumericError("rot6d: second vector parallel to first at row " + std::to_string(i));
  Tensor b2 = ops::div(proj, n2);

  auto comp = [](const Tensor& t, int i) { return ops::slice(t, 1, i, 1); };
  Tensor b1x = comp(b1, 0), b1y = comp(b1, 1), b1z = comp(b1, 2);
  Tensor b2x = comp(b2, 0), b2y = comp(b2, 1), b2z = comp(b2, 2);
  Tensor b3x = ops::sub(ops::mul(b1y, b2z), ops::mul(b1z, b2y));
  Tensor b3y = ops::sub(ops::mul(b1z, b2x), ops::mul(b1x, b2z));
  Tensor b3z = ops::sub(ops::mul(b1x, b2y), ops::mul(b1y, b2x));

  // Row-major [B,9] with columns b1 b2 b3, then [B,3,3].
  Tensor flat = ops::concat({b1x, b2x, b3x, b1y, b2y, b3y, b1z, b2z, b3z}, 1);
  return ops::reshape(flat, {B, 3, 3});
}

Tensor fk_positions(const Tensor& poses, const Skeleton& skeleton) {
  if (poses.rank() != 2 || poses.shape[1] != kPoseDim)
    throw ShapeError("fk: expected [B,151], got " + shape_str(poses.shape));
  skeleton.validate();
  const int B = poses.shape[0];
  std::vector<Tensor> rot(kJoints), pos(kJoints);
  for (int j = 0; j < kJoints; ++j) {
    Tensor local = rot6d_to_matrix_batch(ops::slice(poses, 1, j * 6, 6));
    if (j == 0) {
      rot[0] = local;
      pos[0] = ops::slice(poses, 1, kRootOffset, 3);
      continue;
    }
    const int p = skeleton.parents[j];
    rot[j] = ops::bmm(rot[p], local);
    std::vector<double> off(static_cast<std::size_t>(B) * 3);
    for (int i = 0; i < B; ++i)
      for (int k = 0; k < 3; ++k) off[static_cast<std::size_t>(i) * 3 + k] = skeleton.offsets[j][k];
    Tensor delta = ops::bmm(rot[p], Tensor::from({B, 3, 1}, std::move(off)));
    pos[j] = ops::add(pos[p], ops::reshape(delta, {B, 3}));
  }
  return ops::concat(pos, 1);
}

Rearranged rearrange_dancers(const GroupMotion& motion) {
  motion.validate();
  const int N = motion.dancers;
  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    const double* pa = motion.at(0, a);
    const double* pb = motion.at(0, b);
    if (pa[kRootOffset] != pb[kRootOffset]) return pa[kRootOffset] < pb[kRootOffset];
    if (pa[kRootOffset + 1] != pb[kRootOffset + 1])
      return pa[kRootOffset + 1] < pb[kRootOffset + 1];
    return a < b;
  });
  Rearranged out;
  out.permutation = perm;
  out.motion = motion;
  for (int l = 0; l < motion.frames; ++l)
    for (int n = 0; n < N; ++n)
      std::copy(motion.at(l, perm[n]), motion.at(l, perm[n]) + kPoseDim, out.motion.at(l, n));
  return out;
}

Tensor to_tensor(const GroupMotion& motion) {
  return Tensor::from({motion.frames, motion.dancers, kPoseDim}, motion.values);
}

GroupMotion from_tensor(const Tensor& t, double fps) {
  if (t.rank() != 3 || t.shape[2] != kPoseDim)
    throw ShapeError("motion tensor: expected [L,N,151], got " + shape_str(t.shape));
  GroupMotion m;
  m.frames = t.shape[0];
  m.dancers = t.shape[1];
  m.fps = fps;
  m.values = *t.data;
  for (int l = 0; l < m.frames; ++l)
    for (int n = 0; n < m.dancers; ++n) {
      double* p = m.at(l, n);
      for (int i = 0; i < kContactDim; ++i)
        p[kContactOffset + i] = clamp01(p[kContactOffset + i]);
    }
  return m;
}

namespace {

void write_rx(double* rot6d, int joint, double theta) {
  double* r = rot6d + joint * 6;
  r[0] = 1.0;
  r[1] = 0.0;
  r[2] = 0.0;
  r[3] = 0.0;
  r[4] = std::cos(theta);
  r[5] = std::sin(theta);
}

void write_rz(double* rot6d, int joint, double theta) {
  double* r = rot6d + joint * 6;
  r[0] = std::cos(theta);
  r[1] = std::sin(theta);
  r[2] = 0.0;
  r[3] = -std::sin(theta);
  r[4] = std::cos(theta);
  r[5] = 0.0;
}

}  // namespace

std::vector<std::pair<GroupMotion, MusicTrack>> synth_dataset(const SynthConfig& cfg,
                                                              std::uint64_t seed) {
  if (cfg.count < 1) throw ConfigError("synth: count must be >= 1");
  if (cfg.frames < 2) throw ConfigError("synth: frames must be >= 2");
  if (cfg.dancers < 2 || cfg.dancers > 5)
    throw ConfigError("synth: dancers must be in [2,5], got " + std::to_string(cfg.dancers));
  if (cfg.music_dim < 2) throw ConfigError("synth: music_dim must be >= 2");
  if (cfg.beat_period < 2) throw ConfigError("synth: beat_period must be >= 2");
  if (cfg.fps <= 0.0) throw ConfigError("synth: fps must be positive");
  if (cfg.formation_radius <= 0.0 || cfg.path_radius <= 0.0 || cfg.min_separation <= 0.0)
    throw ConfigError("synth: radii and separation must be positive");

  // Closest anchors sit one chord apart; local loops can close the gap by
  // at most 2 * path_radius.
  const double chord = 2.0 * cfg.formation_radius * std::sin(kPi / cfg.dancers);
  if (chord - 2.0 * cfg.path_radius <= cfg.min_separation)
    throw ConfigError("synth: start positions overlap (formation radius too small for " +
                      std::to_string(cfg.dancers) + " dancers)");

  RngStream root(seed);
  std::vector<std::pair<GroupMotion, MusicTrack>> out;
  const int L = cfg.frames, N = cfg.dancers, B = cfg.beat_period;
  const double omega = 2.0 * kPi / B;

  for (int s = 0; s < cfg.count; ++s) {
    RngStream rs = root.fork(static_cast<std::uint64_t>(s) + 1);
    const double seq_phase = 2.0 * kPi * rs.next_uniform();
    std::vector<double> path_phase(N);
    for (int n = 0; n < N; ++n) path_phase[n] = 2.0 * kPi * rs.next_uniform();

    // Animated joints: (joint, axis 0=x / 1=z, amplitude, phase offset).
    struct Swing {
      int joint;
      int axis;
      double amp;
      double phase;
    };
    std::vector<Swing> swings = {
        {16, 0, 0.5, 0.0}, {17, 0, 0.5, kPi}, {18, 1, 0.4, 0.0}, {19, 1, 0.4, kPi},
        {1, 0, 0.15, 0.0}, {2, 0, 0.15, kPi}, {4, 0, 0.2, kPi},  {5, 0, 0.2, 0.0},
        {3, 1, 0.1, 0.0},
    };
    for (auto& sw : swings) sw.amp *= 0.8 + 0.4 * rs.next_uniform();

    std::vector<double> amp(cfg.music_dim - 1), psi(cfg.music_dim - 1);
    for (int k = 0; k + 1 < cfg.music_dim; ++k) {
      amp[k] = 0.5 + rs.next_uniform();
      psi[k] = 2.0 * kPi * rs.next_uniform();
    }

    GroupMotion m = GroupMotion::blank(L, N, cfg.fps);
    for (int l = 0; l < L; ++l) {
      const double beat = omega * l;
      for (int n = 0; n < N; ++n) {
        double* pv = m.at(l, n);
        const double theta = seq_phase + 2.0 * kPi * n / N;
        const double ax = cfg.formation_radius * std::cos(theta);
        const double ay = cfg.formation_radius * std::sin(theta);
        const double phi = 2.0 * kPi * l / L + path_phase[n];
        double lx, ly;
        if (n % 2 == 0) {
          lx = cfg.path_radius * std::cos(phi);
          ly = cfg.path_radius * std::sin(phi);
        } else {  // Gerono lemniscate, bounded by path_radius
          lx = cfg.path_radius * std::sin(phi) * std::cos(phi);
          ly = cfg.path_radius * std::sin(phi);
        }
        pv[kRootOffset + 0] = ax + lx;
        pv[kRootOffset + 1] = ay + ly;
        pv[kRootOffset + 2] = 0.95 + 0.015 * (1.0 - std::cos(beat));

        for (const auto& sw : swings) {
          const double th = sw.amp * std::sin(beat + sw.phase);
          if (sw.axis == 0)
            write_rx(pv, sw.joint, th);
          else
            write_rz(pv, sw.joint, th);
        }

        pv[kContactOffset + 0] = 0.5 + 0.5 * std::sin(beat);
        pv[kContactOffset + 1] = 0.5 + 0.5 * std::sin(beat - 0.8);
        pv[kContactOffset + 2] = 0.5 + 0.5 * std::sin(beat + kPi);
        pv[kContactOffset + 3] = 0.5 + 0.5 * std::sin(beat + kPi - 0.8);
      }
    }

    MusicTrack mus;
    mus.frames = L;
    mus.dim = cfg.music_dim;
    mus.fps = cfg.fps;
    mus.features.assign(static_cast<std::size_t>(L) * cfg.music_dim, 0.0);
    for (int l = 0; l < L; ++l) {
      double* f = mus.at(l);
      for (int k = 0; k + 1 < cfg.music_dim; ++k)
        f[k] = amp[k] * std::sin(kPi * (k + 1) * l / B + psi[k]);
      f[cfg.music_dim - 1] = (l % B == 0) ? 1.0 : 0.0;
    }

    // Construction guarantee, revalidated here.
    for (int l = 0; l < L; ++l)
      for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
          const double* a = m.at(l, i) + kRootOffset;
          const double* b = m.at(l, j) + kRootOffset;
          const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
          if (std::sqrt(dx * dx + dy * dy + dz * dz) <= cfg.min_separation)
            throw NumericError("synth: generated paths collide at frame " + std::to_string(l));
        }

    m.validate();
    mus.validate();
    out.emplace_back(std::move(m), std::move(mus));
  }
  return out;
}

}  // namespace gdance
