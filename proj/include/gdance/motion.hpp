#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gdance/tensor.hpp"

namespace gdance {

// Pose layout inside a packed 151-vector:
//   [0,144)   24 joints x 6 rotation channels, joint-major
//   [144,148) contact states: left heel, left toe, right heel, right toe
//   [148,151) root translation in meters, z up
constexpr int kJoints = 24;
constexpr int kRotDim = kJoints * 6;  // 144
constexpr int kContactDim = 4;
constexpr int kPoseDim = kRotDim + kContactDim + 3;  // 151
constexpr int kContactOffset = kRotDim;
constexpr int kRootOffset = kRotDim + kContactDim;
// Joints whose motion the contact channels gate, in channel order.
constexpr std::array<int, 4> kContactJoints = {7, 10, 8, 11};

struct Pose {
  std::array<double, kRotDim> rot6d{};
  std::array<double, kContactDim> contacts{};
  std::array<double, 3> root{};

  std::array<double, kPoseDim> pack() const;
  // Contacts are clamped into [0,1] on unpack.
  static Pose unpack(const double* v);
};

// L x N posed frames, stored packed and row-major: values[(l*N + n)*151 + c].
struct GroupMotion {
  int frames = 0;
  int dancers = 0;
  double fps = 30.0;
  std::vector<double> values;

  static GroupMotion blank(int frames, int dancers, double fps = 30.0);
  double* at(int l, int n);
  const double* at(int l, int n) const;
  Pose pose(int l, int n) const;
  void set_pose(int l, int n, const Pose& p);
  // Throws on L < 2, N < 1, wrong storage size, or non-finite values.
  void validate() const;
};

struct MusicTrack {
  int frames = 0;
  int dim = 0;
  double fps = 30.0;
  std::vector<double> features;  // frames x dim, row-major

  double* at(int l) { return features.data() + static_cast<std::size_t>(l) * dim; }
  const double* at(int l) const { return features.data() + static_cast<std::size_t>(l) * dim; }
  void validate() const;
};

struct Skeleton {
  std::array<int, kJoints> parents{};
  std::array<std::array<double, 3>, kJoints> offsets{};  // rest bone vectors, meters

  // Built-in 24-joint tree with average-body offsets; same table ships as
  // data/skeleton_smpl24.json.
  static Skeleton standard();
  void validate() const;  // tree rooted at 0, parent index < child index
};

// Gram-Schmidt on the two leading 3-vectors; returns row-major R whose
// columns are the orthonormal frame. Degenerate inputs throw NumericError
// naming the collapsed vector.
void rot6d_to_matrix(const double r[6], double out[9]);

// Plain-double FK for metrics and inspection.
std::array<std::array<double, 3>, kJoints> forward_kinematics(const Pose& pose,
                                                              const Skeleton& skeleton);

// Differentiable FK over a batch of packed poses [B,151] -> positions
// [B, 72] (joint-major x,y,z). Used by the kinematic losses.
Tensor fk_positions(const Tensor& poses, const Skeleton& skeleton);

// Batched 6d -> rotation matrices [B,6] -> [B,3,3]; tape-recorded.
Tensor rot6d_to_matrix_batch(const Tensor& r);

// Sorts dancers by first-frame root x (ties: y, then original index).
// perm[i] is the original index of the dancer placed at slot i.
struct Rearranged {
  GroupMotion motion;
  std::vector<int> permutation;
};
Rearranged rearrange_dancers(const GroupMotion& motion);

// Packed-tensor bridges: [L,N,151] row-major, same layout as GroupMotion.
Tensor to_tensor(const GroupMotion& motion);
GroupMotion from_tensor(const Tensor& t, double fps);  // clamps contacts

// Procedural stand-in dataset: dancers on a formation circle following
// small non-colliding loops, joint swing phase-locked to a synthetic beat,
// music = per-sequence harmonic bank + beat impulses in the last channel.
struct SynthConfig {
  int count = 4;
  int frames = 60;
  int dancers = 3;
  int music_dim = 35;
  double fps = 30.0;
  int beat_period = 15;           // frames between beat impulses
  double formation_radius = 1.5;  // meters
  double path_radius = 0.3;
  double min_separation = 0.3;
};
std::vector<std::pair<GroupMotion, MusicTrack>> synth_dataset(const SynthConfig& config,
                                                              std::uint64_t seed);

}  // namespace gdance
