#pragma once

#include <string>
#include <vector>

#include "gdance/motion.hpp"

namespace gdance {

// Hand-crafted kinematic features stand in for a learned extractor, so
// absolute metric values are not comparable to published toolkits; only
// orderings and degenerate cases are contractual.
//
// Layout of the feature vector for one dancer:
//   [0,24)    per-joint mean over time of root-relative position norm
//   [24,48)   per-joint std of root-relative position norm
//   [48,72)   per-joint mean speed (global positions, units/s)
//   [72,96)   per-joint std of speed
//   [96,102)  root trajectory: mean horiz speed, std horiz speed,
//             mean height, std height, net horiz displacement,
//             horiz path length per second
constexpr int kKinFeatDim = 102;
std::vector<double> kinematic_features(const GroupMotion& motion, int dancer,
                                       const Skeleton& skeleton);

// Group formation descriptor of one motion (pairwise-distance, spread and
// centroid statistics over root trajectories); feeds group realism.
//   [0..8): mean pair dist, std pair dist, mean spread, std spread,
//           mean centroid speed, std centroid speed, min pair dist,
//           max pair dist
constexpr int kFormationFeatDim = 8;
std::vector<double> formation_features(const GroupMotion& motion);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)) with the PSD square
// root taken by symmetric eigendecomposition. Covariances are unbiased
// (n-1) and regularized by +1e-6 I. Result is clamped at 0.
double frechet_distance(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b);

// Group motion correlation: per dancer pair, Pearson correlation of mean
// joint-speed profiles maximized over lags in [-5, 5]; mean over pairs,
// scaled by 100. Zero-variance overlaps contribute 0 to the lag search.
double gmc(const GroupMotion& motion, const Skeleton& skeleton);

// Trajectory intersection frequency: fraction of (dancer pair, frame step)
// events whose 2-D root displacement segments intersect; touching endpoints
// count once like proper crossings. tif_naive is an independently coded
// brute-force checker and the normative definition.
double tif(const GroupMotion& motion);
double tif_naive(const GroupMotion& motion);

// Mean pairwise Euclidean distance between feature vectors.
double diversity(const std::vector<std::vector<double>>& feats);

// Physical foot contact: mean over frames of ||horizontal root accel|| x
// (min heel/toe speed of left foot) x (min of right foot), normalized by
// the sequence maximum of the same product; 0 when every acceleration
// coincides with a planted foot.
double pfc(const GroupMotion& motion, int dancer, const Skeleton& skeleton);

struct MetricReport {
  double gmr = 0.0;  // Frechet distance between formation feature sets
  double gmc = 0.0;  // mean group motion correlation, in [-100, 100]
  double tif = 0.0;  // mean trajectory intersection frequency
  double fid = 0.0;  // Frechet distance between kinematic feature sets
  double div = 0.0;  // generated-set diversity
  double pfc = 0.0;  // mean physical foot contact score
  int generated = 0;
  int reference = 0;
  double seconds = 0.0;
};

// Batch evaluation of generated motions against a reference set. Group
// metrics average over motions with at least two dancers; needs >= 2
// motions per side for the distribution distances.
MetricReport evaluate(const std::vector<GroupMotion>& generated,
                      const std::vector<GroupMotion>& reference, const Skeleton& skeleton);

std::string report_json(const MetricReport& r);
std::string report_table(const MetricReport& r);

}  // namespace gdance
