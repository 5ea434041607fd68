#include "gdance/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gdance/error.hpp"

namespace gdance {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

using JointPos = std::array<std::array<double, 3>, kJoints>;

std::vector<JointPos> fk_track(const GroupMotion& motion, int dancer, const Skeleton& skeleton) {
  std::vector<JointPos> out;
  out.reserve(static_cast<std::size_t>(motion.frames));
  for (int l = 0; l < motion.frames; ++l) {
    out.push_back(forward_kinematics(motion.pose(l, dancer), skeleton));
  }
  return out;
}

double dist3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

std::vector<double> kinematic_features(const GroupMotion& motion, int dancer,
                                       const Skeleton& skeleton) {
  motion.validate();
  if (dancer < 0 || dancer >= motion.dancers) {
    throw ValueError("features: dancer " + std::to_string(dancer) + " out of range");
  }
  if (motion.frames < 2) throw ValueError("features: need at least 2 frames");
  const int L = motion.frames;
  const double fps = motion.fps;
  std::vector<JointPos> pos = fk_track(motion, dancer, skeleton);

  std::vector<double> feat(kKinFeatDim, 0.0);
  std::vector<double> series(static_cast<std::size_t>(L));
  for (int j = 0; j < kJoints; ++j) {
    for (int l = 0; l < L; ++l) series[static_cast<std::size_t>(l)] = dist3(pos[l][j], pos[l][0]);
    double m = mean_of(series);
    feat[static_cast<std::size_t>(j)] = m;
    feat[static_cast<std::size_t>(24 + j)] = std_of(series, m);
  }
  std::vector<double> speeds(static_cast<std::size_t>(L - 1));
  for (int j = 0; j < kJoints; ++j) {
    for (int l = 0; l + 1 < L; ++l) {
      speeds[static_cast<std::size_t>(l)] = dist3(pos[l + 1][j], pos[l][j]) * fps;
    }
    double m = mean_of(speeds);
    feat[static_cast<std::size_t>(48 + j)] = m;
    feat[static_cast<std::size_t>(72 + j)] = std_of(speeds, m);
  }

  std::vector<double> hspeed(static_cast<std::size_t>(L - 1));
  std::vector<double> height(static_cast<std::size_t>(L));
  double path = 0.0;
  for (int l = 0; l < L; ++l) height[static_cast<std::size_t>(l)] = pos[l][0][2];
  for (int l = 0; l + 1 < L; ++l) {
    double dx = pos[l + 1][0][0] - pos[l][0][0];
    double dy = pos[l + 1][0][1] - pos[l][0][1];
    double step = std::sqrt(dx * dx + dy * dy);
    hspeed[static_cast<std::size_t>(l)] = step * fps;
    path += step;
  }
  double nx = pos[L - 1][0][0] - pos[0][0][0];
  double ny = pos[L - 1][0][1] - pos[0][0][1];
  double hm = mean_of(hspeed), zm = mean_of(height);
  feat[96] = hm;
  feat[97] = std_of(hspeed, hm);
  feat[98] = zm;
  feat[99] = std_of(height, zm);
  feat[100] = std::sqrt(nx * nx + ny * ny);
  feat[101] = path * fps / static_cast<double>(L - 1);
  return feat;
}

std::vector<double> formation_features(const GroupMotion& motion) {
  motion.validate();
  const int L = motion.frames, N = motion.dancers;
  std::vector<double> pair_d, spread, cspeed;
  std::vector<std::array<double, 2>> centroid(static_cast<std::size_t>(L));

  for (int l = 0; l < L; ++l) {
    double cx = 0.0, cy = 0.0;
    for (int n = 0; n < N; ++n) {
      Pose p = motion.pose(l, n);
      cx += p.root[0];
      cy += p.root[1];
    }
    centroid[static_cast<std::size_t>(l)] = {cx / N, cy / N};
    for (int i = 0; i < N; ++i) {
      Pose pi = motion.pose(l, i);
      double sx = pi.root[0] - centroid[static_cast<std::size_t>(l)][0];
      double sy = pi.root[1] - centroid[static_cast<std::size_t>(l)][1];
      spread.push_back(std::sqrt(sx * sx + sy * sy));
      for (int j = i + 1; j < N; ++j) {
        Pose pj = motion.pose(l, j);
        double dx = pi.root[0] - pj.root[0], dy = pi.root[1] - pj.root[1];
        pair_d.push_back(std::sqrt(dx * dx + dy * dy));
      }
    }
  }
  for (int l = 0; l + 1 < L; ++l) {
    double dx = centroid[static_cast<std::size_t>(l + 1)][0] - centroid[static_cast<std::size_t>(l)][0];
    double dy = centroid[static_cast<std::size_t>(l + 1)][1] - centroid[static_cast<std::size_t>(l)][1];
    cspeed.push_back(std::sqrt(dx * dx + dy * dy) * motion.fps);
  }

  std::vector<double> feat(kFormationFeatDim, 0.0);
  double pm = mean_of(pair_d), sm = mean_of(spread), cm = mean_of(cspeed);
  feat[0] = pm;
  feat[1] = std_of(pair_d, pm);
  feat[2] = sm;
  feat[3] = std_of(spread, sm);
  feat[4] = cm;
  feat[5] = std_of(cspeed, cm);
  feat[6] = pair_d.empty() ? 0.0 : *std::min_element(pair_d.begin(), pair_d.end());
  feat[7] = pair_d.empty() ? 0.0 : *std::max_element(pair_d.begin(), pair_d.end());
  return feat;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix stored row-major.
// Returns eigenvalues; v (row-major) holds eigenvectors in columns.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eig,
                  std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto at = [&](std::vector<double>& m, int r, int c) -> double& {
    return m[static_cast<std::size_t>(r) * n + c];
  };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (int i = 0; i < n; ++i) {
      diag += std::abs(at(a, i, i));
      for (int j = i + 1; j < n; ++j) off += std::abs(at(a, i, j));
    }
    if (off <= 1e-13 * std::max(diag, 1.0)) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = at(a, p, q);
        if (apq == 0.0) continue;
        double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = at(a, k, p), akq = at(a, k, q);
          at(a, k, p) = c * akp - s * akq;
          at(a, k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = at(a, p, k), aqk = at(a, q, k);
          at(a, p, k) = c * apk - s * aqk;
          at(a, q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = at(v, k, p), vkq = at(v, k, q);
          at(v, k, p) = c * vkp - s * vkq;
          at(v, k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eig.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = at(a, i, i);
}

// B = V f(diag) V^T for a symmetric eigendecomposition.
std::vector<double> rebuild(const std::vector<double>& eig, const std::vector<double>& v, int n,
                            double (*f)(double)) {
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        s += v[static_cast<std::size_t>(i) * n + k] * f(eig[static_cast<std::size_t>(k)]) *
             v[static_cast<std::size_t>(j) * n + k];
      }
      out[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
  return out;
}

double sqrt_clamped(double x) { return std::sqrt(std::max(x, 0.0)); }

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      double aik = a[static_cast<std::size_t>(i) * n + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        out[static_cast<std::size_t>(i) * n + j] += aik * b[static_cast<std::size_t>(k) * n + j];
      }
    }
  }
  return out;
}

void mean_cov(const std::vector<std::vector<double>>& set, std::vector<double>& mu,
              std::vector<double>& cov) {
  const int n = static_cast<int>(set.size());
  const int d = static_cast<int>(set[0].size());
  mu.assign(static_cast<std::size_t>(d), 0.0);
  for (const auto& x : set)
    for (int i = 0; i < d; ++i) mu[static_cast<std::size_t>(i)] += x[static_cast<std::size_t>(i)];
  for (double& m : mu) m /= static_cast<double>(n);
  cov.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (const auto& x : set) {
    for (int i = 0; i < d; ++i) {
      double di = x[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j) {
        cov[static_cast<std::size_t>(i) * d + j] +=
            di * (x[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)]);
      }
    }
  }
  for (double& c : cov) c /= static_cast<double>(n - 1);
  for (int i = 0; i < d; ++i) cov[static_cast<std::size_t>(i) * d + i] += 1e-6;
}

}  // namespace

double frechet_distance(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b) {
  if (a.size() < 2 || b.size() < 2) throw ValueError("frechet: need at least 2 vectors per set");
  const int d = static_cast<int>(a[0].size());
  for (const auto* set : {&a, &b}) {
    for (const auto& x : *set) {
      if (static_cast<int>(x.size()) != d) {
        throw ShapeError("frechet: feature dimension mismatch, expected " + std::to_string(d) +
                         ", got " + std::to_string(x.size()));
      }
    }
  }

  std::vector<double> mu_a, mu_b, cov_a, cov_b;
  mean_cov(a, mu_a, cov_a);
  mean_cov(b, mu_b, cov_b);

  double mean_term = 0.0, tr_a = 0.0, tr_b = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = mu_a[static_cast<std::size_t>(i)] - mu_b[static_cast<std::size_t>(i)];
    mean_term += diff * diff;
    tr_a += cov_a[static_cast<std::size_t>(i) * d + i];
    tr_b += cov_b[static_cast<std::size_t>(i) * d + i];
  }

  // (Sa Sb)^(1/2) through root = Sa^(1/2), M = root Sb root (symmetric PSD,
  // similar to Sa Sb, so traces of square roots agree).
  std::vector<double> work = cov_a, eig, vec;
  jacobi_eigen(work, d, eig, vec);
  std::vector<double> root = rebuild(eig, vec, d, &sqrt_clamped);
  std::vector<double> m = matmul_sq(matmul_sq(root, cov_b, d), root, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      double avg = 0.5 * (m[static_cast<std::size_t>(i) * d + j] +
                          m[static_cast<std::size_t>(j) * d + i]);
      m[static_cast<std::size_t>(i) * d + j] = avg;
      m[static_cast<std::size_t>(j) * d + i] = avg;
    }
  }
  jacobi_eigen(m, d, eig, vec);
  double tr_sqrt = 0.0;
  for (double e : eig) tr_sqrt += sqrt_clamped(e);

  return std::max(0.0, mean_term + tr_a + tr_b - 2.0 * tr_sqrt);
}

namespace {

// Mean joint speed per frame step for one dancer.
std::vector<double> speed_profile(const GroupMotion& motion, int dancer,
                                  const Skeleton& skeleton) {
  std::vector<JointPos> pos = fk_track(motion, dancer, skeleton);
  std::vector<double> s(static_cast<std::size_t>(motion.frames - 1), 0.0);
  for (int l = 0; l + 1 < motion.frames; ++l) {
    double acc = 0.0;
    for (int j = 0; j < kJoints; ++j) acc += dist3(pos[l + 1][j], pos[l][j]);
    s[static_cast<std::size_t>(l)] = acc / kJoints * motion.fps;
  }
  return s;
}

// Pearson correlation of x[t] vs y[t + lag] over the overlapping range;
// zero-variance or too-short overlaps score 0.
double lagged_pearson(const std::vector<double>& x, const std::vector<double>& y, int lag) {
  int lo = std::max(0, -lag);
  int hi = std::min(static_cast<int>(x.size()), static_cast<int>(y.size()) - lag);
  int n = hi - lo;
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (int t = lo; t < hi; ++t) {
    mx += x[static_cast<std::size_t>(t)];
    my += y[static_cast<std::size_t>(t + lag)];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int t = lo; t < hi; ++t) {
    double dx = x[static_cast<std::size_t>(t)] - mx;
    double dy = y[static_cast<std::size_t>(t + lag)] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double gmc(const GroupMotion& motion, const Skeleton& skeleton) {
  motion.validate();
  if (motion.dancers < 2) throw ValueError("gmc: need at least 2 dancers");
  if (motion.frames < 2) return 0.0;

  std::vector<std::vector<double>> profiles;
  profiles.reserve(static_cast<std::size_t>(motion.dancers));
  for (int n = 0; n < motion.dancers; ++n) profiles.push_back(speed_profile(motion, n, skeleton));

  double total = 0.0;
  int pairs = 0;
  for (int i = 0; i < motion.dancers; ++i) {
    for (int j = i + 1; j < motion.dancers; ++j) {
      double best = -1.0;
      for (int lag = -5; lag <= 5; ++lag) {
        best = std::max(best, lagged_pearson(profiles[static_cast<std::size_t>(i)],
                                             profiles[static_cast<std::size_t>(j)], lag));
      }
      total += best;
      ++pairs;
    }
  }
  return 100.0 * total / pairs;
}

namespace {

struct Pt {
  double x, y;
};

double cross2(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Windowed-orientation intersection test: proper crossings and endpoint
// touches both count.
bool segments_intersect(Pt p1, Pt p2, Pt q1, Pt q2) {
  auto orient = [](Pt o, Pt a, Pt b) {
    return cross2(a.x - o.x, a.y - o.y, b.x - o.x, b.y - o.y);
  };
  auto on_segment = [](Pt a, Pt b, Pt c) {  // collinear c on [a,b]?
    return std::min(a.x, b.x) <= c.x && c.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= c.y && c.y <= std::max(a.y, b.y);
  };
  double o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  double o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (((o1 > 0) != (o2 > 0)) && ((o1 < 0) != (o2 < 0)) && ((o3 > 0) != (o4 > 0)) &&
      ((o3 < 0) != (o4 < 0))) {
    return true;
  }
  if (o1 == 0.0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0.0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0.0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0.0 && on_segment(q1, q2, p2)) return true;
  return false;
}

Pt root_xy(const GroupMotion& motion, int l, int n) {
  const double* row =
      motion.values.data() + (static_cast<std::size_t>(l) * motion.dancers + n) * kPoseDim;
  return {row[kRootOffset], row[kRootOffset + 1]};
}

void tif_check(const GroupMotion& motion) {
  motion.validate();
  if (motion.dancers < 2) throw ValueError("tif: need at least 2 dancers");
  if (motion.frames < 2) throw ValueError("tif: need at least 2 frames");
}

}  // namespace

double tif(const GroupMotion& motion) {
  tif_check(motion);
  const int L = motion.frames, N = motion.dancers;
  long count = 0;
  for (int l = 0; l + 1 < L; ++l) {
    for (int i = 0; i < N; ++i) {
      for (int j = i + 1; j < N; ++j) {
        if (segments_intersect(root_xy(motion, l, i), root_xy(motion, l + 1, i),
                               root_xy(motion, l, j), root_xy(motion, l + 1, j))) {
          ++count;
        }
      }
    }
  }
  long events = static_cast<long>(L - 1) * (static_cast<long>(N) * (N - 1) / 2);
  return static_cast<double>(count) / static_cast<double>(events);
}

double tif_naive(const GroupMotion& motion) {
  tif_check(motion);
  const int L = motion.frames, N = motion.dancers;
  long hits = 0, events = 0;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (j <= i) continue;
      for (int l = 0; l + 1 < L; ++l) {
        Pt p1 = root_xy(motion, l, i), p2 = root_xy(motion, l + 1, i);
        Pt q1 = root_xy(motion, l, j), q2 = root_xy(motion, l + 1, j);
        double rx = p2.x - p1.x, ry = p2.y - p1.y;
        double sx = q2.x - q1.x, sy = q2.y - q1.y;
        double wx = q1.x - p1.x, wy = q1.y - p1.y;
        double den = cross2(rx, ry, sx, sy);
        double num_t = cross2(wx, wy, sx, sy);   // t = num_t / den along p
        double num_u = cross2(wx, wy, rx, ry);   // u = num_u / den along q
        bool hit;
        if (den != 0.0) {
          // t, u in [0,1] decided purely by signs, no division.
          auto in_unit = [&](double num) {
            return den > 0.0 ? (num >= 0.0 && num <= den) : (num <= 0.0 && num >= den);
          };
          hit = in_unit(num_t) && in_unit(num_u);
        } else if (num_u != 0.0) {
          hit = false;  // parallel, never meets
        } else {
          // den == 0 and num_u == 0: truly collinear, or a zero-length first
          // segment that may still sit off the second's line. Verify
          // collinearity from the other side, then test bounding-box overlap
          // (equivalent to 1-D overlap along the shared line).
          double side = cross2(sx, sy, p1.x - q1.x, p1.y - q1.y);
          bool box = std::max(std::min(p1.x, p2.x), std::min(q1.x, q2.x)) <=
                         std::min(std::max(p1.x, p2.x), std::max(q1.x, q2.x)) &&
                     std::max(std::min(p1.y, p2.y), std::min(q1.y, q2.y)) <=
                         std::min(std::max(p1.y, p2.y), std::max(q1.y, q2.y));
          hit = side == 0.0 && box;
        }
        if (hit) ++hits;
        ++events;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(events);
}

double diversity(const std::vector<std::vector<double>>& feats) {
  if (feats.size() < 2) throw ValueError("diversity: need at least 2 feature vectors");
  const std::size_t d = feats[0].size();
  double total = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].size() != d) throw ShapeError("diversity: feature dimension mismatch");
    for (std::size_t j = i + 1; j < feats.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        double diff = feats[i][k] - feats[j][k];
        s += diff * diff;
      }
      total += std::sqrt(s);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double pfc(const GroupMotion& motion, int dancer, const Skeleton& skeleton) {
  motion.validate();
  if (dancer < 0 || dancer >= motion.dancers) {
    throw ValueError("pfc: dancer " + std::to_string(dancer) + " out of range");
  }
  if (motion.frames < 3) throw ValueError("pfc: need at least 3 frames");
  const int L = motion.frames;
  const double fps = motion.fps;
  std::vector<JointPos> pos = fk_track(motion, dancer, skeleton);

  auto joint_speed = [&](int l, int j) { return dist3(pos[l + 1][j], pos[l][j]) * fps; };

  std::vector<double> value(static_cast<std::size_t>(L - 2), 0.0);
  for (int l = 1; l + 1 < L; ++l) {
    Pose prev = motion.pose(l - 1, dancer);
    Pose cur = motion.pose(l, dancer);
    Pose next = motion.pose(l + 1, dancer);
    double ax = (next.root[0] - 2.0 * cur.root[0] + prev.root[0]) * fps * fps;
    double ay = (next.root[1] - 2.0 * cur.root[1] + prev.root[1]) * fps * fps;
    double accel = std::sqrt(ax * ax + ay * ay);
    double left = std::min(joint_speed(l, kContactJoints[0]), joint_speed(l, kContactJoints[2]));
    double right = std::min(joint_speed(l, kContactJoints[1]), joint_speed(l, kContactJoints[3]));
    value[static_cast<std::size_t>(l - 1)] = accel * left * right;
  }
  double vmax = *std::max_element(value.begin(), value.end());
  if (vmax <= 0.0) return 0.0;
  return mean_of(value) / vmax;
}

MetricReport evaluate(const std::vector<GroupMotion>& generated,
                      const std::vector<GroupMotion>& reference, const Skeleton& skeleton) {
  if (generated.size() < 2 || reference.size() < 2) {
    throw ValueError("evaluate: need at least 2 motions per side");
  }
  auto start = std::chrono::steady_clock::now();

  auto kin_set = [&](const std::vector<GroupMotion>& motions) {
    std::vector<std::vector<double>> out;
    for (const GroupMotion& m : motions) {
      for (int n = 0; n < m.dancers; ++n) out.push_back(kinematic_features(m, n, skeleton));
    }
    return out;
  };
  auto form_set = [&](const std::vector<GroupMotion>& motions) {
    std::vector<std::vector<double>> out;
    for (const GroupMotion& m : motions) out.push_back(formation_features(m));
    return out;
  };

  MetricReport r;
  r.generated = static_cast<int>(generated.size());
  r.reference = static_cast<int>(reference.size());

  std::vector<std::vector<double>> kin_gen = kin_set(generated);
  r.gmr = frechet_distance(form_set(generated), form_set(reference));
  r.fid = frechet_distance(kin_gen, kin_set(reference));
  r.div = diversity(kin_gen);

  double gmc_sum = 0.0, tif_sum = 0.0, pfc_sum = 0.0;
  int gmc_n = 0, tif_n = 0, pfc_n = 0;
  for (const GroupMotion& m : generated) {
    if (m.dancers >= 2 && m.frames >= 2) {
      gmc_sum += gmc(m, skeleton);
      ++gmc_n;
      tif_sum += tif(m);
      ++tif_n;
    }
    if (m.frames >= 3) {
      for (int n = 0; n < m.dancers; ++n) {
        pfc_sum += pfc(m, n, skeleton);
        ++pfc_n;
      }
    }
  }
  r.gmc = gmc_n > 0 ? gmc_sum / gmc_n : 0.0;
  r.tif = tif_n > 0 ? tif_sum / tif_n : 0.0;
  r.pfc = pfc_n > 0 ? pfc_sum / pfc_n : 0.0;

  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string report_json(const MetricReport& r) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "{\n"
    << "  \"gmr\": " << r.gmr << ",\n"
    << "  \"gmc\": " << r.gmc << ",\n"
    << "  \"tif\": " << r.tif << ",\n"
    << "  \"fid\": " << r.fid << ",\n"
    << "  \"div\": " << r.div << ",\n"
    << "  \"pfc\": " << r.pfc << ",\n"
    << "  \"generated\": " << r.generated << ",\n"
    << "  \"reference\": " << r.reference << ",\n"
    << "  \"seconds\": " << r.seconds << "\n"
    << "}\n";
  return s.str();
}

std::string report_table(const MetricReport& r) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6);
  auto row = [&](const char* name, double v) {
    s << "  " << std::left << std::setw(6) << name << std::right << std::setw(14) << v << "\n";
  };
  s << "metric          value\n";
  row("gmr", r.gmr);
  row("gmc", r.gmc);
  row("tif", r.tif);
  row("fid", r.fid);
  row("div", r.div);
  row("pfc", r.pfc);
  s << "motions: " << r.generated << " generated vs " << r.reference << " reference ("
    << std::setprecision(3) << r.seconds << " s)\n"
    << "note: hand-crafted features; compare orderings, not published tables\n";
  return s.str();
}

}  // namespace gdance
