#pragma once

#include <map>

#include "trs/kdtree.hpp"
#include "trs/mesh.hpp"

namespace trs {

// Rigid alignment applied to the predicted cloud: p -> rotation * p +
// translation. `yaw` records the angle picked by the linear search.
struct Alignment {
  Mat3 rotation;
  Vec3 translation;
  Real yaw = 0;  // radians
  bool degenerate = false;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

struct MetricsReport {
  Real cd = 0;
  std::map<Real, Real> fs;  // threshold -> score
  Alignment alignment;
  int icp_iterations = 0;
  std::uint64_t seed = 0;
};

struct NormalizationRecord {
  Vec3 centroid_pred, centroid_gt;
  Real scale = 1;
};

inline Vec3 centroid(const PointCloud& pc) {
  Vec3 c;
  for (const auto& p : pc.points) c += p;
  return c / Real(pc.points.size());
}

// Translates each cloud to its own centroid and scales both by the single
// factor that maps the GT's largest axis-aligned extent to 1.
inline NormalizationRecord normalize_pair(PointCloud& pred, PointCloud& gt) {
  if (pred.points.empty() || gt.points.empty())
    throw std::invalid_argument("normalize_pair: empty cloud");
  NormalizationRecord rec;
  rec.centroid_pred = centroid(pred);
  rec.centroid_gt = centroid(gt);
  Vec3 lo = gt.points.front(), hi = lo;
  for (const auto& p : gt.points)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  Real extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (extent <= 0) throw std::invalid_argument("normalize_pair: degenerate ground truth");
  rec.scale = 1.0 / extent;
  for (auto& p : pred.points) p = (p - rec.centroid_pred) * rec.scale;
  for (auto& p : gt.points) p = (p - rec.centroid_gt) * rec.scale;
  return rec;
}

// Symmetric Chamfer distance: half-sum of the two directed mean (non-squared)
// L2 nearest-neighbor distances.
inline Real chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty())
    throw std::invalid_argument("chamfer_distance: empty cloud");
  KdTree tree_a(a.points), tree_b(b.points);
  Real sum_ab = 0, sum_ba = 0;
  for (const auto& p : a.points) sum_ab += tree_b.nearest_distance(p);
  for (const auto& p : b.points) sum_ba += tree_a.nearest_distance(p);
  return 0.5 * (sum_ab / a.points.size() + sum_ba / b.points.size());
}

// F-score at absolute threshold tau: harmonic mean of precision (pred points
// within tau of gt) and recall (gt points within tau of pred).
inline Real f_score(const PointCloud& pred, const PointCloud& gt, Real tau) {
  if (pred.points.empty() || gt.points.empty())
    throw std::invalid_argument("f_score: empty cloud");
  if (!(tau > 0)) throw std::invalid_argument("f_score: tau must be positive");
  KdTree tree_pred(pred.points), tree_gt(gt.points);
  Real tau_sq = tau * tau;
  std::size_t hit_p = 0, hit_g = 0;
  for (const auto& p : pred.points)
    if (tree_gt.nearest(p).second <= tau_sq) ++hit_p;
  for (const auto& p : gt.points)
    if (tree_pred.nearest(p).second <= tau_sq) ++hit_g;
  Real precision = Real(hit_p) / pred.points.size();
  Real recall = Real(hit_g) / gt.points.size();
  if (precision + recall == 0) return 0;
  return 2 * precision * recall / (precision + recall);
}

// Brute-force scan over yaw candidates about `axis`, minimizing CD; ties go
// to the smallest angle. Candidates evaluate independently; the argmin
// reduction is index-ordered so parallel and serial runs agree.
inline Alignment rotation_search(const PointCloud& pred, const PointCloud& gt,
                                 Real step = kPi / 180.0, const Vec3& axis = {0, 1, 0},
                                 int threads = 1) {
  int candidates = int(std::lround(2 * kPi / step));
  KdTree tree_gt(gt.points);
  std::vector<Real> cost(candidates);
  parallel_chunks(candidates, threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      Mat3 rot = Mat3::rotation_about(axis, Real(c) * step);
      PointCloud rotated;
      rotated.points.reserve(pred.points.size());
      for (const auto& p : pred.points) rotated.points.push_back(rot * p);
      KdTree tree_rot(rotated.points);
      Real sum_ab = 0, sum_ba = 0;
      for (const auto& p : rotated.points) sum_ab += tree_gt.nearest_distance(p);
      for (const auto& p : gt.points) sum_ba += tree_rot.nearest_distance(p);
      cost[c] = 0.5 * (sum_ab / rotated.points.size() + sum_ba / gt.points.size());
    }
  });
  int best = 0;
  for (int c = 1; c < candidates; ++c)
    if (cost[c] < cost[best]) best = c;
  Alignment a;
  a.yaw = best * step;
  a.rotation = Mat3::rotation_about(axis, a.yaw);
  a.translation = {0, 0, 0};
  return a;
}

namespace detail {

// Eigendecomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
// Returns eigenvalues (descending) and the matching orthonormal columns of V.
inline void symmetric_eigen3(Mat3 a, Vec3& eigenvalues, Mat3& v) {
  v = Mat3();
  for (int sweep = 0; sweep < 50; ++sweep) {
    Real off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off < 1e-30) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0) continue;
        Real theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        Real t = (theta >= 0 ? 1.0 : -1.0) /
                 (std::abs(theta) + std::sqrt(theta * theta + 1));
        Real c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        Mat3 rot;
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transposed() * a * rot;
        v = v * rot;
      }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  Mat3 sorted_v;
  for (int k = 0; k < 3; ++k) {
    eigenvalues[k] = a(order[k], order[k]);
    for (int r = 0; r < 3; ++r) sorted_v(r, k) = v(r, order[k]);
  }
  v = sorted_v;
}

struct Svd3 {
  Mat3 u, v;
  Vec3 sigma;
  bool rank_deficient = false;
};

// SVD of a general 3x3 via the eigendecomposition of A^T A; the third left
// vector is reconstructed by cross product so rank-2 inputs stay usable.
inline Svd3 svd3(const Mat3& a) {
  Svd3 out;
  Vec3 evals;
  symmetric_eigen3(a.transposed() * a, evals, out.v);
  for (int k = 0; k < 3; ++k) out.sigma[k] = std::sqrt(std::max<Real>(evals[k], 0));
  Real tol = out.sigma[0] * 1e-12;
  Vec3 u[3];
  for (int k = 0; k < 3; ++k) {
    Vec3 vk{out.v(0, k), out.v(1, k), out.v(2, k)};
    if (out.sigma[k] > tol && out.sigma[k] > 0) {
      u[k] = (a * vk) / out.sigma[k];
    } else if (k == 2) {
      u[2] = cross(u[0], u[1]);
    } else {
      out.rank_deficient = true;
      u[k] = vk;  // arbitrary orthonormal completion
    }
  }
  if (out.sigma[1] <= tol) out.rank_deficient = true;
  out.u = Mat3::from_columns(u[0], u[1], u[2]);
  return out;
}

// Closed-form rigid transform (no scale) minimizing |R p + t - q|^2 over the
// given correspondences (Kabsch).
inline bool rigid_solve(const std::vector<Vec3>& p, const std::vector<Vec3>& q, Mat3& r, Vec3& t) {
  Vec3 cp, cq;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
  }
  cp = cp / Real(p.size());
  cq = cq / Real(p.size());
  Mat3 h;
  h.m.fill(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    Vec3 a = p[i] - cp, b = q[i] - cq;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) h(row, col) += a[row] * b[col];
  }
  Svd3 svd = svd3(h);
  if (svd.rank_deficient) return false;
  Mat3 ut = svd.u.transposed();
  r = svd.v * ut;
  if (det(r) < 0) {
    // Flip the smallest singular direction.
    Mat3 flip;
    flip(2, 2) = -1;
    r = svd.v * flip * ut;
  }
  t = cq - r * cp;
  return true;
}

}  // namespace detail

// Point-to-point ICP without scale. Alternates nearest-neighbor
// correspondence against gt with a closed-form rigid solve; keeps the best
// alignment seen and stops when the CD improvement drops below tol.
inline Alignment icp_refine(const PointCloud& pred, const PointCloud& gt, Alignment init,
                            int max_iters = 50, Real tol = 1e-6, int* iterations_out = nullptr) {
  if (pred.points.empty() || gt.points.empty())
    throw std::invalid_argument("icp_refine: empty cloud");
  KdTree tree_gt(gt.points);

  auto cd_of = [&](const Alignment& a) {
    PointCloud moved;
    moved.points.reserve(pred.points.size());
    for (const auto& p : pred.points) moved.points.push_back(a.apply(p));
    KdTree tree_moved(moved.points);
    Real s1 = 0, s2 = 0;
    for (const auto& p : moved.points) s1 += tree_gt.nearest_distance(p);
    for (const auto& p : gt.points) s2 += tree_moved.nearest_distance(p);
    return 0.5 * (s1 / moved.points.size() + s2 / gt.points.size());
  };

  Alignment best = init;
  Real best_cd = cd_of(best);
  Alignment current = init;
  Real prev_cd = best_cd;
  int iters = 0;
  for (; iters < max_iters; ++iters) {
    std::vector<Vec3> src(pred.points.size()), dst(pred.points.size());
    for (std::size_t i = 0; i < pred.points.size(); ++i) {
      src[i] = pred.points[i];
      Vec3 moved = current.apply(pred.points[i]);
      dst[i] = gt.points[tree_gt.nearest(moved).first];
    }
    Mat3 r;
    Vec3 t;
    if (!detail::rigid_solve(src, dst, r, t)) {
      best.degenerate = true;
      break;
    }
    current.rotation = r;
    current.translation = t;
    Real cd = cd_of(current);
    if (cd < best_cd) {
      best_cd = cd;
      Real yaw = best.yaw;
      best = current;
      best.yaw = yaw;
    }
    if (std::abs(prev_cd - cd) < tol) {
      ++iters;
      break;
    }
    prev_cd = cd;
  }
  if (iterations_out) *iterations_out = iters;
  return best;
}

inline MetricsReport evaluate_clouds(PointCloud pred, PointCloud gt, std::uint64_t seed = 0,
                                     const std::vector<Real>& taus = {0.1, 0.2, 0.5},
                                     int threads = 1) {
  normalize_pair(pred, gt);
  Alignment align = rotation_search(pred, gt, kPi / 180.0, {0, 1, 0}, threads);
  int icp_iters = 0;
  align = icp_refine(pred, gt, align, 50, 1e-6, &icp_iters);
  PointCloud moved;
  moved.points.reserve(pred.points.size());
  for (const auto& p : pred.points) moved.points.push_back(align.apply(p));
  MetricsReport rep;
  rep.cd = chamfer_distance(moved, gt);
  for (Real tau : taus) rep.fs[tau] = f_score(moved, gt, tau);
  rep.alignment = align;
  rep.icp_iterations = icp_iters;
  rep.seed = seed;
  return rep;
}

// Full evaluation protocol: surface sampling, normalization, yaw search, ICP
// refinement, then CD and F-score at the requested thresholds.
inline MetricsReport evaluate(const Mesh& pred_mesh, const Mesh& gt_mesh, int n_points = 10000,
                              std::uint64_t seed = 0,
                              const std::vector<Real>& taus = {0.1, 0.2, 0.5},
                              int threads = 1) {
  if (pred_mesh.empty() || gt_mesh.empty())
    throw std::invalid_argument("evaluate: empty mesh");
  // Each cloud draws from its own identically seeded stream so identical (or
  // rigidly moved) meshes sample to matching clouds and self-evaluation is
  // limited only by alignment, not by sampling noise.
  Rng rng_pred(seed ^ 0x5eed5eedull), rng_gt(seed ^ 0x5eed5eedull);
  PointCloud pred = sample_surface_points(pred_mesh, n_points, rng_pred);
  PointCloud gt = sample_surface_points(gt_mesh, n_points, rng_gt);
  return evaluate_clouds(std::move(pred), std::move(gt), seed, taus, threads);
}

}  // namespace trs
