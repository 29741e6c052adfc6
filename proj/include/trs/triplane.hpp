#pragma once

#include "trs/common.hpp"

namespace trs {

// Three axis-aligned feature planes (XY, XZ, YZ) covering the cube
// [-extent, extent]^3. Texels are point samples at integer grid coordinates;
// the world cube maps affinely onto [0, R-1]^2 per plane and out-of-range
// points clamp to the border.
//
// Plane storage is row-major over (v, u) with C contiguous channels per
// texel: index(u, v, c) = (v * R + u) * C + c, where (u, v) are the plane's
// two world axes in the order its name lists them (XY: u=x, v=y; XZ: u=x,
// v=z; YZ: u=y, v=z).
struct Triplane {
  int resolution = 0;  // R
  int channels = 0;    // C
  Real extent = 0.87;
  std::array<std::vector<Real>, 3> planes;  // XY, XZ, YZ

  Triplane() = default;
  Triplane(int R, int C, Real ext = 0.87) : resolution(R), channels(C), extent(ext) {
    for (auto& p : planes) p.assign(std::size_t(R) * R * C, 0);
  }

  std::size_t plane_size() const { return std::size_t(resolution) * resolution * channels; }

  Real& at(int plane, int u, int v, int c) {
    return planes[plane][(std::size_t(v) * resolution + u) * channels + c];
  }
  Real at(int plane, int u, int v, int c) const {
    return planes[plane][(std::size_t(v) * resolution + u) * channels + c];
  }
};

namespace detail {

struct BilinearFootprint {
  int u0, v0, u1, v1;
  Real wu, wv;  // fractional weights toward (u1, v1)
};

inline BilinearFootprint plane_footprint(Real a, Real b, int R, Real extent) {
  // World [-extent, extent] -> grid [0, R-1], border clamp.
  auto to_grid = [&](Real w) {
    Real g = (w + extent) / (2 * extent) * (R - 1);
    return std::clamp<Real>(g, 0, R - 1);
  };
  Real gu = to_grid(a), gv = to_grid(b);
  BilinearFootprint f;
  f.u0 = std::min(int(gu), R - 2 >= 0 ? R - 2 : 0);
  f.v0 = std::min(int(gv), R - 2 >= 0 ? R - 2 : 0);
  if (R == 1) f.u0 = f.v0 = 0;
  f.u1 = std::min(f.u0 + 1, R - 1);
  f.v1 = std::min(f.v0 + 1, R - 1);
  f.wu = gu - f.u0;
  f.wv = gv - f.v0;
  return f;
}

// The two world coordinates a plane indexes by, in (u, v) order.
inline std::pair<Real, Real> plane_coords(int plane, const Vec3& p) {
  switch (plane) {
    case 0: return {p.x, p.y};
    case 1: return {p.x, p.z};
    default: return {p.y, p.z};
  }
}

}  // namespace detail

// Bilinear feature lookup; output is the three planes' C-vectors concatenated
// in XY, XZ, YZ order (3*C values written to `out`).
inline void sample_features(const Triplane& tp, const Vec3& p, Real* out) {
  const int R = tp.resolution, C = tp.channels;
  for (int pl = 0; pl < 3; ++pl) {
    auto [a, b] = detail::plane_coords(pl, p);
    auto f = detail::plane_footprint(a, b, R, tp.extent);
    Real w00 = (1 - f.wu) * (1 - f.wv), w10 = f.wu * (1 - f.wv);
    Real w01 = (1 - f.wu) * f.wv, w11 = f.wu * f.wv;
    const Real* base = tp.planes[pl].data();
    const Real* t00 = base + (std::size_t(f.v0) * R + f.u0) * C;
    const Real* t10 = base + (std::size_t(f.v0) * R + f.u1) * C;
    const Real* t01 = base + (std::size_t(f.v1) * R + f.u0) * C;
    const Real* t11 = base + (std::size_t(f.v1) * R + f.u1) * C;
    Real* o = out + pl * C;
    for (int c = 0; c < C; ++c)
      o[c] = w00 * t00[c] + w10 * t10[c] + w01 * t01[c] + w11 * t11[c];
  }
}

inline std::vector<Real> sample_features(const Triplane& tp, const Vec3& p) {
  std::vector<Real> out(3 * std::size_t(tp.channels));
  sample_features(tp, p, out.data());
  return out;
}

// Scatters `upstream` (3*C values) through the bilinear weights into `grad`,
// which must match tp's shape. Accumulation is additive; parallel callers keep
// per-thread grad triplanes and merge them in a fixed order.
inline void sample_features_backward(const Triplane& tp, const Vec3& p,
                                     const Real* upstream, Triplane& grad) {
  const int R = tp.resolution, C = tp.channels;
  for (int pl = 0; pl < 3; ++pl) {
    auto [a, b] = detail::plane_coords(pl, p);
    auto f = detail::plane_footprint(a, b, R, tp.extent);
    Real w00 = (1 - f.wu) * (1 - f.wv), w10 = f.wu * (1 - f.wv);
    Real w01 = (1 - f.wu) * f.wv, w11 = f.wu * f.wv;
    Real* base = grad.planes[pl].data();
    Real* t00 = base + (std::size_t(f.v0) * R + f.u0) * C;
    Real* t10 = base + (std::size_t(f.v0) * R + f.u1) * C;
    Real* t01 = base + (std::size_t(f.v1) * R + f.u0) * C;
    Real* t11 = base + (std::size_t(f.v1) * R + f.u1) * C;
    const Real* u = upstream + pl * C;
    for (int c = 0; c < C; ++c) {
      t00[c] += w00 * u[c];
      t10[c] += w10 * u[c];
      t01[c] += w01 * u[c];
      t11[c] += w11 * u[c];
    }
  }
}

// Shared per-position linear map from C_in channels to factor^2 * C_out
// channels, followed by depth-to-space. One weight/bias set serves all three
// planes. Weights are row-major [factor^2 * C_out][C_in].
struct UpsamplerParams {
  int factor = 2;
  int channels_in = 1024;
  int channels_out = 40;
  std::vector<Real> weight;  // (factor^2 * C_out) x C_in
  std::vector<Real> bias;    // factor^2 * C_out

  UpsamplerParams() = default;
  UpsamplerParams(int f, int cin, int cout) : factor(f), channels_in(cin), channels_out(cout) {
    weight.assign(std::size_t(f) * f * cout * cin, 0);
    bias.assign(std::size_t(f) * f * cout, 0);
  }

  void init_random(Rng& rng) {
    Real scale = 1.0 / std::sqrt(Real(channels_in));
    for (auto& w : weight) w = rng.normal() * scale;
    for (auto& b : bias) b = 0;
  }
};

// coarse R x R x C_in -> fine (factor*R) x (factor*R) x C_out. The factor^2
// channel blocks of the linear output fill a factor x factor block of output
// texels: output texel (u*factor + du, v*factor + dv) takes channel block
// (dv * factor + du).
inline Triplane upsample(const Triplane& coarse, const UpsamplerParams& params) {
  if (coarse.channels != params.channels_in)
    throw std::invalid_argument("upsample: channel count does not match params");
  const int R = coarse.resolution, F = params.factor;
  const int Cin = params.channels_in, Cout = params.channels_out;
  Triplane fine(R * F, Cout, coarse.extent);
  std::vector<Real> mapped(std::size_t(F) * F * Cout);
  for (int pl = 0; pl < 3; ++pl) {
    for (int v = 0; v < R; ++v)
      for (int u = 0; u < R; ++u) {
        const Real* in = coarse.planes[pl].data() + (std::size_t(v) * R + u) * Cin;
        for (int o = 0; o < F * F * Cout; ++o) {
          const Real* wrow = params.weight.data() + std::size_t(o) * Cin;
          Real s = params.bias[o];
          for (int c = 0; c < Cin; ++c) s += wrow[c] * in[c];
          mapped[o] = s;
        }
        for (int dv = 0; dv < F; ++dv)
          for (int du = 0; du < F; ++du) {
            const Real* block = mapped.data() + (std::size_t(dv) * F + du) * Cout;
            Real* out = fine.planes[pl].data() +
                        (std::size_t(v * F + dv) * fine.resolution + (u * F + du)) * Cout;
            std::copy(block, block + Cout, out);
          }
      }
  }
  return fine;
}

}  // namespace trs
