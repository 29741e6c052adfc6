#pragma once

#include "trs/geometry.hpp"
#include "trs/nerf_field.hpp"

namespace trs {

struct RenderConfig {
  int samples_per_ray = 128;
  BoundingSphere sphere{0.87};
  Vec3 background{1, 1, 1};
  bool stratified = false;
  std::uint64_t seed = 0;  // jitter seed for stratified mode
  int threads = 1;
};

// Per-image render result; row-major, pixel (x, y) at index y * width + x.
struct RenderOutput {
  int width = 0, height = 0;
  std::vector<Vec3> rgb;
  std::vector<Real> mask;

  RenderOutput() = default;
  RenderOutput(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h), mask(std::size_t(w) * h, 0) {}
};

struct RayResult {
  Vec3 rgb;
  Real mask = 0;
};

namespace detail {

// Sample positions: uniform bin midpoints over [t_near, t_far] (or jittered
// within bins when stratified); every sample's segment length is the bin
// width, so the segment lengths sum to the chord exactly.
struct RaySamples {
  Real t0 = 0, dt = 0;
  int n = 0;

  Real t(int i, Real jitter = 0.5) const { return t0 + (i + jitter) * dt; }
};

inline RaySamples place_samples(const Ray& clipped, int n) {
  RaySamples s;
  s.t0 = clipped.t_near;
  s.dt = (clipped.t_far - clipped.t_near) / n;
  s.n = n;
  return s;
}

}  // namespace detail

// Alpha-composited color and opacity for one clipped ray. `jitters`, when
// non-null, holds n in-bin offsets in [0,1) (stratified mode); bin midpoints
// otherwise.
inline RayResult render_one_ray(const Triplane& tp, const FieldParams& params,
                                const Ray& ray, const RenderConfig& cfg,
                                const Real* jitters = nullptr) {
  auto clipped = clip_to_sphere(ray, cfg.sphere);
  if (!clipped) return {cfg.background, 0};
  auto s = detail::place_samples(*clipped, cfg.samples_per_ray);
  std::vector<Real> feats(3 * std::size_t(tp.channels));
  Real transmittance = 1;
  Vec3 rgb{0, 0, 0};
  Real mask = 0;
  for (int i = 0; i < s.n; ++i) {
    Real t = s.t(i, jitters ? jitters[i] : 0.5);
    sample_features(tp, clipped->at(t), feats.data());
    FieldSample fs = field_forward(params, feats.data());
    if (!std::isfinite(fs.sigma) || !std::isfinite(fs.rgb.x) || !std::isfinite(fs.rgb.y) ||
        !std::isfinite(fs.rgb.z))
      throw std::runtime_error("render: non-finite field output at sample " + std::to_string(i));
    Real alpha = 1 - std::exp(-fs.sigma * s.dt);
    Real w = transmittance * alpha;
    rgb += w * fs.rgb;
    mask += w;
    transmittance *= (1 - alpha);
  }
  rgb += transmittance * cfg.background;
  return {rgb, mask};
}

inline std::vector<RayResult> render_rays(const Triplane& tp, const FieldParams& params,
                                          const std::vector<Ray>& rays, const RenderConfig& cfg) {
  std::vector<RayResult> out(rays.size());
  parallel_chunks(rays.size(), cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = render_one_ray(tp, params, rays[i], cfg);
  });
  return out;
}

struct PatchRect {
  int x = 0, y = 0, width = 0, height = 0;
};

inline RenderOutput render_patch(const Triplane& tp, const FieldParams& params,
                                 const Camera& camera, const PatchRect& patch,
                                 const RenderConfig& cfg) {
  if (patch.x < 0 || patch.y < 0 || patch.width < 1 || patch.height < 1 ||
      patch.x + patch.width > camera.width || patch.y + patch.height > camera.height)
    throw std::invalid_argument("render_patch: patch outside image bounds");
  RenderOutput out(patch.width, patch.height);
  std::size_t n = std::size_t(patch.width) * patch.height;
  parallel_chunks(n, cfg.threads, [&](std::size_t chunk, std::size_t b, std::size_t e) {
    // Stratified jitter draws are keyed by pixel so the ray set is identical
    // regardless of threading or patch origin.
    for (std::size_t i = b; i < e; ++i) {
      int px = patch.x + int(i % patch.width);
      int py = patch.y + int(i / patch.width);
      RayResult r;
      if (cfg.stratified) {
        Rng rng(cfg.seed * 0x9e3779b9u + std::uint64_t(py) * camera.width + px + 1);
        Ray ray = ray_through_pixel(camera, px, py, {{rng.uniform(), rng.uniform()}});
        std::vector<Real> jit(cfg.samples_per_ray);
        for (auto& j : jit) j = rng.uniform();
        r = render_one_ray(tp, params, ray, cfg, jit.data());
      } else {
        r = render_one_ray(tp, params, ray_through_pixel(camera, px, py), cfg);
      }
      out.rgb[i] = r.rgb;
      out.mask[i] = r.mask;
    }
    (void)chunk;
  });
  return out;
}

inline RenderOutput render_view(const Triplane& tp, const FieldParams& params,
                                const Camera& camera, const RenderConfig& cfg) {
  return render_patch(tp, params, camera, {0, 0, camera.width, camera.height}, cfg);
}

// Reverse-mode pass through compositing, the field MLP, and triplane
// sampling. Forward intermediates are recomputed per ray rather than cached.
// `upstream` holds dL/d(rgb, mask) per ray. Gradients accumulate into
// `tp_grad` / `param_grad`; in parallel mode each chunk owns private buffers
// that are merged in chunk order afterwards, so results do not depend on
// scheduling.
inline void render_backward(const Triplane& tp, const FieldParams& params,
                            const std::vector<Ray>& rays, const RenderConfig& cfg,
                            const std::vector<RayResult>& upstream, Triplane& tp_grad,
                            FieldGrad& param_grad) {
  if (upstream.size() != rays.size())
    throw std::invalid_argument("render_backward: upstream size mismatch");

  auto backward_ray = [&](const Ray& ray, const RayResult& up, Triplane& tg, FieldGrad& pg) {
    auto clipped = clip_to_sphere(ray, cfg.sphere);
    if (!clipped) return;  // miss: constant output, zero gradient
    auto s = detail::place_samples(*clipped, cfg.samples_per_ray);
    const int n = s.n;
    // Forward recompute, keeping per-sample state.
    std::vector<FieldCache> caches(n);
    std::vector<std::vector<Real>> feats(n);
    std::vector<Real> alphas(n), trans(n);
    Real transmittance = 1;
    for (int i = 0; i < n; ++i) {
      feats[i].resize(3 * std::size_t(tp.channels));
      sample_features(tp, clipped->at(s.t(i)), feats[i].data());
      field_forward(params, feats[i].data(), &caches[i]);
      alphas[i] = 1 - std::exp(-caches[i].sample.sigma * s.dt);
      trans[i] = transmittance;
      transmittance *= (1 - alphas[i]);
    }
    // q_i = upstream contribution of sample i being composited with weight
    // T_i a_i; suffix[i] = value of everything after i under unit entry
    // transmittance, so dL/da_i = T_i (q_i - suffix[i]).
    Real suffix = dot(up.rgb, cfg.background);
    std::vector<Real> d_alpha(n);
    for (int i = n - 1; i >= 0; --i) {
      Real q = dot(up.rgb, caches[i].sample.rgb) + up.mask;
      d_alpha[i] = trans[i] * (q - suffix);
      suffix = alphas[i] * q + (1 - alphas[i]) * suffix;
    }
    std::vector<Real> d_feats(3 * std::size_t(tp.channels));
    for (int i = 0; i < n; ++i) {
      Real d_sigma = d_alpha[i] * s.dt * std::exp(-caches[i].sample.sigma * s.dt);
      Vec3 d_rgb = (trans[i] * alphas[i]) * up.rgb;
      field_backward(params, feats[i].data(), caches[i], d_sigma, d_rgb, d_feats.data(), pg);
      sample_features_backward(tp, clipped->at(s.t(i)), d_feats.data(), tg);
    }
  };

  int threads = cfg.threads < 1 ? 1 : cfg.threads;
  if (threads == 1 || rays.size() < 2) {
    for (std::size_t i = 0; i < rays.size(); ++i)
      backward_ray(rays[i], upstream[i], tp_grad, param_grad);
    return;
  }
  std::size_t chunks = std::min<std::size_t>(threads, rays.size());
  std::vector<Triplane> tgs(chunks, Triplane(tp.resolution, tp.channels, tp.extent));
  std::vector<FieldGrad> pgs(chunks, FieldGrad(params));
  parallel_chunks(rays.size(), threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) backward_ray(rays[i], upstream[i], tgs[c], pgs[c]);
  });
  for (std::size_t c = 0; c < chunks; ++c) {
    for (int pl = 0; pl < 3; ++pl)
      for (std::size_t i = 0; i < tp_grad.planes[pl].size(); ++i)
        tp_grad.planes[pl][i] += tgs[c].planes[pl][i];
    param_grad.add_scaled(pgs[c], 1.0);
  }
}

}  // namespace trs
