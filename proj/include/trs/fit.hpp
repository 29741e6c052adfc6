#pragma once

#include "trs/losses.hpp"

namespace trs {

struct OptimizerConfig {
  Real base_lr = 4e-4;
  int warmup_steps = 2000;
  int total_steps = 0;
  Real beta1 = 0.9, beta2 = 0.999;
  Real eps = 1e-8;
  Real weight_decay = 0;
};

// Linear warmup to base_lr, then cosine annealing to zero.
inline Real lr_at_step(const OptimizerConfig& cfg, int step) {
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("lr_at_step: step out of [0, total_steps]");
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    return cfg.base_lr * Real(step) / Real(cfg.warmup_steps);
  if (cfg.total_steps == cfg.warmup_steps) return cfg.base_lr;
  Real progress = Real(step - cfg.warmup_steps) / Real(cfg.total_steps - cfg.warmup_steps);
  return cfg.base_lr * 0.5 * (1 + std::cos(kPi * progress));
}

// Decoupled-weight-decay Adam over a flat parameter vector.
struct AdamState {
  std::vector<Real> m, v;
  int step = 0;

  explicit AdamState(std::size_t n) : m(n, 0), v(n, 0) {}
};

// One update at learning rate `lr`. Rejects non-finite gradients (state and
// parameters unchanged) by throwing.
inline void adamw_step(std::vector<Real>& params, const std::vector<Real>& grads,
                       AdamState& state, const OptimizerConfig& cfg, Real lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adamw_step: shape mismatch");
  for (Real g : grads)
    if (!std::isfinite(g)) throw std::runtime_error("adamw_step: non-finite gradient");
  int t = ++state.step;
  Real bc1 = 1 - std::pow(cfg.beta1, t);
  Real bc2 = 1 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * grads[i] * grads[i];
    Real mhat = state.m[i] / bc1;
    Real vhat = state.v[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

// ---- synthetic scenes ----

enum class ShapeKind { Sphere, Box, Superquadric };

// Analytic solid contained in the bounding sphere. `size` is the radius for
// spheres, half-extents for boxes, and semi-axes for superquadrics.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  Vec3 center{0, 0, 0};
  Vec3 size{0.5, 0.5, 0.5};
  Real exponent = 4;  // superquadric only

  // Negative inside, positive outside.
  Real implicit(const Vec3& p) const {
    Vec3 q = p - center;
    switch (kind) {
      case ShapeKind::Sphere:
        return norm(q) - size.x;
      case ShapeKind::Box: {
        Vec3 d{std::abs(q.x) - size.x, std::abs(q.y) - size.y, std::abs(q.z) - size.z};
        return std::max({d.x, d.y, d.z});
      }
      case ShapeKind::Superquadric: {
        Real s = std::pow(std::abs(q.x / size.x), exponent) +
                 std::pow(std::abs(q.y / size.y), exponent) +
                 std::pow(std::abs(q.z / size.z), exponent);
        return s - 1;
      }
    }
    return 1;
  }

  Vec3 normal_at(const Vec3& p) const {
    const Real h = 1e-5;
    Vec3 n;
    for (int a = 0; a < 3; ++a) {
      Vec3 lo = p, hi = p;
      lo[a] -= h;
      hi[a] += h;
      n[a] = implicit(hi) - implicit(lo);
    }
    return normalized(n);
  }

  // First intersection of the ray with the surface, if any. Sphere uses the
  // closed form; box and superquadric bracket the sign change of the implicit
  // function over the bounding-sphere chord and bisect.
  std::optional<Real> intersect(const Ray& ray) const {
    if (kind == ShapeKind::Sphere) {
      Vec3 oc = ray.origin - center;
      Real b = dot(oc, ray.direction);
      Real c = dot(oc, oc) - size.x * size.x;
      Real disc = b * b - c;
      if (disc < 0) return std::nullopt;
      Real t = -b - std::sqrt(disc);
      if (t < 0) return std::nullopt;
      return t;
    }
    Real bound = norm(center) + std::max({size.x, size.y, size.z}) * 2;
    auto clipped = clip_to_sphere(ray, BoundingSphere{bound});
    if (!clipped) return std::nullopt;
    const int steps = 256;
    Real dt = (clipped->t_far - clipped->t_near) / steps;
    Real prev_t = clipped->t_near;
    Real prev_v = implicit(ray.at(prev_t));
    for (int i = 1; i <= steps; ++i) {
      Real t = clipped->t_near + i * dt;
      Real v = implicit(ray.at(t));
      if (prev_v > 0 && v <= 0) {
        Real lo = prev_t, hi = t;
        for (int it = 0; it < 60; ++it) {
          Real mid = 0.5 * (lo + hi);
          (implicit(ray.at(mid)) > 0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
      }
      prev_t = t;
      prev_v = v;
    }
    return std::nullopt;
  }
};

struct SyntheticScene {
  ShapeSpec shape;
  std::vector<SupervisionView> views;
};

// Normal-colored albedo; smooth over the surface and independent of view.
inline Vec3 default_albedo(const Vec3& /*point*/, const Vec3& normal) {
  return {0.5 + 0.5 * normal.x, 0.5 + 0.5 * normal.y, 0.5 + 0.5 * normal.z};
}

// Cameras at distance 2 looking at the origin, alternating +-30 degree
// elevation around the azimuth ring so both polar caps get direct coverage.
// The 55 degree fov puts the whole modeling sphere (radius 0.87) inside every
// frustum -- asin(0.87/2) ~ 25.8 < 27.5 degrees -- so no density inside the
// renderer's support escapes supervision. Views are rendered analytically by
// ray-shape intersection; masks are exact 0/1 hit indicators.
inline SyntheticScene make_synthetic_scene(const ShapeSpec& shape, int n_views = 8,
                                           int resolution = 64,
                                           const Vec3& background = {1, 1, 1}) {
  SyntheticScene scene;
  scene.shape = shape;
  const Real distance = 2.0, fov = 55.0 * kPi / 180.0;
  for (int v = 0; v < n_views; ++v) {
    Real azimuth = 2 * kPi * v / n_views;
    Real elevation = (v % 2 == 0 ? 30.0 : -30.0) * kPi / 180.0;
    Vec3 eye{distance * std::cos(elevation) * std::cos(azimuth),
             distance * std::sin(elevation),
             distance * std::cos(elevation) * std::sin(azimuth)};
    SupervisionView view;
    view.camera = look_at_camera(eye, {0, 0, 0}, {0, 1, 0}, fov, resolution, resolution);
    view.target = RenderOutput(resolution, resolution);
    for (int py = 0; py < resolution; ++py)
      for (int px = 0; px < resolution; ++px) {
        Ray ray = ray_through_pixel(view.camera, px, py);
        std::size_t i = std::size_t(py) * resolution + px;
        if (auto t = shape.intersect(ray)) {
          Vec3 p = ray.at(*t);
          view.target.rgb[i] = default_albedo(p, shape.normal_at(p));
          view.target.mask[i] = 1;
        } else {
          view.target.rgb[i] = background;
          view.target.mask[i] = 0;
        }
      }
    scene.views.push_back(std::move(view));
  }
  return scene;
}

// ---- the fit loop ----

struct FitConfig {
  int triplane_resolution = 32;
  int triplane_channels = 16;
  Real extent = 0.87;
  int field_width = 64;
  int field_layers = 4;
  OptimizerConfig optimizer;
  RenderConfig render;
  LossWeights weights;
  PatchPolicy patch;
  std::uint64_t seed = 0;
};

struct FitState {
  Triplane triplane;
  FieldParams field;
  AdamState adam;
  int step = 0;
  std::vector<LossReport> history;

  FitState(const FitConfig& cfg, Rng& rng)
      : triplane(cfg.triplane_resolution, cfg.triplane_channels, cfg.extent),
        field(3 * cfg.triplane_channels, cfg.field_width, cfg.field_layers),
        adam(0) {
    for (auto& plane : triplane.planes)
      for (auto& x : plane) x = rng.normal() * 0.1;
    field.init_random(rng);
    adam = AdamState(parameter_count());
  }

  std::size_t parameter_count() const {
    return 3 * triplane.plane_size() + field.parameter_count();
  }
};

namespace detail {

inline void flatten_params(const Triplane& tp, const FieldParams& f, std::vector<Real>& out) {
  out.clear();
  for (const auto& plane : tp.planes) out.insert(out.end(), plane.begin(), plane.end());
  auto layer = [&](const LinearLayer& l) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  };
  for (const auto& l : f.trunk) layer(l);
  layer(f.density_head);
  layer(f.color_head);
}

inline void unflatten_params(const std::vector<Real>& in, Triplane& tp, FieldParams& f) {
  std::size_t pos = 0;
  for (auto& plane : tp.planes) {
    std::copy(in.begin() + pos, in.begin() + pos + plane.size(), plane.begin());
    pos += plane.size();
  }
  auto layer = [&](LinearLayer& l) {
    std::copy(in.begin() + pos, in.begin() + pos + l.weight.size(), l.weight.begin());
    pos += l.weight.size();
    std::copy(in.begin() + pos, in.begin() + pos + l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  };
  for (auto& l : f.trunk) layer(l);
  layer(f.density_head);
  layer(f.color_head);
}

inline void flatten_grads(const Triplane& tg, const FieldGrad& fg, std::vector<Real>& out) {
  out.clear();
  for (const auto& plane : tg.planes) out.insert(out.end(), plane.begin(), plane.end());
  auto layer = [&](const LinearLayer& l) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  };
  for (const auto& l : fg.trunk) layer(l);
  layer(fg.density_head);
  layer(fg.color_head);
}

}  // namespace detail

struct FitAbort : std::runtime_error {
  int step;
  FitAbort(int s, const std::string& what) : std::runtime_error(what), step(s) {}
};

// One optimization step: pick a view, pick a foreground-biased patch, render
// it, compute the combined loss, backpropagate through renderer/field/
// triplane, and apply the scheduled AdamW update.
inline LossReport fit_step(FitState& state, const SyntheticScene& scene, const FitConfig& cfg,
                           Rng& rng) {
  const SupervisionView& view = scene.views[rng.uniform_index(scene.views.size())];
  PatchSpec patch = sample_patch(view.target, rng, cfg.patch);

  std::vector<Ray> rays;
  rays.reserve(std::size_t(patch.size) * patch.size);
  RenderOutput gt_crop(patch.size, patch.size);
  for (int y = 0; y < patch.size; ++y)
    for (int x = 0; x < patch.size; ++x) {
      rays.push_back(ray_through_pixel(view.camera, patch.x + x, patch.y + y));
      std::size_t src = std::size_t(patch.y + y) * view.target.width + (patch.x + x);
      gt_crop.rgb[std::size_t(y) * patch.size + x] = view.target.rgb[src];
      gt_crop.mask[std::size_t(y) * patch.size + x] = view.target.mask[src];
    }

  std::vector<RayResult> results = render_rays(state.triplane, state.field, rays, cfg.render);
  RenderOutput pred(patch.size, patch.size);
  for (std::size_t i = 0; i < results.size(); ++i) {
    pred.rgb[i] = results[i].rgb;
    pred.mask[i] = results[i].mask;
  }

  std::vector<SupervisionView> target_views(1);
  target_views[0].target = gt_crop;
  target_views[0].camera = view.camera;
  std::vector<ImageGrad> grads{ImageGrad(pred)};
  LossReport report = total_loss({pred}, target_views, cfg.weights, nullptr, &grads);
  if (!std::isfinite(report.total))
    throw FitAbort(state.step, "fit: non-finite loss at step " + std::to_string(state.step));

  std::vector<RayResult> upstream(rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) {
    upstream[i].rgb = grads[0].rgb[i];
    upstream[i].mask = grads[0].mask[i];
  }
  Triplane tp_grad(state.triplane.resolution, state.triplane.channels, state.triplane.extent);
  FieldGrad f_grad(state.field);
  render_backward(state.triplane, state.field, rays, cfg.render, upstream, tp_grad, f_grad);

  std::vector<Real> flat_p, flat_g;
  detail::flatten_params(state.triplane, state.field, flat_p);
  detail::flatten_grads(tp_grad, f_grad, flat_g);
  Real lr = lr_at_step(cfg.optimizer, state.step);
  try {
    adamw_step(flat_p, flat_g, state.adam, cfg.optimizer, lr);
  } catch (const std::runtime_error& e) {
    throw FitAbort(state.step, e.what());
  }
  detail::unflatten_params(flat_p, state.triplane, state.field);
  ++state.step;
  return report;
}

using FitCallback = std::function<void(int step, const LossReport&)>;

inline FitState fit(const SyntheticScene& scene, const FitConfig& cfg,
                    const FitCallback& callback = nullptr) {
  if (scene.views.empty()) throw std::invalid_argument("fit: scene has no views");
  Rng rng(cfg.seed ^ 0xf17f17ull);
  FitState state(cfg, rng);
  for (int s = 0; s < cfg.optimizer.total_steps; ++s) {
    LossReport rep = fit_step(state, scene, cfg, rng);
    state.history.push_back(rep);
    if (callback) callback(s, rep);
  }
  return state;
}

}  // namespace trs
