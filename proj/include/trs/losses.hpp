#pragma once

#include <functional>

#include "trs/renderer.hpp"

namespace trs {

// One supervision view: ground-truth image/mask plus the camera that produced
// them. Values in [0, 1].
struct SupervisionView {
  RenderOutput target;  // image + mask
  Camera camera;
};

struct LossWeights {
  Real lambda_lpips = 2.0;
  Real lambda_mask = 0.05;
};

struct LossReport {
  Real mse = 0, perceptual = 0, mask_bce = 0, total = 0;
  std::vector<Real> per_view_total;
};

// Image-space gradient buffers matching a RenderOutput.
struct ImageGrad {
  std::vector<Vec3> rgb;
  std::vector<Real> mask;

  explicit ImageGrad(const RenderOutput& like)
      : rgb(like.rgb.size()), mask(like.mask.size(), 0) {}
};

namespace detail {

inline void check_same_shape(const RenderOutput& a, const RenderOutput& b, const char* op) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// Mean squared error over all rgb elements; gradient accumulates into `grad`
// scaled by `grad_scale`.
inline Real mse_loss(const RenderOutput& pred, const RenderOutput& gt, ImageGrad* grad = nullptr,
                     Real grad_scale = 1.0) {
  detail::check_same_shape(pred, gt, "mse_loss");
  std::size_t n = pred.rgb.size() * 3;
  Real sum = 0;
  for (std::size_t i = 0; i < pred.rgb.size(); ++i) {
    Vec3 d = pred.rgb[i] - gt.rgb[i];
    sum += dot(d, d);
    if (grad) grad->rgb[i] += d * (2.0 * grad_scale / n);
  }
  return sum / n;
}

constexpr Real kBceClamp = 1e-6;

// Mean binary cross-entropy between predicted and ground-truth masks.
// Predictions are clamped to [eps, 1-eps] before the logs; the gradient is
// zero where the clamp is active.
inline Real mask_bce_loss(const RenderOutput& pred, const RenderOutput& gt,
                          ImageGrad* grad = nullptr, Real grad_scale = 1.0) {
  detail::check_same_shape(pred, gt, "mask_bce_loss");
  std::size_t n = pred.mask.size();
  Real sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Real m = gt.mask[i];
    Real p = std::clamp(pred.mask[i], kBceClamp, 1 - kBceClamp);
    sum += -(m * std::log(p) + (1 - m) * std::log(1 - p));
    if (grad && pred.mask[i] > kBceClamp && pred.mask[i] < 1 - kBceClamp)
      grad->mask[i] += grad_scale * (-m / p + (1 - m) / (1 - p)) / n;
  }
  return sum / n;
}

// Perceptual backend contract: non-negative, zero when pred == gt,
// differentiable; accumulates d(loss)/d(pred rgb) scaled by grad_scale.
using PerceptualBackend =
    std::function<Real(const RenderOutput& pred, const RenderOutput& gt, ImageGrad* grad,
                       Real grad_scale)>;

namespace detail {

// L1 over finite-difference image gradients at one scale.
inline Real gradient_l1(const std::vector<Vec3>& a, const std::vector<Vec3>& b, int w, int h,
                        std::vector<Vec3>* da, std::vector<Vec3>* db, Real scale) {
  Real sum = 0;
  std::size_t terms = 0;
  auto edge = [&](std::size_t i, std::size_t j) {
    Vec3 ga = a[j] - a[i];
    Vec3 gb = b[j] - b[i];
    for (int c = 0; c < 3; ++c) {
      Real d = ga[c] - gb[c];
      sum += std::abs(d);
      ++terms;
      if (da) {
        Real sgn = (d > 0) - (d < 0);
        (*da)[j][c] += sgn;
        (*da)[i][c] -= sgn;
      }
    }
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) edge(std::size_t(y) * w + x, std::size_t(y) * w + x + 1);
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) edge(std::size_t(y) * w + x, std::size_t(y + 1) * w + x);
  if (terms == 0) return 0;
  if (da)
    for (auto& g : *da) g *= scale / terms;
  (void)db;
  return sum / terms;
}

inline void downscale2(const std::vector<Vec3>& in, int w, int h, std::vector<Vec3>& out,
                       int& ow, int& oh) {
  ow = w / 2;
  oh = h / 2;
  out.assign(std::size_t(ow) * oh, Vec3{});
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      Vec3 s = in[std::size_t(2 * y) * w + 2 * x] + in[std::size_t(2 * y) * w + 2 * x + 1] +
               in[std::size_t(2 * y + 1) * w + 2 * x] + in[std::size_t(2 * y + 1) * w + 2 * x + 1];
      out[std::size_t(y) * ow + x] = s * 0.25;
    }
}

inline void upscale2_accumulate(const std::vector<Vec3>& g, int ow, int oh,
                                std::vector<Vec3>& dst, int w) {
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      Vec3 v = g[std::size_t(y) * ow + x] * 0.25;
      dst[std::size_t(2 * y) * w + 2 * x] += v;
      dst[std::size_t(2 * y) * w + 2 * x + 1] += v;
      dst[std::size_t(2 * y + 1) * w + 2 * x] += v;
      dst[std::size_t(2 * y + 1) * w + 2 * x + 1] += v;
    }
}

}  // namespace detail

// Default perceptual backend: L1 between finite-difference image gradients at
// three dyadic scales. This is a structural proxy, NOT LPIPS; it is zero for
// any pair of flat images and insensitive to global color shifts.
inline Real gradient_proxy_perceptual(const RenderOutput& pred, const RenderOutput& gt,
                                      ImageGrad* grad, Real grad_scale) {
  detail::check_same_shape(pred, gt, "perceptual_loss");
  Real total = 0;
  std::vector<Vec3> pa = pred.rgb, pb = gt.rgb;
  int w = pred.width, h = pred.height;
  std::vector<std::vector<Vec3>> level_inputs;  // pred pyramid for backprop
  std::vector<std::array<int, 2>> dims;
  std::vector<std::vector<Vec3>> level_grads;
  for (int level = 0; level < 3; ++level) {
    if (w < 2 || h < 2) break;
    level_inputs.push_back(pa);
    dims.push_back({w, h});
    std::vector<Vec3> da(grad ? pa.size() : 0);
    total += detail::gradient_l1(pa, pb, w, h, grad ? &da : nullptr, nullptr, 1.0);
    level_grads.push_back(std::move(da));
    std::vector<Vec3> na, nb;
    int nw, nh;
    detail::downscale2(pa, w, h, na, nw, nh);
    detail::downscale2(pb, w, h, nb, nw, nh);
    pa = std::move(na);
    pb = std::move(nb);
    w = nw;
    h = nh;
  }
  if (grad) {
    // Chain each level's gradient back up through the box downsamples.
    std::vector<Vec3> acc;
    for (int level = int(level_grads.size()) - 1; level >= 0; --level) {
      if (acc.empty()) {
        acc = level_grads[level];
      } else {
        std::vector<Vec3> up(level_grads[level].size());
        int cw = dims[level][0], ch = dims[level][1];
        detail::upscale2_accumulate(acc, cw / 2, ch / 2, up, cw);
        for (std::size_t i = 0; i < up.size(); ++i) up[i] += level_grads[level][i];
        acc = std::move(up);
      }
    }
    for (std::size_t i = 0; i < acc.size(); ++i) grad->rgb[i] += acc[i] * grad_scale;
  }
  return total;
}

inline Real perceptual_loss(const RenderOutput& pred, const RenderOutput& gt,
                            const PerceptualBackend& backend, ImageGrad* grad = nullptr,
                            Real grad_scale = 1.0) {
  Real v = backend ? backend(pred, gt, grad, grad_scale)
                   : gradient_proxy_perceptual(pred, gt, grad, grad_scale);
  if (!std::isfinite(v) || v < 0)
    throw std::runtime_error("perceptual_loss: backend violated its contract");
  return v;
}

// Combined per-view loss: mean over views of
// mse + lambda_lpips * perceptual + lambda_mask * mask_bce.
// Gradients w.r.t. every rendered rgb/mask accumulate into `grads` (one
// ImageGrad per view) when non-null.
inline LossReport total_loss(const std::vector<RenderOutput>& renders,
                             const std::vector<SupervisionView>& views, const LossWeights& w,
                             const PerceptualBackend& backend = nullptr,
                             std::vector<ImageGrad>* grads = nullptr) {
  if (renders.empty() || renders.size() != views.size())
    throw std::invalid_argument("total_loss: need V >= 1 matching renders and views");
  const Real inv_v = 1.0 / Real(renders.size());
  LossReport rep;
  for (std::size_t v = 0; v < renders.size(); ++v) {
    ImageGrad* g = grads ? &(*grads)[v] : nullptr;
    Real mse = mse_loss(renders[v], views[v].target, g, inv_v);
    Real perc = perceptual_loss(renders[v], views[v].target, backend, g, inv_v * w.lambda_lpips);
    Real bce = mask_bce_loss(renders[v], views[v].target, g, inv_v * w.lambda_mask);
    rep.mse += mse * inv_v;
    rep.perceptual += perc * inv_v;
    rep.mask_bce += bce * inv_v;
    rep.per_view_total.push_back(mse + w.lambda_lpips * perc + w.lambda_mask * bce);
  }
  rep.total = rep.mse + w.lambda_lpips * rep.perceptual + w.lambda_mask * rep.mask_bce;
  return rep;
}

// Random training crop, biased toward the mask's foreground.
struct PatchSpec {
  int x = 0, y = 0;
  int size = 128;
  int source = 512;

  PatchRect rect() const { return {x, y, size, size}; }
};

struct PatchPolicy {
  int patch_size = 128;
  Real p_foreground = 0.8;
  Real foreground_threshold = 0.5;
};

// With probability p_foreground, centers the crop on a uniformly drawn
// foreground pixel (clamped inside the image); otherwise draws the top-left
// uniformly. Falls back to uniform when the mask has no foreground.
inline PatchSpec sample_patch(const RenderOutput& gt, Rng& rng, const PatchPolicy& policy) {
  const int S = policy.patch_size;
  if (gt.width < S || gt.height < S)
    throw std::invalid_argument("sample_patch: source smaller than patch");
  PatchSpec spec;
  spec.size = S;
  spec.source = gt.width;
  bool use_fg = rng.uniform() < policy.p_foreground;
  if (use_fg) {
    std::vector<std::uint32_t> fg;
    for (std::uint32_t i = 0; i < gt.mask.size(); ++i)
      if (gt.mask[i] > policy.foreground_threshold) fg.push_back(i);
    if (!fg.empty()) {
      std::uint32_t pick = fg[rng.uniform_index(fg.size())];
      int cx = int(pick % gt.width), cy = int(pick / gt.width);
      spec.x = std::clamp(cx - S / 2, 0, gt.width - S);
      spec.y = std::clamp(cy - S / 2, 0, gt.height - S);
      return spec;
    }
  }
  spec.x = int(rng.uniform_index(gt.width - S + 1));
  spec.y = int(rng.uniform_index(gt.height - S + 1));
  return spec;
}

}  // namespace trs
