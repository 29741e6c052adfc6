#pragma once

#include "trs/triplane.hpp"

namespace trs {

struct FieldSample {
  Real sigma = 0;  // density, 1/world-unit
  Vec3 rgb;        // componentwise in (0, 1)
};

namespace detail {

inline Real logistic(Real x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Real silu(Real x) { return x * logistic(x); }

inline Real silu_grad(Real x) {
  Real s = logistic(x);
  return s * (1 + x * (1 - s));
}

}  // namespace detail

struct LinearLayer {
  int in = 0, out = 0;
  std::vector<Real> weight;  // row-major [out][in]
  std::vector<Real> bias;    // [out]

  LinearLayer() = default;
  LinearLayer(int in_, int out_) : in(in_), out(out_) {
    weight.assign(std::size_t(out) * in, 0);
    bias.assign(out, 0);
  }

  void forward(const Real* x, Real* y) const {
    for (int o = 0; o < out; ++o) {
      const Real* w = weight.data() + std::size_t(o) * in;
      Real s = bias[o];
      for (int i = 0; i < in; ++i) s += w[i] * x[i];
      y[o] = s;
    }
  }
};

// Shared SiLU trunk with density and color heads branching from the last
// hidden layer. sigma = exp(raw_density + density_bias), rgb = logistic(raw).
struct FieldParams {
  std::vector<LinearLayer> trunk;  // trunk[0]: feature_dim -> width, rest width -> width
  LinearLayer density_head;        // width -> 1
  LinearLayer color_head;          // width -> 3
  Real density_bias = -1.0;

  FieldParams() = default;
  FieldParams(int feature_dim, int width, int layers) {
    trunk.reserve(layers);
    for (int l = 0; l < layers; ++l)
      trunk.emplace_back(l == 0 ? feature_dim : width, width);
    density_head = LinearLayer(width, 1);
    color_head = LinearLayer(width, 3);
  }

  int feature_dim() const { return trunk.front().in; }
  int width() const { return trunk.back().out; }

  void init_random(Rng& rng) {
    auto init = [&](LinearLayer& l) {
      Real scale = 1.0 / std::sqrt(Real(l.in));
      for (auto& w : l.weight) w = rng.normal() * scale;
      for (auto& b : l.bias) b = 0;
    };
    for (auto& l : trunk) init(l);
    init(density_head);
    init(color_head);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : trunk) n += l.weight.size() + l.bias.size();
    return n + density_head.weight.size() + density_head.bias.size() +
           color_head.weight.size() + color_head.bias.size();
  }
};

// Pre-activation values per trunk layer plus head outputs; enough to run the
// exact backward pass without recomputation.
struct FieldCache {
  std::vector<std::vector<Real>> pre;   // trunk pre-activations
  std::vector<std::vector<Real>> post;  // trunk SiLU outputs
  Real raw_density = 0;
  Vec3 raw_rgb;
  FieldSample sample;
};

inline FieldSample field_forward(const FieldParams& params, const Real* features,
                                 FieldCache* cache = nullptr) {
  const int L = int(params.trunk.size());
  std::vector<std::vector<Real>> pre(L), post(L);
  const Real* x = features;
  for (int i = 0; i < params.trunk.front().in; ++i)
    if (!std::isfinite(features[i]))
      throw std::invalid_argument("field_forward: non-finite feature input");
  for (int l = 0; l < L; ++l) {
    pre[l].resize(params.trunk[l].out);
    params.trunk[l].forward(x, pre[l].data());
    post[l].resize(params.trunk[l].out);
    for (int i = 0; i < params.trunk[l].out; ++i) post[l][i] = detail::silu(pre[l][i]);
    x = post[l].data();
  }
  Real raw_density;
  params.density_head.forward(x, &raw_density);
  Real raw_rgb[3];
  params.color_head.forward(x, raw_rgb);
  FieldSample out;
  out.sigma = std::exp(raw_density + params.density_bias);
  out.rgb = {detail::logistic(raw_rgb[0]), detail::logistic(raw_rgb[1]),
             detail::logistic(raw_rgb[2])};
  if (cache) {
    cache->pre = std::move(pre);
    cache->post = std::move(post);
    cache->raw_density = raw_density;
    cache->raw_rgb = {raw_rgb[0], raw_rgb[1], raw_rgb[2]};
    cache->sample = out;
  }
  return out;
}

inline FieldSample field_forward(const FieldParams& params, const std::vector<Real>& features) {
  if (int(features.size()) != params.feature_dim())
    throw std::invalid_argument("field_forward: feature width mismatch");
  return field_forward(params, features.data());
}

// Gradient buffers with the same layout as FieldParams.
struct FieldGrad {
  std::vector<LinearLayer> trunk;
  LinearLayer density_head;
  LinearLayer color_head;

  explicit FieldGrad(const FieldParams& p) {
    for (const auto& l : p.trunk) trunk.emplace_back(l.in, l.out);
    density_head = LinearLayer(p.density_head.in, 1);
    color_head = LinearLayer(p.color_head.in, 3);
  }

  void add_scaled(const FieldGrad& o, Real s) {
    auto axpy = [s](LinearLayer& a, const LinearLayer& b) {
      for (std::size_t i = 0; i < a.weight.size(); ++i) a.weight[i] += s * b.weight[i];
      for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += s * b.bias[i];
    };
    for (std::size_t l = 0; l < trunk.size(); ++l) axpy(trunk[l], o.trunk[l]);
    axpy(density_head, o.density_head);
    axpy(color_head, o.color_head);
  }
};

// Reverse-mode pass given upstream gradients w.r.t. (sigma, rgb). Writes the
// feature gradient to `d_features` (feature_dim values) and accumulates
// parameter gradients into `grad`.
inline void field_backward(const FieldParams& params, const Real* features,
                           const FieldCache& cache, Real d_sigma, const Vec3& d_rgb,
                           Real* d_features, FieldGrad& grad) {
  const int L = int(params.trunk.size());
  const int W = params.width();

  // Heads. d raw_density = d_sigma * sigma; d raw_rgb = d_rgb * p(1-p).
  Real d_raw_density = d_sigma * cache.sample.sigma;
  Vec3 d_raw_rgb;
  for (int c = 0; c < 3; ++c) {
    Real p = cache.sample.rgb[c];
    d_raw_rgb[c] = d_rgb[c] * p * (1 - p);
  }

  const Real* h_last = cache.post[L - 1].data();
  std::vector<Real> d_hidden(W, 0);
  grad.density_head.bias[0] += d_raw_density;
  for (int i = 0; i < W; ++i) {
    grad.density_head.weight[i] += d_raw_density * h_last[i];
    d_hidden[i] += d_raw_density * params.density_head.weight[i];
  }
  for (int c = 0; c < 3; ++c) {
    grad.color_head.bias[c] += d_raw_rgb[c];
    const Real* wrow = params.color_head.weight.data() + std::size_t(c) * W;
    Real* grow = grad.color_head.weight.data() + std::size_t(c) * W;
    for (int i = 0; i < W; ++i) {
      grow[i] += d_raw_rgb[c] * h_last[i];
      d_hidden[i] += d_raw_rgb[c] * wrow[i];
    }
  }

  // Trunk, last layer to first.
  std::vector<Real> d_pre, d_in;
  for (int l = L - 1; l >= 0; --l) {
    const LinearLayer& lay = params.trunk[l];
    d_pre.assign(lay.out, 0);
    for (int i = 0; i < lay.out; ++i)
      d_pre[i] = d_hidden[i] * detail::silu_grad(cache.pre[l][i]);
    const Real* in = (l == 0) ? features : cache.post[l - 1].data();
    d_in.assign(lay.in, 0);
    LinearLayer& g = grad.trunk[l];
    for (int o = 0; o < lay.out; ++o) {
      g.bias[o] += d_pre[o];
      const Real* wrow = lay.weight.data() + std::size_t(o) * lay.in;
      Real* grow = g.weight.data() + std::size_t(o) * lay.in;
      Real dp = d_pre[o];
      for (int i = 0; i < lay.in; ++i) {
        grow[i] += dp * in[i];
        d_in[i] += dp * wrow[i];
      }
    }
    d_hidden = d_in;
  }
  std::copy(d_hidden.begin(), d_hidden.end(), d_features);
}

inline FieldSample field_at_point(const FieldParams& params, const Triplane& tp, const Vec3& p) {
  std::vector<Real> feats = sample_features(tp, p);
  return field_forward(params, feats.data());
}

}  // namespace trs
