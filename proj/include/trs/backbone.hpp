#pragma once

#include "trs/nerf_field.hpp"
#include "trs/renderer.hpp"

namespace trs {

// Camera-free image-to-triplane network. No operation in this module takes a
// Camera; pose is implicit in the learned mapping.

struct BackboneConfig {
  int image_resolution = 512;
  int patch_size = 16;
  int encoder_layers = 12;
  int encoder_channels = 768;
  int triplane_tokens_side = 32;  // tokens = side * side * 3
  int triplane_token_channels = 16;
  int backbone_channels = 1024;
  int backbone_layers = 16;
  int heads = 16;
  int head_dim = 64;
  int cross_attention_dim = 768;
  int upsample_factor = 2;
  int triplane_out_channels = 40;

  static BackboneConfig paper() { return {}; }

  static BackboneConfig toy() {
    BackboneConfig c;
    c.image_resolution = 64;
    c.patch_size = 16;
    c.encoder_layers = 2;
    c.encoder_channels = 32;
    c.triplane_tokens_side = 4;
    c.triplane_token_channels = 8;
    c.backbone_channels = 32;
    c.backbone_layers = 2;
    c.heads = 4;
    c.head_dim = 8;
    c.cross_attention_dim = 32;
    c.triplane_out_channels = 8;
    return c;
  }

  int image_tokens() const {
    int side = image_resolution / patch_size;
    return side * side;
  }
  int triplane_tokens() const { return triplane_tokens_side * triplane_tokens_side * 3; }
  int attention_inner() const { return heads * head_dim; }

  void validate() const {
    if (image_resolution % patch_size != 0)
      throw std::invalid_argument("backbone: resolution not divisible by patch size");
    if (heads < 1 || head_dim < 1 || backbone_channels < 1)
      throw std::invalid_argument("backbone: bad attention dims");
  }
};

// Closed-form dimension trace for a config; everything here is arithmetic on
// the config, no weights are allocated.
struct ShapeTrace {
  int image_tokens, image_token_width;
  int triplane_tokens, triplane_token_width;
  int backbone_width, heads, head_dim;
  int coarse_plane_resolution, coarse_plane_channels;
  int final_plane_resolution, final_plane_channels;
};

inline ShapeTrace shape_trace(const BackboneConfig& cfg) {
  cfg.validate();
  ShapeTrace t;
  t.image_tokens = cfg.image_tokens();
  t.image_token_width = cfg.encoder_channels;
  t.triplane_tokens = cfg.triplane_tokens();
  t.triplane_token_width = cfg.triplane_token_channels;
  t.backbone_width = cfg.backbone_channels;
  t.heads = cfg.heads;
  t.head_dim = cfg.head_dim;
  t.coarse_plane_resolution = cfg.triplane_tokens_side;
  t.coarse_plane_channels = cfg.backbone_channels;
  t.final_plane_resolution = cfg.triplane_tokens_side * cfg.upsample_factor;
  t.final_plane_channels = cfg.triplane_out_channels;
  return t;
}

// Row-major token matrix: token t's vector starts at data[t * width].
struct TokenSequence {
  int count = 0, width = 0;
  std::vector<Real> data;

  TokenSequence() = default;
  TokenSequence(int n, int w) : count(n), width(w), data(std::size_t(n) * w, 0) {}

  Real* token(int t) { return data.data() + std::size_t(t) * width; }
  const Real* token(int t) const { return data.data() + std::size_t(t) * width; }
};

namespace detail {

inline void layer_norm(const Real* x, int n, Real* out) {
  Real mean = 0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  Real var = 0;
  for (int i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= n;
  Real inv = 1.0 / std::sqrt(var + 1e-6);
  for (int i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv;
}

}  // namespace detail

// Optional capture of softmax rows for tests: weights[q * context + k] per
// head, concatenated head-major.
struct AttentionDebug {
  std::vector<std::vector<Real>> head_weights;  // [head][q * n_ctx + k]
};

// One transformer block: pre-norm multi-head attention (self when context ==
// queries) with residual, then a pre-norm 4x feed-forward with residual.
struct AttentionLayerParams {
  int channels = 0, context_dim = 0, heads = 0, head_dim = 0;
  LinearLayer wq, wk, wv, wo;  // q: channels->inner, k/v: context->inner, o: inner->channels
  LinearLayer ff1, ff2;        // channels -> 4*channels -> channels

  AttentionLayerParams() = default;
  AttentionLayerParams(int ch, int ctx, int h, int hd)
      : channels(ch), context_dim(ctx), heads(h), head_dim(hd) {
    int inner = h * hd;
    wq = LinearLayer(ch, inner);
    wk = LinearLayer(ctx, inner);
    wv = LinearLayer(ctx, inner);
    wo = LinearLayer(inner, ch);
    ff1 = LinearLayer(ch, 4 * ch);
    ff2 = LinearLayer(4 * ch, ch);
  }

  void init_random(Rng& rng) {
    for (LinearLayer* l : {&wq, &wk, &wv, &wo, &ff1, &ff2}) {
      Real scale = 1.0 / std::sqrt(Real(l->in));
      for (auto& w : l->weight) w = rng.normal() * scale;
      for (auto& b : l->bias) b = 0;
    }
  }
};

inline TokenSequence attention_layer(const TokenSequence& queries, const TokenSequence& context,
                                     const AttentionLayerParams& p,
                                     AttentionDebug* debug = nullptr) {
  if (queries.width != p.channels || context.width != p.context_dim)
    throw std::invalid_argument("attention_layer: token width mismatch");
  const int nq = queries.count, nk = context.count, inner = p.heads * p.head_dim;
  const Real scale = 1.0 / std::sqrt(Real(p.head_dim));

  // Pre-norm projections.
  TokenSequence q(nq, inner), k(nk, inner), v(nk, inner);
  std::vector<Real> normed(std::max(p.channels, p.context_dim));
  for (int t = 0; t < nq; ++t) {
    detail::layer_norm(queries.token(t), p.channels, normed.data());
    p.wq.forward(normed.data(), q.token(t));
  }
  for (int t = 0; t < nk; ++t) {
    detail::layer_norm(context.token(t), p.context_dim, normed.data());
    p.wk.forward(normed.data(), k.token(t));
    p.wv.forward(normed.data(), v.token(t));
  }

  if (debug) debug->head_weights.assign(p.heads, std::vector<Real>(std::size_t(nq) * nk));

  TokenSequence attended(nq, inner);
  std::vector<Real> logits(nk);
  for (int h = 0; h < p.heads; ++h) {
    int off = h * p.head_dim;
    for (int tq = 0; tq < nq; ++tq) {
      const Real* qv = q.token(tq) + off;
      Real maxl = -std::numeric_limits<Real>::infinity();
      for (int tk = 0; tk < nk; ++tk) {
        const Real* kv = k.token(tk) + off;
        Real s = 0;
        for (int d = 0; d < p.head_dim; ++d) s += qv[d] * kv[d];
        logits[tk] = s * scale;
        maxl = std::max(maxl, logits[tk]);
      }
      Real denom = 0;
      for (int tk = 0; tk < nk; ++tk) {
        logits[tk] = std::exp(logits[tk] - maxl);
        denom += logits[tk];
      }
      Real* out = attended.token(tq) + off;
      for (int tk = 0; tk < nk; ++tk) {
        Real w = logits[tk] / denom;
        if (debug) debug->head_weights[h][std::size_t(tq) * nk + tk] = w;
        const Real* vv = v.token(tk) + off;
        for (int d = 0; d < p.head_dim; ++d) out[d] += w * vv[d];
      }
    }
  }

  // Output projection + residual, then the feed-forward sublayer.
  TokenSequence out(nq, p.channels);
  std::vector<Real> proj(p.channels), hidden(4 * p.channels), ff(p.channels);
  for (int t = 0; t < nq; ++t) {
    p.wo.forward(attended.token(t), proj.data());
    for (int c = 0; c < p.channels; ++c) out.token(t)[c] = queries.token(t)[c] + proj[c];
    detail::layer_norm(out.token(t), p.channels, normed.data());
    p.ff1.forward(normed.data(), hidden.data());
    for (auto& x : hidden) x = detail::silu(x);
    p.ff2.forward(hidden.data(), ff.data());
    for (int c = 0; c < p.channels; ++c) out.token(t)[c] += ff[c];
  }
  return out;
}

struct BackboneParams {
  BackboneConfig cfg;
  LinearLayer patch_embed;              // patch_size^2 * 3 -> encoder_channels
  std::vector<Real> positional;         // image_tokens * encoder_channels
  std::vector<AttentionLayerParams> encoder;  // self-attention stack
  std::vector<Real> triplane_tokens;    // triplane_tokens * token_channels, learned
  LinearLayer token_proj;               // token_channels -> backbone_channels
  std::vector<AttentionLayerParams> self_layers;   // over triplane tokens
  std::vector<AttentionLayerParams> cross_layers;  // onto image tokens
  UpsamplerParams upsampler;

  explicit BackboneParams(const BackboneConfig& c) : cfg(c) {
    cfg.validate();
    patch_embed = LinearLayer(c.patch_size * c.patch_size * 3, c.encoder_channels);
    positional.assign(std::size_t(c.image_tokens()) * c.encoder_channels, 0);
    for (int l = 0; l < c.encoder_layers; ++l)
      encoder.emplace_back(c.encoder_channels, c.encoder_channels, c.heads,
                           std::max(1, c.encoder_channels / c.heads));
    triplane_tokens.assign(std::size_t(c.triplane_tokens()) * c.triplane_token_channels, 0);
    token_proj = LinearLayer(c.triplane_token_channels, c.backbone_channels);
    for (int l = 0; l < c.backbone_layers; ++l) {
      self_layers.emplace_back(c.backbone_channels, c.backbone_channels, c.heads, c.head_dim);
      cross_layers.emplace_back(c.backbone_channels, c.cross_attention_dim, c.heads, c.head_dim);
    }
    upsampler = UpsamplerParams(c.upsample_factor, c.backbone_channels, c.triplane_out_channels);
  }

  void init_random(Rng& rng) {
    Real s = 1.0 / std::sqrt(Real(patch_embed.in));
    for (auto& w : patch_embed.weight) w = rng.normal() * s;
    for (auto& x : positional) x = rng.normal() * 0.02;
    for (auto& l : encoder) l.init_random(rng);
    for (auto& x : triplane_tokens) x = rng.normal() * 0.02;
    s = 1.0 / std::sqrt(Real(token_proj.in));
    for (auto& w : token_proj.weight) w = rng.normal() * s;
    for (auto& l : self_layers) l.init_random(rng);
    for (auto& l : cross_layers) l.init_random(rng);
    upsampler.init_random(rng);
  }
};

// Non-overlapping patch flattening + linear embedding + learned positional
// embedding. Patches scan row-major; within a patch, pixels scan row-major
// with rgb interleaved.
inline TokenSequence tokenize_image(const RenderOutput& img, const BackboneParams& params) {
  const BackboneConfig& c = params.cfg;
  if (img.width != c.image_resolution || img.height != c.image_resolution)
    throw std::invalid_argument("tokenize_image: image does not match configured resolution");
  const int P = c.patch_size, side = c.image_resolution / P;
  TokenSequence tokens(side * side, c.encoder_channels);
  std::vector<Real> flat(std::size_t(P) * P * 3);
  for (int ty = 0; ty < side; ++ty)
    for (int tx = 0; tx < side; ++tx) {
      int t = ty * side + tx;
      for (int py = 0; py < P; ++py)
        for (int px = 0; px < P; ++px) {
          const Vec3& v = img.rgb[std::size_t(ty * P + py) * img.width + (tx * P + px)];
          Real* f = flat.data() + (std::size_t(py) * P + px) * 3;
          f[0] = v.x;
          f[1] = v.y;
          f[2] = v.z;
        }
      params.patch_embed.forward(flat.data(), tokens.token(t));
      const Real* pos = params.positional.data() + std::size_t(t) * c.encoder_channels;
      for (int ch = 0; ch < c.encoder_channels; ++ch) tokens.token(t)[ch] += pos[ch];
    }
  return tokens;
}

// Learned triplane queries projected to backbone width.
inline TokenSequence init_triplane_tokens(const BackboneParams& params) {
  const BackboneConfig& c = params.cfg;
  TokenSequence tokens(c.triplane_tokens(), c.backbone_channels);
  for (int t = 0; t < tokens.count; ++t)
    params.token_proj.forward(
        params.triplane_tokens.data() + std::size_t(t) * c.triplane_token_channels,
        tokens.token(t));
  return tokens;
}

inline TokenSequence encode_image(const RenderOutput& img, const BackboneParams& params) {
  TokenSequence tokens = tokenize_image(img, params);
  for (const auto& layer : params.encoder) tokens = attention_layer(tokens, tokens, layer);
  return tokens;
}

// Full camera-free forward: image tokens condition the triplane tokens via
// alternating self/cross attention; the 32x32x3 output tokens become three
// coarse planes which the learned upsampler maps to the final triplane.
inline Triplane image_to_triplane(const RenderOutput& img, const BackboneParams& params,
                                  Real extent = 0.87) {
  const BackboneConfig& c = params.cfg;
  TokenSequence image_tokens = encode_image(img, params);
  TokenSequence tokens = init_triplane_tokens(params);
  for (int l = 0; l < c.backbone_layers; ++l) {
    tokens = attention_layer(tokens, tokens, params.self_layers[l]);
    tokens = attention_layer(tokens, image_tokens, params.cross_layers[l]);
  }
  // Token t = plane * side^2 + v * side + u.
  const int side = c.triplane_tokens_side, C = c.backbone_channels;
  Triplane coarse(side, C, extent);
  for (int pl = 0; pl < 3; ++pl)
    for (int v = 0; v < side; ++v)
      for (int u = 0; u < side; ++u) {
        const Real* tok = tokens.token(pl * side * side + v * side + u);
        std::copy(tok, tok + C, coarse.planes[pl].data() + (std::size_t(v) * side + u) * C);
      }
  return upsample(coarse, params.upsampler);
}

}  // namespace trs
