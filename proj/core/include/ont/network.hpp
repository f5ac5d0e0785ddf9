#pragma once

// The denoising network graph: complex-valued U-Net with a two-stage
// transformer module (TSTM) at the bottleneck and a complex ratio mask on the
// output. All functions here record onto an autodiff tape and are templated
// on the real type; float is the training configuration, double the
// verification configuration.
//
// Complex tensors are carried as (re, im) pairs of real [B,C,F,T] tensors.
// The single complex coupling is the convolution rule
//   out_re = conv(x_re, w_r) - conv(x_im, w_i)
//   out_im = conv(x_re, w_i) + conv(x_im, w_r)
// and its bottleneck analogue built from two real TSTM stacks.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ont/autodiff.hpp"
#include "ont/model.hpp"
#include "ont/signal_ops.hpp"
#include "ont/stft.hpp"
#include "ont/waveform.hpp"

namespace ont {

inline constexpr double kMaskEps = 1e-8;
inline constexpr double kActivationSlope = 0.01;

template <class R>
struct ComplexVar {
  Var<R> re;
  Var<R> im;
};

// Model parameters bound onto a tape as gradient-carrying leaves, aligned
// with the model's registry order.
template <class R>
struct ModelBinding {
  std::vector<Var<R>> vars;
  std::unordered_map<std::string, std::size_t> index;

  Var<R> operator[](const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw Error("network: unbound parameter '" + name + "'");
    return vars[it->second];
  }
};

template <class R>
ModelBinding<R> bind_params(Tape<R>& tape, const DenoiserModel& model) {
  ModelBinding<R> binding;
  binding.vars.reserve(model.params().size());
  for (const auto& p : model.params()) {
    std::vector<R> data(p.data.begin(), p.data.end());
    binding.vars.push_back(tape.leaf(p.shape, std::move(data), "param"));
    binding.index.emplace(p.name, binding.vars.size() - 1);
  }
  return binding;
}

// ---------------------------------------------------------------------------
// Complex building blocks

template <class R>
ComplexVar<R> complex_conv2d(ComplexVar<R> x, Var<R> wr, Var<R> wi, std::size_t sh,
                             std::size_t sw, std::size_t ph, std::size_t pw) {
  Var<R> rr = conv2d(x.re, wr, sh, sw, ph, pw);
  Var<R> ii = conv2d(x.im, wi, sh, sw, ph, pw);
  Var<R> ri = conv2d(x.re, wi, sh, sw, ph, pw);
  Var<R> ir = conv2d(x.im, wr, sh, sw, ph, pw);
  return {sub(rr, ii), add(ri, ir)};
}

template <class R>
ComplexVar<R> complex_tconv2d(ComplexVar<R> x, Var<R> wr, Var<R> wi, std::size_t sh,
                              std::size_t sw, std::size_t ph, std::size_t pw, std::size_t oph,
                              std::size_t opw) {
  Var<R> rr = tconv2d(x.re, wr, sh, sw, ph, pw, oph, opw);
  Var<R> ii = tconv2d(x.im, wi, sh, sw, ph, pw, oph, opw);
  Var<R> ri = tconv2d(x.re, wi, sh, sw, ph, pw, oph, opw);
  Var<R> ir = tconv2d(x.im, wr, sh, sw, ph, pw, oph, opw);
  return {sub(rr, ii), add(ri, ir)};
}

// Bounded complex ratio mask M = tanh(|o|) * o / |o| applied to the input
// spectrogram; the magnitude is smoothed through sqrt(|o|^2 + eps^2) so the
// map is differentiable at the origin and M(0) = 0 exactly.
template <class R>
ComplexVar<R> apply_mask(ComplexVar<R> input_spec, ComplexVar<R> net_out, MaskMode mode) {
  ComplexVar<R> m = net_out;
  if (mode == MaskMode::bounded) {
    Var<R> r2 = add(mul(net_out.re, net_out.re), mul(net_out.im, net_out.im));
    Var<R> r = sqrt_shift(r2, kMaskEps * kMaskEps);
    Var<R> shrink = divide(tanh_op(r), r);
    m = {mul(net_out.re, shrink), mul(net_out.im, shrink)};
  }
  return {sub(mul(input_spec.re, m.re), mul(input_spec.im, m.im)),
          add(mul(input_spec.re, m.im), mul(input_spec.im, m.re))};
}

// ---------------------------------------------------------------------------
// Transformer pieces

// One post-norm transformer encoder layer applied to a batch of sequences
// [N, S, D]: multi-head self-attention and feedforward, each followed by a
// residual add and layer normalization.
template <class R>
Var<R> transformer_encoder_layer(Var<R> x, std::size_t heads, const ModelBinding<R>& pb,
                                 const std::string& stem) {
  const auto& xs = x.shape();
  if (xs.size() != 3) throw Error("network: transformer input must be [N, S, D]");
  const std::size_t n = xs[0], s = xs[1], d = xs[2];
  if (d % heads != 0) throw Error("network: model_dim not divisible by head count");
  const std::size_t dh = d / heads;

  Var<R> flat = reshape(x, {n * s, d});
  auto linear = [&](const char* w, const char* b) {
    return add_rowvec(matmul(flat, pb[stem + w]), pb[stem + b]);
  };
  Var<R> q = linear(".wq", ".bq");
  Var<R> k = linear(".wk", ".bk");
  Var<R> v = linear(".wv", ".bv");

  auto to_heads = [&](Var<R> m) {
    return reshape(permute(reshape(m, {n, s, heads, dh}), {0, 2, 1, 3}), {n * heads, s, dh});
  };
  Var<R> qh = to_heads(q);
  Var<R> kh = to_heads(k);
  Var<R> vh = to_heads(v);

  Var<R> scores = scale(bmm(qh, permute(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var<R> attn = softmax_rows(scores);
  Var<R> ctx = bmm(attn, vh);
  Var<R> merged = reshape(permute(reshape(ctx, {n, heads, s, dh}), {0, 2, 1, 3}), {n * s, d});
  Var<R> proj = add_rowvec(matmul(merged, pb[stem + ".wo"]), pb[stem + ".bo"]);
  Var<R> y1 = layer_norm(add(flat, proj), pb[stem + ".ln1.g"], pb[stem + ".ln1.b"]);

  Var<R> h = add_rowvec(matmul(y1, pb[stem + ".ff.w1"]), pb[stem + ".ff.b1"]);
  h = leaky_relu(h, kActivationSlope);
  Var<R> ffo = add_rowvec(matmul(h, pb[stem + ".ff.w2"]), pb[stem + ".ff.b2"]);
  Var<R> y2 = layer_norm(add(y1, ffo), pb[stem + ".ln2.g"], pb[stem + ".ln2.b"]);
  return reshape(y2, {n, s, d});
}

// One two-stage transformer block on a [1, C, F, T] feature map: the first
// stage attends along frequency within each frame, the second along time
// within each bin. The channel axis is the embedding.
template <class R>
Var<R> tstb_forward(Var<R> x, std::size_t heads, const ModelBinding<R>& pb,
                    const std::string& stem) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[0] != 1) throw Error("network: tstb expects a [1, C, F, T] map");
  const std::size_t c = xs[1], f = xs[2], t = xs[3];

  Var<R> x3 = reshape(x, {c, f, t});
  // Stage 1: sequences over frequency, one per frame.
  Var<R> seq_f = permute(x3, {2, 1, 0});  // [T, F, C]
  seq_f = transformer_encoder_layer(seq_f, heads, pb, stem + ".f");
  x3 = permute(seq_f, {2, 1, 0});  // back to [C, F, T]
  // Stage 2: sequences over time, one per bin.
  Var<R> seq_t = permute(x3, {1, 2, 0});  // [F, T, C]
  seq_t = transformer_encoder_layer(seq_t, heads, pb, stem + ".t");
  x3 = permute(seq_t, {2, 0, 1});  // back to [C, F, T]
  return reshape(x3, {1, c, f, t});
}

template <class R>
Var<R> tstm_stack(Var<R> x, const ModelConfig& cfg, const ModelBinding<R>& pb,
                  const std::string& stack) {
  for (std::size_t b = 0; b < cfg.n_tstb; ++b)
    x = tstb_forward(x, cfg.head_count, pb, "tstm." + stack + ".blk" + std::to_string(b));
  return x;
}

// Complex TSTM combination: with stacks r and i,
//   out = (TSTM_r(X_r) - TSTM_i(X_i)) + j (TSTM_i(X_r) + TSTM_r(X_i)).
// The shared-real variant runs one stack independently on each part.
template <class R>
ComplexVar<R> ctstm_forward(ComplexVar<R> x, const ModelConfig& cfg, const ModelBinding<R>& pb) {
  if (cfg.n_tstb == 0) return x;
  if (cfg.tstm_kind == TstmKind::shared_real) {
    return {tstm_stack(x.re, cfg, pb, "s"), tstm_stack(x.im, cfg, pb, "s")};
  }
  Var<R> f_rr = tstm_stack(x.re, cfg, pb, "r");
  Var<R> f_ir = tstm_stack(x.im, cfg, pb, "r");
  Var<R> f_ri = tstm_stack(x.re, cfg, pb, "i");
  Var<R> f_ii = tstm_stack(x.im, cfg, pb, "i");
  return {sub(f_rr, f_ii), add(f_ri, f_ir)};
}

// ---------------------------------------------------------------------------
// Full forward pass

// Input and output are stacked [2, F, T] spectrogram tensors (plane 0 real,
// plane 1 imaginary), matching stft_frames / istft_wola.
template <class R>
Var<R> model_forward(const DenoiserModel& model, const ModelBinding<R>& pb, Var<R> spec) {
  const ModelConfig& cfg = model.config();
  const auto& ss = spec.shape();
  if (ss.size() != 3 || ss[0] != 2) throw Error("network: forward expects a [2, F, T] input");
  const std::size_t f0 = ss[1], t0 = ss[2];
  const std::size_t n_enc = cfg.n_encoder_layers();

  std::size_t need_f = 1, need_t = 1;
  for (std::size_t i = 0; i < n_enc; ++i) {
    need_f *= cfg.strides[i].first;
    need_t *= cfg.strides[i].second;
  }
  if (f0 < need_f || t0 < need_t)
    throw Error("network: input too small for the stride pyramid");

  const std::size_t ph = (cfg.kernel_freq - 1) / 2;
  const std::size_t pw = (cfg.kernel_time - 1) / 2;

  ComplexVar<R> input{reshape(slice_axis(spec, 0, 0, 1), {1, 1, f0, t0}),
                      reshape(slice_axis(spec, 0, 1, 2), {1, 1, f0, t0})};

  // Encoder: complex conv -> per-part channel norm -> activation. Input
  // spatial extents are recorded so the decoder can crop back to them.
  ComplexVar<R> x = input;
  std::vector<ComplexVar<R>> skips;
  std::vector<std::pair<std::size_t, std::size_t>> enc_in_dims;
  for (std::size_t i = 0; i < n_enc; ++i) {
    const std::string stem = "enc" + std::to_string(i);
    enc_in_dims.push_back({x.re.shape()[2], x.re.shape()[3]});
    const auto [sf, st] = cfg.strides[i];
    ComplexVar<R> y = complex_conv2d(x, pb[stem + ".wr"], pb[stem + ".wi"], sf, st, ph, pw);
    y.re = add_channel_bias(y.re, pb[stem + ".br"]);
    y.im = add_channel_bias(y.im, pb[stem + ".bi"]);
    y.re = channel_norm(y.re, pb[stem + ".norm.re.g"], pb[stem + ".norm.re.b"]);
    y.im = channel_norm(y.im, pb[stem + ".norm.im.g"], pb[stem + ".norm.im.b"]);
    y.re = leaky_relu(y.re, kActivationSlope);
    y.im = leaky_relu(y.im, kActivationSlope);
    skips.push_back(y);
    x = y;
  }

  x = ctstm_forward(x, cfg, pb);

  // Decoder: skip concat -> complex transposed conv -> crop to the mirrored
  // encoder input extents; norm + activation everywhere except the mask layer.
  for (std::size_t j = 0; j < n_enc; ++j) {
    const std::string stem = "dec" + std::to_string(j);
    const ComplexVar<R>& skip = skips[n_enc - 1 - j];
    ComplexVar<R> cat{concat_axis(x.re, skip.re, 1), concat_axis(x.im, skip.im, 1)};
    const auto [sf, st] = cfg.strides[n_enc + j];
    ComplexVar<R> y =
        complex_tconv2d(cat, pb[stem + ".wr"], pb[stem + ".wi"], sf, st, ph, pw, sf - 1, st - 1);
    const auto [target_f, target_t] = enc_in_dims[n_enc - 1 - j];
    if (y.re.shape()[2] < target_f || y.re.shape()[3] < target_t)
      throw Error("network: transposed conv undershoots the encoder extent");
    if (y.re.shape()[2] > target_f) {
      y.re = slice_axis(y.re, 2, 0, target_f);
      y.im = slice_axis(y.im, 2, 0, target_f);
    }
    if (y.re.shape()[3] > target_t) {
      y.re = slice_axis(y.re, 3, 0, target_t);
      y.im = slice_axis(y.im, 3, 0, target_t);
    }
    y.re = add_channel_bias(y.re, pb[stem + ".br"]);
    y.im = add_channel_bias(y.im, pb[stem + ".bi"]);
    const bool is_mask_layer = (j == n_enc - 1) && !cfg.needs_mask_projection();
    if (!is_mask_layer) {
      y.re = channel_norm(y.re, pb[stem + ".norm.re.g"], pb[stem + ".norm.re.b"]);
      y.im = channel_norm(y.im, pb[stem + ".norm.im.g"], pb[stem + ".norm.im.b"]);
      y.re = leaky_relu(y.re, kActivationSlope);
      y.im = leaky_relu(y.im, kActivationSlope);
    }
    x = y;
  }

  if (cfg.needs_mask_projection()) {
    ComplexVar<R> y = complex_conv2d(x, pb["mask.wr"], pb["mask.wi"], 1, 1, 0, 0);
    y.re = add_channel_bias(y.re, pb["mask.br"]);
    y.im = add_channel_bias(y.im, pb["mask.bi"]);
    x = y;
  }

  ComplexVar<R> masked = apply_mask(input, x, cfg.mask_mode);
  return concat_axis(reshape(masked.re, {1, f0, t0}), reshape(masked.im, {1, f0, t0}), 0);
}

// Waveform-to-waveform inference pipeline on a fresh tape.
template <class R>
Waveform denoise_waveform_t(const DenoiserModel& model, const Waveform& x,
                            const StftConfig& cfg) {
  cfg.validate();
  x.validate("denoise");
  if (x.sample_rate_hz != cfg.sample_rate_hz)
    throw ConfigError("denoise: waveform sample rate does not match stft config");
  if (x.size() < cfg.window_samples()) throw DataError("denoise: input shorter than one window");

  Tape<R> tape;
  std::vector<R> samples(x.samples.begin(), x.samples.end());
  Var<R> wave = tape.leaf({x.size()}, std::move(samples), "input");
  ModelBinding<R> pb = bind_params(tape, model);
  Var<R> spec = stft_frames(wave, cfg);
  Var<R> out_spec = model_forward(model, pb, spec);
  Var<R> out = istft_wola(out_spec, cfg, x.size());

  Waveform y{std::vector<double>(x.size()), x.sample_rate_hz};
  const auto& ov = out.val();
  for (std::size_t i = 0; i < x.size(); ++i) y.samples[i] = static_cast<double>(ov[i]);
  return y;
}

// Training-precision (float) inference entry point.
Waveform denoise_waveform(const DenoiserModel& model, const Waveform& x, const StftConfig& cfg);

}  // namespace ont
