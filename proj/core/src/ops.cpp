#include "gdp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gdp/error.hpp"

namespace gdp {
namespace {

struct ImageDims {
  std::size_t batch, channels, height, width;
  bool batched;
};

ImageDims image_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected [c,h,w] or [b,c,h,w], got " + shape_str(s));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w) {
  return d.batched ? Shape{d.batch, c, h, w} : Shape{c, h, w};
}

// Views a tensor as [outer, channels, inner] around its channel axis.
struct ChannelView {
  std::size_t outer, channels, inner;
};

ChannelView channel_view(const Shape& s, const char* op) {
  if (s.empty()) throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": scalar input has no channel axis");
  const std::size_t axis = (s.size() % 2 == 1) ? 0 : 1;
  ChannelView v{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* op) {
  if (stride == 0) throw Error(ErrorCode::InvalidArgument, std::string(op) + ": stride must be >= 1");
  if (in + 2 * pad < k) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": kernel " + std::to_string(k) +
                                              " larger than padded input " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

void check_bias(const std::optional<Var>& bias, std::size_t n, const char* op) {
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != n)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": bias shape " + shape_str(bias->shape()) + " does not match " + std::to_string(n));
  }
}

struct ConvGeometry {
  ImageDims in;
  std::size_t out_c, kh, kw, oh, ow, stride, pad;
};

// Shared loop nest for regular and depthwise convolution. For depthwise,
// out channel o reads only input channel o.
template <bool Depthwise, class Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  const auto in_c = g.in.channels;
  const long H = static_cast<long>(g.in.height), W = static_cast<long>(g.in.width);
  for (std::size_t n = 0; n < g.in.batch; ++n) {
    for (std::size_t o = 0; o < g.out_c; ++o) {
      const std::size_t c_begin = Depthwise ? o : 0;
      const std::size_t c_end = Depthwise ? o + 1 : in_c;
      for (std::size_t c = c_begin; c < c_end; ++c) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::size_t k_idx =
                Depthwise ? (o * g.kh + ky) * g.kw + kx : ((o * in_c + c) * g.kh + ky) * g.kw + kx;
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
              if (iy < 0 || iy >= H) continue;
              const std::size_t in_row = ((n * in_c + c) * g.in.height + static_cast<std::size_t>(iy)) * g.in.width;
              const std::size_t out_row = ((n * g.out_c + o) * g.oh + oy) * g.ow;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                if (ix < 0 || ix >= W) continue;
                fn(in_row + static_cast<std::size_t>(ix), k_idx, out_row + ox);
              }
            }
          }
        }
      }
    }
  }
}

template <bool Depthwise>
Var convolve(const char* op, const Var& input, const Var& kernel, std::size_t stride, std::size_t padding,
             const std::optional<Var>& bias) {
  Tape& tape = *input.tape();
  const auto in = image_dims(input.shape(), op);
  const auto& ks = kernel.shape();
  ConvGeometry g{in, 0, 0, 0, 0, 0, stride, padding};
  if constexpr (Depthwise) {
    if (ks.size() != 3 || ks[0] != in.channels) {
      throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": kernel " + shape_str(ks) +
                                                " incompatible with input " + shape_str(input.shape()));
    }
    g.out_c = ks[0];
    g.kh = ks[1];
    g.kw = ks[2];
  } else {
    if (ks.size() != 4 || ks[1] != in.channels) {
      throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": kernel " + shape_str(ks) +
                                                " incompatible with input " + shape_str(input.shape()));
    }
    g.out_c = ks[0];
    g.kh = ks[2];
    g.kw = ks[3];
  }
  g.oh = conv_out(in.height, g.kh, stride, padding, op);
  g.ow = conv_out(in.width, g.kw, stride, padding, op);
  check_bias(bias, g.out_c, op);

  Tensor out(image_shape(in, g.out_c, g.oh, g.ow));
  {
    auto o = out.data();
    const auto x = input.value().data();
    const auto w = kernel.value().data();
    for_each_tap<Depthwise>(g, [&](std::size_t xi, std::size_t wi, std::size_t oi) { o[oi] += w[wi] * x[xi]; });
    if (bias) {
      const auto b = bias->value().data();
      const std::size_t plane = g.oh * g.ow;
      for (std::size_t n = 0; n < in.batch; ++n)
        for (std::size_t c = 0; c < g.out_c; ++c)
          for (std::size_t p = 0; p < plane; ++p) o[(n * g.out_c + c) * plane + p] += b[c];
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  const auto in_id = input.id(), k_id = kernel.id();
  const auto b_id = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  return tape.record(op, std::move(out), inputs, [g, in_id, k_id, b_id](Tape& t, const std::vector<Scalar>& gout) {
    const auto x = t.value(in_id).data();
    const auto w = t.value(k_id).data();
    if (t.requires_grad(in_id)) {
      auto& gx = t.grad_buffer(in_id);
      for_each_tap<Depthwise>(g, [&](std::size_t xi, std::size_t wi, std::size_t oi) { gx[xi] += w[wi] * gout[oi]; });
    }
    if (t.requires_grad(k_id)) {
      auto& gw = t.grad_buffer(k_id);
      for_each_tap<Depthwise>(g, [&](std::size_t xi, std::size_t wi, std::size_t oi) { gw[wi] += x[xi] * gout[oi]; });
    }
    if (b_id && t.requires_grad(*b_id)) {
      auto& gb = t.grad_buffer(*b_id);
      const std::size_t plane = g.oh * g.ow;
      for (std::size_t n = 0; n < g.in.batch; ++n)
        for (std::size_t c = 0; c < g.out_c; ++c)
          for (std::size_t p = 0; p < plane; ++p) gb[c] += gout[(n * g.out_c + c) * plane + p];
    }
  });
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
}

void require_channel_vector(const Var& v, std::size_t channels, const char* op, const char* what) {
  if (v.shape().size() != 1 || v.shape()[0] != channels) {
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + what + " shape " + shape_str(v.shape()) +
                                              " does not match " + std::to_string(channels) + " channels");
  }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, std::size_t stride, std::size_t padding,
           const std::optional<Var>& bias) {
  return convolve<false>("conv2d", input, kernel, stride, padding, bias);
}

Var depthwise_conv2d(const Var& input, const Var& kernel, std::size_t stride, std::size_t padding,
                     const std::optional<Var>& bias) {
  return convolve<true>("depthwise_conv2d", input, kernel, stride, padding, bias);
}

Var channel_scale(const Var& input, const Var& gains) {
  const auto v = channel_view(input.shape(), "channel_scale");
  require_channel_vector(gains, v.channels, "channel_scale", "gains");
  Tensor out(input.shape());
  {
    auto o = out.data();
    const auto x = input.value().data();
    const auto g = gains.value().data();
    for (std::size_t a = 0; a < v.outer; ++a)
      for (std::size_t c = 0; c < v.channels; ++c) {
        const std::size_t base = (a * v.channels + c) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) o[base + i] = g[c] * x[base + i];
      }
  }
  const auto x_id = input.id(), g_id = gains.id();
  return input.tape()->record("channel_scale", std::move(out), {input, gains},
                              [v, x_id, g_id](Tape& t, const std::vector<Scalar>& gout) {
                                const auto x = t.value(x_id).data();
                                const auto g = t.value(g_id).data();
                                const bool need_x = t.requires_grad(x_id), need_g = t.requires_grad(g_id);
                                std::vector<Scalar>* gx = need_x ? &t.grad_buffer(x_id) : nullptr;
                                std::vector<Scalar>* gg = need_g ? &t.grad_buffer(g_id) : nullptr;
                                for (std::size_t a = 0; a < v.outer; ++a)
                                  for (std::size_t c = 0; c < v.channels; ++c) {
                                    const std::size_t base = (a * v.channels + c) * v.inner;
                                    Scalar acc = 0;
                                    for (std::size_t i = 0; i < v.inner; ++i) {
                                      if (gx) (*gx)[base + i] += g[c] * gout[base + i];
                                      acc += gout[base + i] * x[base + i];
                                    }
                                    if (gg) (*gg)[c] += acc;
                                  }
                              });
}

Var channel_bias(const Var& input, const Var& bias) {
  const auto v = channel_view(input.shape(), "channel_bias");
  require_channel_vector(bias, v.channels, "channel_bias", "bias");
  Tensor out = input.value();
  {
    auto o = out.data();
    const auto b = bias.value().data();
    for (std::size_t a = 0; a < v.outer; ++a)
      for (std::size_t c = 0; c < v.channels; ++c)
        for (std::size_t i = 0; i < v.inner; ++i) o[(a * v.channels + c) * v.inner + i] += b[c];
  }
  const auto x_id = input.id(), b_id = bias.id();
  return input.tape()->record("channel_bias", std::move(out), {input, bias},
                              [v, x_id, b_id](Tape& t, const std::vector<Scalar>& gout) {
                                t.add_grad(x_id, gout);
                                if (!t.requires_grad(b_id)) return;
                                auto& gb = t.grad_buffer(b_id);
                                for (std::size_t a = 0; a < v.outer; ++a)
                                  for (std::size_t c = 0; c < v.channels; ++c)
                                    for (std::size_t i = 0; i < v.inner; ++i)
                                      gb[c] += gout[(a * v.channels + c) * v.inner + i];
                              });
}

Var dense(const Var& input, const Var& weight, const std::optional<Var>& bias) {
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if ((xs.size() != 1 && xs.size() != 2) || ws.size() != 2 || ws[1] != xs.back()) {
    throw Error(ErrorCode::ShapeMismatch,
                "dense: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
  }
  const std::size_t batch = xs.size() == 2 ? xs[0] : 1;
  const std::size_t m = ws[1], n = ws[0];
  check_bias(bias, n, "dense");
  Tensor out(xs.size() == 2 ? Shape{batch, n} : Shape{n});
  {
    auto o = out.data();
    const auto x = input.value().data();
    const auto w = weight.value().data();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t j = 0; j < n; ++j) {
        Scalar acc = bias ? bias->value()[j] : Scalar{0};
        for (std::size_t i = 0; i < m; ++i) acc += w[j * m + i] * x[r * m + i];
        o[r * n + j] = acc;
      }
  }
  std::vector<Var> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const auto x_id = input.id(), w_id = weight.id();
  const auto b_id = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  return input.tape()->record(
      "dense", std::move(out), inputs, [batch, m, n, x_id, w_id, b_id](Tape& t, const std::vector<Scalar>& gout) {
        const auto x = t.value(x_id).data();
        const auto w = t.value(w_id).data();
        if (t.requires_grad(x_id)) {
          auto& gx = t.grad_buffer(x_id);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t i = 0; i < m; ++i) gx[r * m + i] += w[j * m + i] * gout[r * n + j];
        }
        if (t.requires_grad(w_id)) {
          auto& gw = t.grad_buffer(w_id);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < n; ++j)
              for (std::size_t i = 0; i < m; ++i) gw[j * m + i] += x[r * m + i] * gout[r * n + j];
        }
        if (b_id && t.requires_grad(*b_id)) {
          auto& gb = t.grad_buffer(*b_id);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < n; ++j) gb[j] += gout[r * n + j];
        }
      });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0 ? v : Scalar{0};
  const auto x_id = x.id();
  return x.tape()->record("relu", std::move(out), {x}, [x_id](Tape& t, const std::vector<Scalar>& gout) {
    if (!t.requires_grad(x_id)) return;
    const auto xv = t.value(x_id).data();
    auto& gx = t.grad_buffer(x_id);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > 0) gx[i] += gout[i];
  });
}

Var avgpool2d(const Var& x, std::size_t window) {
  const auto d = image_dims(x.shape(), "avgpool2d");
  if (window == 0 || window > d.height || window > d.width) {
    throw Error(ErrorCode::ShapeMismatch,
                "avgpool2d: window " + std::to_string(window) + " does not fit input " + shape_str(x.shape()));
  }
  const std::size_t oh = d.height / window, ow = d.width / window;
  const Scalar inv = Scalar{1} / static_cast<Scalar>(window * window);
  Tensor out(image_shape(d, d.channels, oh, ow));
  auto o = out.data();
  const auto xv = x.value().data();
  const std::size_t planes = d.batch * d.channels;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        Scalar acc = 0;
        for (std::size_t ky = 0; ky < window; ++ky)
          for (std::size_t kx = 0; kx < window; ++kx)
            acc += xv[(p * d.height + oy * window + ky) * d.width + ox * window + kx];
        o[(p * oh + oy) * ow + ox] = acc * inv;
      }
  const auto x_id = x.id();
  return x.tape()->record("avgpool2d", std::move(out), {x},
                          [d, window, oh, ow, inv, planes, x_id](Tape& t, const std::vector<Scalar>& gout) {
                            if (!t.requires_grad(x_id)) return;
                            auto& gx = t.grad_buffer(x_id);
                            for (std::size_t p = 0; p < planes; ++p)
                              for (std::size_t oy = 0; oy < oh; ++oy)
                                for (std::size_t ox = 0; ox < ow; ++ox) {
                                  const Scalar gv = gout[(p * oh + oy) * ow + ox] * inv;
                                  for (std::size_t ky = 0; ky < window; ++ky)
                                    for (std::size_t kx = 0; kx < window; ++kx)
                                      gx[(p * d.height + oy * window + ky) * d.width + ox * window + kx] += gv;
                                }
                          });
}

Var global_avgpool(const Var& x) {
  const auto d = image_dims(x.shape(), "global_avgpool");
  const std::size_t plane = d.height * d.width;
  const Scalar inv = Scalar{1} / static_cast<Scalar>(plane);
  Tensor out(d.batched ? Shape{d.batch, d.channels} : Shape{d.channels});
  auto o = out.data();
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < d.batch * d.channels; ++p) {
    Scalar acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += xv[p * plane + i];
    o[p] = acc * inv;
  }
  const auto x_id = x.id();
  return x.tape()->record("global_avgpool", std::move(out), {x},
                          [plane, inv, x_id](Tape& t, const std::vector<Scalar>& gout) {
                            if (!t.requires_grad(x_id)) return;
                            auto& gx = t.grad_buffer(x_id);
                            for (std::size_t p = 0; p < gout.size(); ++p)
                              for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += gout[p] * inv;
                          });
}

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormStats stats, bool training) {
  const auto v = channel_view(x.shape(), "batchnorm2d");
  require_channel_vector(gamma, v.channels, "batchnorm2d", "gamma");
  require_channel_vector(beta, v.channels, "batchnorm2d", "beta");
  if (stats.running_mean.size() != v.channels || stats.running_var.size() != v.channels) {
    throw Error(ErrorCode::ShapeMismatch, "batchnorm2d: running statistics do not match channel count");
  }
  const std::size_t count = v.outer * v.inner;
  if (training && count < 2) {
    throw Error(ErrorCode::InvalidArgument, "batchnorm2d: training mode needs more than one value per channel");
  }
  const auto xv = x.value().data();
  std::vector<Scalar> mean(v.channels), inv_std(v.channels);
  for (std::size_t c = 0; c < v.channels; ++c) {
    if (training) {
      Scalar m = 0;
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t i = 0; i < v.inner; ++i) m += xv[(a * v.channels + c) * v.inner + i];
      m /= static_cast<Scalar>(count);
      Scalar var = 0;
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const Scalar dlt = xv[(a * v.channels + c) * v.inner + i] - m;
          var += dlt * dlt;
        }
      const Scalar biased = var / static_cast<Scalar>(count);
      const Scalar unbiased = var / static_cast<Scalar>(count - 1);
      stats.running_mean[c] = (1 - stats.momentum) * stats.running_mean[c] + stats.momentum * m;
      stats.running_var[c] = (1 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
      mean[c] = m;
      inv_std[c] = Scalar{1} / std::sqrt(biased + stats.eps);
    } else {
      mean[c] = stats.running_mean[c];
      inv_std[c] = Scalar{1} / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }
  Tensor xhat(x.shape());
  Tensor out(x.shape());
  {
    auto xh = xhat.data();
    auto o = out.data();
    const auto g = gamma.value().data();
    const auto b = beta.value().data();
    for (std::size_t a = 0; a < v.outer; ++a)
      for (std::size_t c = 0; c < v.channels; ++c)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t k = (a * v.channels + c) * v.inner + i;
          xh[k] = (xv[k] - mean[c]) * inv_std[c];
          o[k] = g[c] * xh[k] + b[c];
        }
  }
  const auto x_id = x.id(), g_id = gamma.id(), b_id = beta.id();
  return x.tape()->record(
      "batchnorm2d", std::move(out), {x, gamma, beta},
      [v, count, training, inv_std, xhat = std::move(xhat), x_id, g_id, b_id](Tape& t,
                                                                              const std::vector<Scalar>& gout) {
        const auto g = t.value(g_id).data();
        const auto xh = xhat.data();
        std::vector<Scalar> sum_dy(v.channels, 0), sum_dy_xhat(v.channels, 0);
        for (std::size_t a = 0; a < v.outer; ++a)
          for (std::size_t c = 0; c < v.channels; ++c)
            for (std::size_t i = 0; i < v.inner; ++i) {
              const std::size_t k = (a * v.channels + c) * v.inner + i;
              sum_dy[c] += gout[k];
              sum_dy_xhat[c] += gout[k] * xh[k];
            }
        if (t.requires_grad(g_id)) t.add_grad(g_id, sum_dy_xhat);
        if (t.requires_grad(b_id)) t.add_grad(b_id, sum_dy);
        if (!t.requires_grad(x_id)) return;
        auto& gx = t.grad_buffer(x_id);
        const Scalar m = static_cast<Scalar>(count);
        for (std::size_t a = 0; a < v.outer; ++a)
          for (std::size_t c = 0; c < v.channels; ++c)
            for (std::size_t i = 0; i < v.inner; ++i) {
              const std::size_t k = (a * v.channels + c) * v.inner + i;
              if (training) {
                gx[k] += g[c] * inv_std[c] / m * (m * gout[k] - sum_dy[c] - xh[k] * sum_dy_xhat[c]);
              } else {
                gx[k] += g[c] * inv_std[c] * gout[k];
              }
            }
      });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const auto& s = logits.shape();
  if (s.size() != 1 && s.size() != 2) {
    throw Error(ErrorCode::ShapeMismatch, "softmax_cross_entropy: logits must be [k] or [b,k], got " + shape_str(s));
  }
  const std::size_t batch = s.size() == 2 ? s[0] : 1;
  const std::size_t k = s.back();
  if (labels.size() != batch) {
    throw Error(ErrorCode::ShapeMismatch, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                              " labels for batch of " + std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw Error(ErrorCode::InvalidArgument, "softmax_cross_entropy: label " + std::to_string(y) +
                                                  " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto z = logits.value().data();
  std::vector<Scalar> prob(batch * k);
  Scalar loss = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    const Scalar mx = *std::max_element(z.begin() + static_cast<long>(r * k), z.begin() + static_cast<long>((r + 1) * k));
    Scalar denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[r * k + j] - mx);
    const Scalar log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) prob[r * k + j] = std::exp(z[r * k + j] - mx - log_denom);
    loss -= z[r * k + static_cast<std::size_t>(labels[r])] - mx - log_denom;
  }
  loss /= static_cast<Scalar>(batch);
  std::vector<int> y(labels.begin(), labels.end());
  const auto z_id = logits.id();
  return logits.tape()->record("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                               [batch, k, prob = std::move(prob), y = std::move(y), z_id](
                                   Tape& t, const std::vector<Scalar>& gout) {
                                 if (!t.requires_grad(z_id)) return;
                                 auto& gz = t.grad_buffer(z_id);
                                 const Scalar scale = gout[0] / static_cast<Scalar>(batch);
                                 for (std::size_t r = 0; r < batch; ++r)
                                   for (std::size_t j = 0; j < k; ++j) {
                                     const Scalar target = static_cast<std::size_t>(y[r]) == j ? 1 : 0;
                                     gz[r * k + j] += scale * (prob[r * k + j] - target);
                                   }
                               });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto a_id = a.id(), b_id = b.id();
  return a.tape()->record("add", std::move(out), {a, b}, [a_id, b_id](Tape& t, const std::vector<Scalar>& gout) {
    t.add_grad(a_id, gout);
    t.add_grad(b_id, gout);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto a_id = a.id(), b_id = b.id();
  return a.tape()->record("mul", std::move(out), {a, b}, [a_id, b_id](Tape& t, const std::vector<Scalar>& gout) {
    const auto av = t.value(a_id).data();
    const auto bv = t.value(b_id).data();
    std::vector<Scalar> d(gout.size());
    if (t.requires_grad(a_id)) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = gout[i] * bv[i];
      t.add_grad(a_id, d);
    }
    if (t.requires_grad(b_id)) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = gout[i] * av[i];
      t.add_grad(b_id, d);
    }
  });
}

Var scale(const Var& x, Scalar factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  const auto x_id = x.id();
  return x.tape()->record("scale", std::move(out), {x}, [x_id, factor](Tape& t, const std::vector<Scalar>& gout) {
    if (!t.requires_grad(x_id)) return;
    auto& gx = t.grad_buffer(x_id);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gout[i];
  });
}

Var sum(const Var& x) {
  Scalar acc = 0;
  for (auto v : x.value().data()) acc += v;
  const auto x_id = x.id();
  return x.tape()->record("sum", Tensor::scalar(acc), {x}, [x_id](Tape& t, const std::vector<Scalar>& gout) {
    if (!t.requires_grad(x_id)) return;
    auto& gx = t.grad_buffer(x_id);
    for (auto& g : gx) g += gout[0];
  });
}

Var gate_values(const Var& x, std::span<const Scalar> eps) {
  const std::size_t n = x.value().size();
  if (eps.size() != 1 && eps.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "gate_values: " + std::to_string(eps.size()) + " epsilons for " +
                                              std::to_string(n) + " gates");
  }
  for (auto e : eps) {
    if (!(e > 0)) throw Error(ErrorCode::InvalidArgument, "gate_values: epsilon must be positive");
  }
  std::vector<Scalar> e(eps.begin(), eps.end());
  const auto eps_at = [e](std::size_t i) { return e.size() == 1 ? e[0] : e[i]; };
  Tensor out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar sq = xv[i] * xv[i];
    out[i] = sq / (sq + eps_at(i));
  }
  const auto x_id = x.id();
  return x.tape()->record("gate_values", std::move(out), {x},
                          [eps_at, x_id](Tape& t, const std::vector<Scalar>& gout) {
                            if (!t.requires_grad(x_id)) return;
                            const auto xv = t.value(x_id).data();
                            auto& gx = t.grad_buffer(x_id);
                            for (std::size_t i = 0; i < gx.size(); ++i) {
                              const Scalar e = eps_at(i);
                              const Scalar den = xv[i] * xv[i] + e;
                              gx[i] += gout[i] * 2 * xv[i] * e / (den * den);
                            }
                          });
}

Var input_channel_norms(const std::vector<Var>& kernels) {
  if (kernels.empty()) throw Error(ErrorCode::InvalidArgument, "input_channel_norms: no kernels");
  const std::size_t channels = kernels.front().shape().size() >= 2 ? kernels.front().shape()[1] : 0;
  struct Layout {
    std::size_t rows, inner;
  };
  std::vector<Layout> layouts;
  for (const auto& k : kernels) {
    const auto& s = k.shape();
    if ((s.size() != 2 && s.size() != 4) || s[1] != channels) {
      throw Error(ErrorCode::ShapeMismatch, "input_channel_norms: kernel " + shape_str(s) +
                                                " does not have " + std::to_string(channels) + " input channels");
    }
    layouts.push_back({s[0], s.size() == 4 ? s[2] * s[3] : 1});
  }
  Tensor out(Shape{channels});
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const auto w = kernels[k].value().data();
    const auto [rows, inner] = layouts[k];
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < inner; ++i) {
          const Scalar v = w[(r * channels + c) * inner + i];
          out[c] += v * v;
        }
  }
  for (auto& v : out.data()) v = std::sqrt(v);
  std::vector<std::size_t> ids;
  for (const auto& k : kernels) ids.push_back(k.id());
  Tape& tape = *kernels.front().tape();
  const auto self_id = tape.size();
  return tape.record("input_channel_norms", std::move(out), kernels,
                     [ids, layouts, channels, self_id](Tape& t, const std::vector<Scalar>& gout) {
                       const auto norms = t.value(self_id).data();
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (!t.requires_grad(ids[k])) continue;
                         const auto w = t.value(ids[k]).data();
                         auto& gw = t.grad_buffer(ids[k]);
                         const auto [rows, inner] = layouts[k];
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t c = 0; c < channels; ++c) {
                             if (norms[c] == 0) continue;
                             const Scalar f = gout[c] / norms[c];
                             for (std::size_t i = 0; i < inner; ++i) {
                               const std::size_t idx = (r * channels + c) * inner + i;
                               gw[idx] += f * w[idx];
                             }
                           }
                       }
                     });
}

}  // namespace gdp
