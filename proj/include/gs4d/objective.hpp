#pragma once

#include <cmath>
#include <vector>

#include "gs4d/common.hpp"
#include "gs4d/image.hpp"
#include "gs4d/primitives.hpp"

namespace gs4d {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

template <class S>
struct LossWeights {
  S lambda_img = S(0.8);
  S lambda_ssim = S(0.2);
  S lambda_perc = S(0);  // perceptual term disabled in this build
  S lambda_reg = S(1e-2);
  S reg_end_fraction = S(0.5);
  S reg_decay_fraction = S(0.1);
};

namespace detail {

template <class S>
std::array<S, kSsimWindow> ssim_kernel() {
  std::array<S, kSsimWindow> k;
  const int r = kSsimWindow / 2;
  S sum = S(0);
  for (int i = 0; i < kSsimWindow; ++i) {
    const S d = S(i - r);
    k[i] = std::exp(-(d * d) / S(2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Weighted valid-region filtering of one channel: horizontal then vertical
// pass with an 11-tap kernel. Output is (H-10) x (W-10).
template <class S>
void filter_valid(const Image<S>& img, int channel, const std::array<S, kSsimWindow>& k,
                  std::vector<S>& tmp, std::vector<S>& out, bool squared, const Image<S>* other) {
  const int h = img.height, w = img.width;
  const int vw = w - kSsimWindow + 1, vh = h - kSsimWindow + 1;
  tmp.assign(std::size_t(h) * vw, S(0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < vw; ++x) {
      S s = S(0);
      for (int i = 0; i < kSsimWindow; ++i) {
        S v = img.at(y, x + i, channel);
        if (squared) v *= v;
        if (other) v = img.at(y, x + i, channel) * other->at(y, x + i, channel);
        s += v * k[i];
      }
      tmp[std::size_t(y) * vw + x] = s;
    }
  }
  out.assign(std::size_t(vh) * vw, S(0));
  for (int y = 0; y < vh; ++y) {
    for (int x = 0; x < vw; ++x) {
      S s = S(0);
      for (int i = 0; i < kSsimWindow; ++i) s += tmp[std::size_t(y + i) * vw + x] * k[i];
      out[std::size_t(y) * vw + x] = s;
    }
  }
}

// Zero-padded "same" convolution of a valid-grid field back to image size;
// the symmetric kernel makes convolution and correlation coincide.
template <class S>
void spread_to_image(const std::vector<S>& field, int vh, int vw, int h, int w,
                     const std::array<S, kSsimWindow>& k, std::vector<S>& tmp, std::vector<S>& out) {
  const int r = kSsimWindow / 2;
  // Horizontal: field column x contributes to image columns x .. x+10.
  tmp.assign(std::size_t(vh) * w, S(0));
  for (int y = 0; y < vh; ++y) {
    for (int x = 0; x < w; ++x) {
      S s = S(0);
      for (int i = 0; i < kSsimWindow; ++i) {
        const int fx = x - i;  // field x such that center fx + r aligns under tap i
        if (fx >= 0 && fx < vw) s += field[std::size_t(y) * vw + fx] * k[i];
      }
      tmp[std::size_t(y) * w + x] = s;
    }
  }
  out.assign(std::size_t(h) * w, S(0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      S s = S(0);
      for (int i = 0; i < kSsimWindow; ++i) {
        const int fy = y - i;
        if (fy >= 0 && fy < vh) s += tmp[std::size_t(fy) * w + x] * k[i];
      }
      out[std::size_t(y) * w + x] = s;
    }
  }
  (void)r;
}

}  // namespace detail

template <class S>
struct SsimResult {
  S value = S(1);
  Image<S> grad_pred;  // dSSIM/dpred, zero when no window fits
};

/// Mean SSIM over all fully interior 11x11 windows, averaged across
/// channels, with the analytic gradient with respect to pred. Images too
/// small for a single window compare as identical (value 1, zero gradient).
template <class S>
SsimResult<S> ssim(const Image<S>& pred, const Image<S>& gt, S data_range = S(1), bool want_grad = true) {
  if (!pred.same_shape(gt)) throw DataError("ssim: image dimensions differ");
  SsimResult<S> out;
  out.grad_pred = Image<S>(pred.height, pred.width, pred.channels);
  const int h = pred.height, w = pred.width, c = pred.channels;
  if (h < kSsimWindow || w < kSsimWindow) return out;
  const int vh = h - kSsimWindow + 1, vw = w - kSsimWindow + 1;
  const S c1 = sq(S(0.01) * data_range), c2 = sq(S(0.03) * data_range);
  const auto k = detail::ssim_kernel<S>();
  const S window_count = S(vh) * S(vw);

  std::vector<S> tmp, ux, uy, uxx, uyy, uxy;
  std::vector<S> w0(std::size_t(vh) * vw), w1(std::size_t(vh) * vw), w2(std::size_t(vh) * vw);
  std::vector<S> conv_tmp, conv0, conv1, conv2;
  S total = S(0);
  for (int ch = 0; ch < c; ++ch) {
    detail::filter_valid(pred, ch, k, tmp, ux, false, (const Image<S>*)nullptr);
    detail::filter_valid(gt, ch, k, tmp, uy, false, (const Image<S>*)nullptr);
    detail::filter_valid(pred, ch, k, tmp, uxx, true, (const Image<S>*)nullptr);
    detail::filter_valid(gt, ch, k, tmp, uyy, true, (const Image<S>*)nullptr);
    detail::filter_valid(pred, ch, k, tmp, uxy, false, &gt);
    S channel_sum = S(0);
    for (std::size_t i = 0; i < ux.size(); ++i) {
      const S mx = ux[i], my = uy[i];
      const S vx = uxx[i] - mx * mx;
      const S vy = uyy[i] - my * my;
      const S vxy = uxy[i] - mx * my;
      const S a1 = S(2) * mx * my + c1, a2 = S(2) * vxy + c2;
      const S b1 = mx * mx + my * my + c1, b2 = vx + vy + c2;
      const S s = (a1 * a2) / (b1 * b2);
      channel_sum += s;
      if (want_grad) {
        w1[i] = S(2) * a1 / (b1 * b2);
        w2[i] = S(-2) * s / b2;
        w0[i] = S(2) * my * a2 / (b1 * b2) - w1[i] * my - S(2) * s * mx / b1 - w2[i] * mx;
      }
    }
    total += channel_sum / window_count;
    if (want_grad) {
      detail::spread_to_image(w0, vh, vw, h, w, k, conv_tmp, conv0);
      detail::spread_to_image(w1, vh, vw, h, w, k, conv_tmp, conv1);
      detail::spread_to_image(w2, vh, vw, h, w, k, conv_tmp, conv2);
      const S norm = S(1) / (window_count * S(c));
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = std::size_t(y) * w + x;
          out.grad_pred.at(y, x, ch) =
              norm * (conv0[i] + gt.at(y, x, ch) * conv1[i] + pred.at(y, x, ch) * conv2[i]);
        }
      }
    }
  }
  out.value = total / S(c);
  return out;
}

template <class S>
struct RenderLoss {
  S value = S(0);
  S l1 = S(0);
  S ssim_value = S(1);
  Image<S> grad_pred;
};

/// Weighted photometric loss: lambda_img * L1 + lambda_ssim * (1 - SSIM)/2,
/// with the analytic gradient with respect to the prediction.
template <class S>
RenderLoss<S> loss_render(const Image<S>& pred, const Image<S>& gt, const LossWeights<S>& w) {
  if (!pred.same_shape(gt)) throw DataError("loss_render: image dimensions differ");
  RenderLoss<S> out;
  out.grad_pred = Image<S>(pred.height, pred.width, pred.channels);
  const std::size_t n = pred.data.size();
  const S inv_n = S(1) / S(n);
  S l1 = S(0);
  for (std::size_t i = 0; i < n; ++i) {
    const S d = pred.data[i] - gt.data[i];
    l1 += std::abs(d);
    out.grad_pred.data[i] = w.lambda_img * inv_n * (d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)));
  }
  out.l1 = l1 * inv_n;
  const auto ss = ssim(pred, gt, S(1), true);
  out.ssim_value = ss.value;
  for (std::size_t i = 0; i < n; ++i)
    out.grad_pred.data[i] -= w.lambda_ssim * S(0.5) * ss.grad_pred.data[i];
  out.value = w.lambda_img * out.l1 + w.lambda_ssim * (S(1) - ss.value) / S(2);
  return out;
}

template <class S>
struct RegLoss {
  S value = S(0);
  std::vector<S> d_opacity_logit;  // the only field that receives gradient
};

/// Mean opacity penalty weighted by the detached temporal opacity at t.
template <class S>
RegLoss<S> loss_reg(const GaussianSet<S>& set, S t) {
  RegLoss<S> out;
  out.d_opacity_logit.assign(set.count, S(0));
  if (set.count == 0) return out;
  const S inv_n = S(1) / S(set.count);
  for (int i = 0; i < set.count; ++i) {
    const S sigma = sigmoid(set.opacity_logit[i]);
    const S u = (t - set.time[i]) / std::exp(set.duration_log[i]);
    const S temporal = std::exp(S(-0.5) * u * u);  // treated as a constant weight
    out.value += inv_n * sigma * temporal;
    out.d_opacity_logit[i] = inv_n * temporal * sigma * (S(1) - sigma);
  }
  return out;
}

/// Peak signal-to-noise ratio in dB, capped at 99 for (near-)identical pairs.
template <class S>
S metric_psnr(const Image<S>& pred, const Image<S>& gt, S data_range = S(1)) {
  if (!pred.same_shape(gt)) throw DataError("metric_psnr: image dimensions differ");
  S mse = S(0);
  for (std::size_t i = 0; i < pred.data.size(); ++i) mse += sq(pred.data[i] - gt.data[i]);
  mse /= S(pred.data.size());
  if (mse <= S(0)) return S(99);
  const S db = S(10) * std::log10(data_range * data_range / mse);
  return std::min(db, S(99));
}

/// Structural dissimilarity (1 - SSIM)/2; variant selects the data range,
/// 1 -> 1.0 and 2 -> 2.0.
template <class S>
S metric_dssim(const Image<S>& pred, const Image<S>& gt, int variant) {
  if (variant != 1 && variant != 2) throw UsageError("dssim variant must be 1 or 2");
  const S range = variant == 1 ? S(1) : S(2);
  const auto ss = ssim(pred, gt, range, false);
  return (S(1) - ss.value) / S(2);
}

}  // namespace gs4d
