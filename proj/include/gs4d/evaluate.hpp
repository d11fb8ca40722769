#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gs4d/common.hpp"
#include "gs4d/image.hpp"
#include "gs4d/objective.hpp"
#include "gs4d/rasterizer.hpp"
#include "gs4d/scenedata.hpp"

namespace gs4d {

template <class S>
struct FrameMetrics {
  std::size_t frame = 0;  // index into the scene's frame list
  std::string camera;
  S time = S(0);
  S psnr = S(0);
  S dssim1 = S(0);
  S dssim2 = S(0);
  bool masked = false;
};

template <class S>
struct EvalReport {
  std::string split;
  std::vector<FrameMetrics<S>> frames;
  S mean_psnr = S(0), mean_dssim1 = S(0), mean_dssim2 = S(0);
};

namespace detail {

/// Applies a mask per the evaluation contract: both images are cropped to the
/// mask's bounding box and zeroed where the mask is off. An all-on mask is
/// the identity.
template <class S>
void apply_mask(Image<S>& pred, Image<S>& gt, const Image<S>& mask) {
  if (mask.height != pred.height || mask.width != pred.width)
    throw DataError("mask dimensions differ from the image");
  int y0 = pred.height, y1 = -1, x0 = pred.width, x1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x, 0) > S(0.5)) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  if (y1 < 0) throw DataError("mask has no active pixels");
  Image<S> p2(y1 - y0 + 1, x1 - x0 + 1, pred.channels);
  Image<S> g2(y1 - y0 + 1, x1 - x0 + 1, gt.channels);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const bool on = mask.at(y, x, 0) > S(0.5);
      for (int c = 0; c < pred.channels; ++c) {
        p2.at(y - y0, x - x0, c) = on ? pred.at(y, x, c) : S(0);
        g2.at(y - y0, x - x0, c) = on ? gt.at(y, x, c) : S(0);
      }
    }
  pred = std::move(p2);
  gt = std::move(g2);
}

}  // namespace detail

/// Renders every frame of the chosen camera split and scores it against the
/// stored image; frames with a mask are cropped to the mask's bounding box
/// with outside pixels zeroed.
template <class S>
EvalReport<S> evaluate(const Scene<S>& scene, const GaussianSet<S>& set, const std::string& split,
                       const RasterConfig<S>& cfg = {}, const Vec3<S>& background = Vec3<S>::Zero()) {
  const std::vector<std::string>* ids = nullptr;
  if (split == "train")
    ids = &scene.train_cameras;
  else if (split == "test")
    ids = &scene.test_cameras;
  else if (split != "all")
    throw UsageError("split must be train, test, or all");

  EvalReport<S> report;
  report.split = split;
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const auto& fr = scene.frames[i];
    if (ids && std::find(ids->begin(), ids->end(), fr.camera) == ids->end()) continue;
    const auto out = render(set, scene.camera(fr.camera), fr.time, background, cfg);
    Image<S> pred = out.rgb;
    // Metrics are computed at the precision the ground truth actually has:
    // predictions are rounded onto the stored images' 8-bit grid, so a set
    // that reproduces the dataset exactly scores exactly (PSNR cap, DSSIM 0).
    for (auto& v : pred.data) v = S(quantize_u8(double(v))) / S(255);
    Image<S> gt = scene.load_image(i);
    FrameMetrics<S> m;
    m.frame = i;
    m.camera = fr.camera;
    m.time = fr.time;
    if (!fr.mask.empty()) {
      const Image<S> mask = read_pnm<S>(scene.resolve(fr.mask).string());
      detail::apply_mask(pred, gt, mask);
      m.masked = true;
    }
    m.psnr = metric_psnr(pred, gt);
    m.dssim1 = metric_dssim(pred, gt, 1);
    m.dssim2 = metric_dssim(pred, gt, 2);
    report.frames.push_back(m);
  }
  if (report.frames.empty())
    throw DataError("split '" + split + "' selects no frames of scene '" + scene.name + "'");
  for (const auto& m : report.frames) {
    report.mean_psnr += m.psnr;
    report.mean_dssim1 += m.dssim1;
    report.mean_dssim2 += m.dssim2;
  }
  const S n = S(report.frames.size());
  report.mean_psnr /= n;
  report.mean_dssim1 /= n;
  report.mean_dssim2 /= n;
  return report;
}

/// Flat `key value` lines, one metric per line.
template <class S>
void write_report(const EvalReport<S>& report, std::ostream& out) {
  out.precision(10);
  out << "split " << report.split << "\n";
  out << "frames " << report.frames.size() << "\n";
  for (std::size_t i = 0; i < report.frames.size(); ++i) {
    const auto& m = report.frames[i];
    out << "frame." << i << ".index " << m.frame << "\n";
    out << "frame." << i << ".camera " << m.camera << "\n";
    out << "frame." << i << ".time " << double(m.time) << "\n";
    out << "frame." << i << ".masked " << (m.masked ? 1 : 0) << "\n";
    out << "frame." << i << ".psnr " << double(m.psnr) << "\n";
    out << "frame." << i << ".dssim1 " << double(m.dssim1) << "\n";
    out << "frame." << i << ".dssim2 " << double(m.dssim2) << "\n";
  }
  out << "mean.psnr " << double(report.mean_psnr) << "\n";
  out << "mean.dssim1 " << double(report.mean_dssim1) << "\n";
  out << "mean.dssim2 " << double(report.mean_dssim2) << "\n";
}

}  // namespace gs4d
