#include "glandseg/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <opencv2/imgproc.hpp>

#include "glandseg/morphology.hpp"

namespace glandseg::figures {

namespace {

// RgbImage and an RGB cv::Mat share the interleaved layout.
cv::Mat to_mat(const RgbImage& img) {
  cv::Mat m(img.rows(), img.cols(), CV_8UC3);
  std::memcpy(m.data, img.data(), static_cast<std::size_t>(img.rows()) * img.cols() * 3);
  return m;
}

RgbImage from_mat(const cv::Mat& m) {
  RgbImage img(m.rows, m.cols);
  cv::Mat c = m.isContinuous() ? m : m.clone();
  std::memcpy(img.data(), c.data, static_cast<std::size_t>(m.rows) * m.cols * 3);
  return img;
}

cv::Vec3b palette(std::int32_t label) {
  // Golden-angle hue walk keeps neighbouring labels apart.
  const double hue = std::fmod(static_cast<double>(label) * 137.508, 360.0);
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue / 2.0, 200, 230)), rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  return rgb.at<cv::Vec3b>(0, 0);
}

}  // namespace

RgbImage heat_overlay(const RgbImage& image, const FloatRaster& heat, double alpha) {
  cv::Mat h(heat.rows(), heat.cols(), CV_8U);
  for (int r = 0; r < heat.rows(); ++r)
    for (int c = 0; c < heat.cols(); ++c)
      h.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::lround(std::clamp(heat(r, c), 0.0f, 1.0f) * 255.0f));
  cv::Mat coloured, rgb;
  cv::applyColorMap(h, coloured, cv::COLORMAP_JET);
  cv::cvtColor(coloured, rgb, cv::COLOR_BGR2RGB);
  cv::Mat out;
  cv::addWeighted(to_mat(image), 1.0 - alpha, rgb, alpha, 0.0, out);
  return from_mat(out);
}

RgbImage gray(const FloatRaster& values) {
  RgbImage out(values.rows(), values.cols());
  for (int r = 0; r < values.rows(); ++r)
    for (int c = 0; c < values.cols(); ++c) {
      const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(values(r, c), 0.0f, 1.0f) * 255.0f));
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = v;
    }
  return out;
}

RgbImage gray(const BinaryMask& mask) {
  RgbImage out(mask.rows(), mask.cols());
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c)
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = mask(r, c) ? 255 : 0;
  return out;
}

RgbImage instance_overlay(const RgbImage& image, const InstanceMask& instances) {
  RgbImage out = image;
  const auto edge = inner_boundary(instances.foreground());
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c) {
      const auto l = instances.labels(r, c);
      if (l == 0) {
        for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = static_cast<std::uint8_t>(image.at(r, c, ch) / 2);
        continue;
      }
      const auto col = palette(l);
      for (int ch = 0; ch < 3; ++ch)
        out.at(r, c, ch) = edge(r, c) ? 255 : static_cast<std::uint8_t>((image.at(r, c, ch) + 2 * col[ch]) / 3);
    }
  return out;
}

RgbImage panel_row(const std::vector<RgbImage>& panels, const std::vector<std::string>& captions) {
  constexpr int gap = 8, caption_h = 28;
  int width = gap, height = 0;
  for (const auto& p : panels) {
    width += p.cols() + gap;
    height = std::max(height, p.rows());
  }
  const int top = captions.empty() ? gap : caption_h;
  cv::Mat canvas(height + top + gap, width, CV_8UC3, cv::Scalar(255, 255, 255));
  int x = gap;
  for (std::size_t i = 0; i < panels.size(); ++i) {
    to_mat(panels[i]).copyTo(canvas(cv::Rect(x, top, panels[i].cols(), panels[i].rows())));
    if (i < captions.size())
      cv::putText(canvas, captions[i], {x, top - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    x += panels[i].cols() + gap;
  }
  return from_mat(canvas);
}

RgbImage stack_rows(const std::vector<RgbImage>& rows) {
  int width = 0, height = 0;
  for (const auto& r : rows) {
    width = std::max(width, r.cols());
    height += r.rows();
  }
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  int y = 0;
  for (const auto& r : rows) {
    to_mat(r).copyTo(canvas(cv::Rect(0, y, r.cols(), r.rows())));
    y += r.rows();
  }
  return from_mat(canvas);
}

RgbImage loss_plot(const std::vector<LossPoint>& curve, const std::string& title, int width, int height) {
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 70, right = 20, top = 40, bottom = 40;
  cv::rectangle(canvas, {left, top}, {width - right, height - bottom}, cv::Scalar(0, 0, 0));
  cv::putText(canvas, title, {left, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  if (curve.empty()) return from_mat(canvas);

  double lo = curve.front().loss, hi = lo;
  for (const auto& p : curve) {
    lo = std::min(lo, p.loss);
    hi = std::max(hi, p.loss);
  }
  if (hi <= lo) hi = lo + 1.0;
  const double last_step = std::max<double>(1.0, static_cast<double>(curve.back().step));
  std::vector<cv::Point> pts;
  for (const auto& p : curve) {
    const int x = left + static_cast<int>(std::lround((width - left - right) * (static_cast<double>(p.step) / last_step)));
    const int y = height - bottom - static_cast<int>(std::lround((height - top - bottom) * ((p.loss - lo) / (hi - lo))));
    pts.emplace_back(x, y);
  }
  cv::polylines(canvas, pts, false, cv::Scalar(200, 40, 40), 1, cv::LINE_AA);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", hi);
  cv::putText(canvas, buf, {4, top + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  std::snprintf(buf, sizeof buf, "%.4g", lo);
  cv::putText(canvas, buf, {4, height - bottom}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  std::snprintf(buf, sizeof buf, "step %lld", static_cast<long long>(curve.back().step));
  cv::putText(canvas, buf, {width - right - 110, height - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1,
              cv::LINE_AA);
  return from_mat(canvas);
}

}  // namespace glandseg::figures
