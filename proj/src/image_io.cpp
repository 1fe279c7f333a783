#include "glandseg/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <cstring>
#include <stdexcept>

namespace glandseg::io {

namespace {

cv::Mat read_unchanged(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("cannot read raster '" + path.string() + "'");
  return m;
}

void write_mat(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write raster '" + path.string() + "'");
}

cv::Mat first_channel(const cv::Mat& m) {
  if (m.channels() == 1) return m;
  cv::Mat ch;
  cv::extractChannel(m, ch, 0);
  return ch;
}

}  // namespace

RgbImage read_rgb(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot read image '" + path.string() + "'");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out(rgb.rows, rgb.cols);
  for (int r = 0; r < rgb.rows; ++r) std::memcpy(&out.at(r, 0, 0), rgb.ptr<std::uint8_t>(r), rgb.cols * 3);
  return out;
}

void write_rgb(const fs::path& path, const RgbImage& image) {
  cv::Mat rgb(image.rows(), image.cols(), CV_8UC3, const_cast<std::uint8_t*>(image.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  write_mat(path, bgr);
}

InstanceMask read_labels(const fs::path& path) {
  cv::Mat m = first_channel(read_unchanged(path));
  if (m.depth() != CV_8U && m.depth() != CV_16U && m.depth() != CV_32S) {
    throw std::runtime_error("annotation '" + path.string() + "' is not an integer raster");
  }
  cv::Mat labels;
  m.convertTo(labels, CV_32S);
  InstanceMask out(labels.rows, labels.cols);
  for (int r = 0; r < labels.rows; ++r)
    for (int c = 0; c < labels.cols; ++c) out.labels(r, c) = labels.at<std::int32_t>(r, c);
  return out;
}

void write_labels(const fs::path& path, const InstanceMask& mask) {
  cv::Mat m(mask.rows(), mask.cols(), CV_16U);
  for (int r = 0; r < mask.rows(); ++r) {
    for (int c = 0; c < mask.cols(); ++c) {
      const auto v = mask.labels(r, c);
      if (v < 0 || v > 65535) throw std::out_of_range("label " + std::to_string(v) + " does not fit in 16 bits");
      m.at<std::uint16_t>(r, c) = static_cast<std::uint16_t>(v);
    }
  }
  write_mat(path, m);
}

BinaryMask read_binary(const fs::path& path) {
  cv::Mat m = first_channel(read_unchanged(path));
  BinaryMask out(m.rows, m.cols, 0);
  cv::Mat u8;
  m.convertTo(u8, CV_8U);
  for (int r = 0; r < u8.rows; ++r)
    for (int c = 0; c < u8.cols; ++c) out(r, c) = u8.at<std::uint8_t>(r, c) ? 1 : 0;
  return out;
}

void write_binary(const fs::path& path, const BinaryMask& mask) {
  cv::Mat m(mask.rows(), mask.cols(), CV_8U);
  for (int r = 0; r < mask.rows(); ++r)
    for (int c = 0; c < mask.cols(); ++c) m.at<std::uint8_t>(r, c) = mask(r, c) ? 255 : 0;
  write_mat(path, m);
}

FloatRaster read_float(const fs::path& path) {
  cv::Mat m = read_unchanged(path);
  if (m.type() != CV_32FC1) throw std::runtime_error("'" + path.string() + "' is not a 32-bit float raster");
  FloatRaster out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) std::memcpy(&out(r, 0), m.ptr<float>(r), m.cols * sizeof(float));
  return out;
}

void write_float(const fs::path& path, const FloatRaster& raster) {
  cv::Mat m(raster.rows(), raster.cols(), CV_32FC1, const_cast<float*>(raster.data()));
  write_mat(path, m);
}

}  // namespace glandseg::io
