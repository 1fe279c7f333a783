#pragma once

#include <string>
#include <vector>

#include "glandseg/raster.hpp"
#include "glandseg/training.hpp"

namespace glandseg::figures {

/// Jet-coloured heat map blended over the image.
RgbImage heat_overlay(const RgbImage& image, const FloatRaster& heat, double alpha = 0.45);

/// Grey-level rendering of a [0, 1] raster.
RgbImage gray(const FloatRaster& values);
RgbImage gray(const BinaryMask& mask);

/// Each instance filled with a distinct colour over a dimmed image, with a
/// white outline.
RgbImage instance_overlay(const RgbImage& image, const InstanceMask& instances);

/// Panels side by side with a small gap and an optional caption strip.
RgbImage panel_row(const std::vector<RgbImage>& panels, const std::vector<std::string>& captions = {});

/// Panel rows stacked vertically, left aligned.
RgbImage stack_rows(const std::vector<RgbImage>& rows);

RgbImage loss_plot(const std::vector<LossPoint>& curve, const std::string& title, int width = 640, int height = 360);

}  // namespace glandseg::figures
