#pragma once

#include <filesystem>

#include "glandseg/raster.hpp"

namespace glandseg::io {

namespace fs = std::filesystem;

RgbImage read_rgb(const fs::path& path);
void write_rgb(const fs::path& path, const RgbImage& image);

/// Reads a lossless integer raster (8- or 16-bit, any channel count; the first
/// channel is used).
InstanceMask read_labels(const fs::path& path);
/// 16-bit PNG. Throws if a label exceeds 65535.
void write_labels(const fs::path& path, const InstanceMask& mask);

/// Stored as 0/255 8-bit.
BinaryMask read_binary(const fs::path& path);
void write_binary(const fs::path& path, const BinaryMask& mask);

/// 32-bit float single-channel TIFF.
FloatRaster read_float(const fs::path& path);
void write_float(const fs::path& path, const FloatRaster& raster);

}  // namespace glandseg::io
