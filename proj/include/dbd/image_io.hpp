#pragma once

#include <filesystem>

#include "dbd/tensor.hpp"

namespace dbd {

/// Binary PPM (P6, RGB) from a [1,3,H,W] tensor in [0,1].
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);

/// Binary PGM (P5, 8-bit) from a [1,1,H,W] tensor in [0,1].
void write_pgm(const std::filesystem::path& path, const Tensor& gray);

/// PFM (Pf, float32, little-endian) from a [1,1,H,W] tensor.
void write_pfm(const std::filesystem::path& path, const Tensor& values);

/// Reads P5 or P6 images; P5 yields [1,1,H,W], P6 yields [1,3,H,W], both
/// scaled to [0,1].
Tensor read_image(const std::filesystem::path& path);

Tensor read_pfm(const std::filesystem::path& path);

/// True for extensions this toolkit can decode.
bool is_supported_image(const std::filesystem::path& path);

} // namespace dbd
