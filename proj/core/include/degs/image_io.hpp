// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "degs/common.hpp"

#include <filesystem>

namespace degs {

/// Reads an 8- or 16-bit PNG into [0,1] values. Gray and gray+alpha become
/// one channel, RGB and RGBA become three; alpha is dropped.
Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image; values are clamped to [0,1] and rounded to
/// the nearest level of the chosen depth (8 or 16).
void write_png(const std::filesystem::path& path, const Image& image, int bit_depth = 8);

/// Mask PNG: nonzero samples map to 1.
Mask read_mask_png(const std::filesystem::path& path);

}  // namespace degs
