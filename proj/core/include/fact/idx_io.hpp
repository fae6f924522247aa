#pragma once

#include <string>

#include "fact/dataset.hpp"

namespace fact {

// IDX binary layout: 4-byte big-endian magic (0x00000803 for 3-d image files,
// 0x00000801 for label files), one 4-byte big-endian extent per dimension,
// then raw unsigned bytes.
inline constexpr uint32_t kIdxImageMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelMagic = 0x00000801;

// Loads an image/label file pair into a flattened dataset with features
// scaled to [0,1] (byte / 255). Throws FormatError on bad magic, truncation
// (with byte offset) or image/label count mismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes a labeled dataset as an IDX pair; features are clamped to [0,1] and
// quantized to bytes. rows*cols must equal the feature dimension.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path, size_t rows, size_t cols);

}  // namespace fact
