#pragma once

#include <filesystem>
#include <span>
#include <cstdint>

#include "otobias/imageops.hpp"

namespace otobias {

enum class ImageFormat { png, jpeg, unknown };

// Sniffs the magic bytes.
ImageFormat detect_format(std::span<const std::uint8_t> header);

// Decodes PNG or JPEG into 8-bit RGB. Alpha is dropped, grayscale and
// palette images are expanded, 16-bit channels are reduced to 8 bits.
// Throws IoError for unreadable, unsupported or corrupt files (including
// truncated JPEG data).
ImageBuffer decode_image(const std::filesystem::path& path);

// Writes an 8-bit RGB PNG. Output bytes depend only on the pixels (no
// timestamps or text chunks).
void write_png(const ImageBuffer& image, const std::filesystem::path& path);

// Baseline JPEG, used to produce fixtures and JPEG-format exports.
void write_jpeg(const ImageBuffer& image, const std::filesystem::path& path, int quality = 95);

}  // namespace otobias
