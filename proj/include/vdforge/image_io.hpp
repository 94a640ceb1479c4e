#pragma once

#include <filesystem>
#include <string>

#include "vdforge/degrade.hpp"

namespace vdforge {

// Decodes PNG (any bit depth / color type, converted to 8-bit RGB).
Image read_png(const std::filesystem::path& path);
// Decodes baseline or progressive JPEG to 8-bit RGB.
Image read_jpeg(const std::filesystem::path& path);
// Picks PNG or JPEG by file signature.
Image read_image(const std::filesystem::path& path);

// Writes 8-bit RGB PNG. Output depends only on the pixels and `level`.
void write_png(const std::filesystem::path& path, const Image& img, int level = 6);

// `<dir>/<stem>__<view_label>.png` for a source image; the source itself for HQ.
std::filesystem::path degraded_image_path(const std::filesystem::path& source,
                                          const ViewSpec& view);

// Returns the path of the image for `view`, rendering and writing the
// degraded file next to the source when it does not exist yet.
std::filesystem::path materialize_view(const std::filesystem::path& source,
                                       const ViewSpec& view);

}  // namespace vdforge
