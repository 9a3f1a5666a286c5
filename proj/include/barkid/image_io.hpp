#pragma once

#include <filesystem>

#include "barkid/image.hpp"

namespace barkid {

// PNG (8-bit gray/RGB) and binary PGM/PPM, chosen by extension on write and
// by content on read. Anything else raises kFormat.
Image read_image(const std::filesystem::path& path);
void write_image(const Image& img, const std::filesystem::path& path);

}  // namespace barkid
