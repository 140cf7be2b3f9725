#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "sigan/core.hpp"

namespace sigan::png {

class PngError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit raster.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;  ///< 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> bytes;
};

void write(const std::filesystem::path& path, const Raster& r);
/// Reads any PNG, converting to `channels` (1 or 3) components.
Raster read(const std::filesystem::path& path, int channels);

Raster to_raster(const Image& img);
Raster to_raster(const Mask& m);
Image image_from(const Raster& r);
/// Values above 127 map to 1.
Mask mask_from(const Raster& r);

void write_image(const std::filesystem::path& path, const Image& img);
Image read_image(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m);
Mask read_mask(const std::filesystem::path& path);

}  // namespace sigan::png
