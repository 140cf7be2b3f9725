#include "sigan/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

namespace sigan::png {

namespace {

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write(const std::filesystem::path& path, const Raster& r) {
    if (r.channels != 1 && r.channels != 3) throw PngError("unsupported channel count");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(r.width);
    image.height = static_cast<png_uint_32>(r.height);
    image.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, r.bytes.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw PngError("cannot write " + path.string() + ": " + msg);
    }
}

Raster read(const std::filesystem::path& path, int channels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw PngError("cannot read " + path.string() + ": " + image.message);
    }
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Raster r;
    r.width = static_cast<int>(image.width);
    r.height = static_cast<int>(image.height);
    r.channels = channels;
    r.bytes.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, r.bytes.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw PngError("cannot decode " + path.string() + ": " + msg);
    }
    return r;
}

Raster to_raster(const Image& img) {
    Raster r{img.width, img.height, 3, std::vector<std::uint8_t>(img.plane() * 3)};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) r.bytes[(std::size_t(y) * img.width + x) * 3 + c] = to_byte(img.at(c, y, x));
    return r;
}

Raster to_raster(const Mask& m) {
    Raster r{m.width, m.height, 1, std::vector<std::uint8_t>(m.pixels.size())};
    for (std::size_t i = 0; i < m.pixels.size(); ++i) r.bytes[i] = m.pixels[i] != 0.0f ? 255 : 0;
    return r;
}

Image image_from(const Raster& r) {
    Image img(r.height, r.width);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const int src = r.channels == 3 ? c : 0;
                img.at(c, y, x) = static_cast<float>(r.bytes[(std::size_t(y) * r.width + x) * r.channels + src]) / 255.0f;
            }
    return img;
}

Mask mask_from(const Raster& r) {
    Mask m(r.height, r.width);
    for (std::size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = r.bytes[i * r.channels] > 127 ? 1.0f : 0.0f;
    return m;
}

void write_image(const std::filesystem::path& path, const Image& img) { write(path, to_raster(img)); }
Image read_image(const std::filesystem::path& path) { return image_from(read(path, 3)); }
void write_mask(const std::filesystem::path& path, const Mask& m) { write(path, to_raster(m)); }
Mask read_mask(const std::filesystem::path& path) { return mask_from(read(path, 1)); }

}  // namespace sigan::png
