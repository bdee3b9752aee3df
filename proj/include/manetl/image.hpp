#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace manetl {

// 8-bit interleaved image, rows top-down, channels R,G,B for colour.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::uint8_t> pixels;  // height * width * channels

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t value = 0)
        : height(h), width(w), channels(c), pixels(h * w * c, value) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) {
        return pixels[(y * width + x) * channels + c];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return pixels[(y * width + x) * channels + c];
    }
    bool operator==(const Image&) const = default;
};

// Single-channel float plane, row-major.
struct Plane {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    bool operator==(const Plane&) const = default;
};

// Uncompressed 24-bit BMP (BITMAPINFOHEADER or a later header with BI_RGB).
// Throws FormatError naming the rejected header field or truncated section.
Image decode_bmp(std::span<const std::uint8_t> bytes);
Image read_bmp(const std::filesystem::path& path);

// 24-bit BI_RGB; single-channel images are written as grey RGB.
std::vector<std::uint8_t> encode_bmp(const Image& image, bool top_down = false);
void write_bmp(const std::filesystem::path& path, const Image& image);

// v -> 255 - v on every channel.
Image invert_colors(const Image& image);

// y = 0.299 R + 0.587 G + 0.114 B, rounded half up. Throws DimensionError
// unless the input has three channels.
Image to_grayscale(const Image& image);

// Mean of the three channels, rounded half up; the no-preprocessing path.
Image channel_mean(const Image& image);

// Rotation about the image centre by `degrees` (counter-clockwise as
// displayed) with bilinear sampling; samples outside the source take `fill`.
Image rotate_with_fill(const Image& image, double degrees, std::uint8_t fill);

// Resamples a single-channel image to size x size and scales to [0, 1].
// Shrinking averages the covered source area; enlarging is bilinear.
Plane resize_to_unit(const Image& gray, std::size_t size);

}  // namespace manetl
