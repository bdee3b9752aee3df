#include "manetl/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "manetl/error.hpp"

namespace manetl {

namespace {

constexpr std::size_t kFileHeaderSize = 14;
constexpr std::size_t kInfoHeaderSize = 40;

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void need(std::size_t offset, std::size_t n, const char* section) const {
        if (offset > bytes_.size() || bytes_.size() - offset < n) {
            throw FormatError("BMP truncated in " + std::string(section) + ": need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(offset) + ", file has " +
                              std::to_string(bytes_.size()));
        }
    }
    std::uint16_t u16(std::size_t at) const {
        return static_cast<std::uint16_t>(bytes_[at] | (bytes_[at + 1] << 8));
    }
    std::uint32_t u32(std::size_t at) const {
        return static_cast<std::uint32_t>(bytes_[at]) | (static_cast<std::uint32_t>(bytes_[at + 1]) << 8) |
               (static_cast<std::uint32_t>(bytes_[at + 2]) << 16) | (static_cast<std::uint32_t>(bytes_[at + 3]) << 24);
    }
    std::int32_t i32(std::size_t at) const { return static_cast<std::int32_t>(u32(at)); }

private:
    std::span<const std::uint8_t> bytes_;
};

[[noreturn]] void bad_field(const char* field, long long value, const std::string& expected) {
    throw FormatError("unsupported BMP: header field " + std::string(field) + " = " + std::to_string(value) +
                      " (" + expected + ")");
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::size_t row_stride(std::size_t width) { return (width * 3 + 3) / 4 * 4; }

std::uint8_t round_half_up(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

// Per-output source taps along one axis.
struct Tap {
    std::size_t index;
    double weight;
};

std::vector<std::vector<Tap>> axis_taps(std::size_t src, std::size_t dst) {
    std::vector<std::vector<Tap>> taps(dst);
    const double ratio = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t j = 0; j < dst; ++j) {
        if (src >= dst) {
            const double lo = j * ratio, hi = (j + 1) * ratio;
            for (std::size_t i = static_cast<std::size_t>(std::floor(lo)); i < src && i < hi; ++i) {
                const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
                if (overlap > 0.0) taps[j].push_back({i, overlap / ratio});
            }
        } else {
            const double pos = std::clamp((j + 0.5) * ratio - 0.5, 0.0, static_cast<double>(src - 1));
            const std::size_t i0 = static_cast<std::size_t>(std::floor(pos));
            const std::size_t i1 = std::min(i0 + 1, src - 1);
            const double t = pos - static_cast<double>(i0);
            taps[j].push_back({i0, 1.0 - t});
            if (i1 != i0) taps[j].push_back({i1, t});
        }
    }
    return taps;
}

}  // namespace

Image decode_bmp(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(0, kFileHeaderSize, "file header");
    if (bytes[0] != 'B' || bytes[1] != 'M') bad_field("bfType", r.u16(0), "expected 'BM'");
    const std::uint32_t data_offset = r.u32(10);

    r.need(kFileHeaderSize, 4, "info header");
    const std::uint32_t info_size = r.u32(kFileHeaderSize);
    if (info_size < kInfoHeaderSize) bad_field("biSize", info_size, "need BITMAPINFOHEADER or later");
    r.need(kFileHeaderSize, kInfoHeaderSize, "info header");
    const std::int32_t width = r.i32(18);
    const std::int32_t height = r.i32(22);
    const std::uint16_t planes = r.u16(26);
    const std::uint16_t bit_count = r.u16(28);
    const std::uint32_t compression = r.u32(30);

    if (width <= 0) bad_field("biWidth", width, "must be positive");
    if (height == 0 || height == INT32_MIN) bad_field("biHeight", height, "must be non-zero");
    if (planes != 1) bad_field("biPlanes", planes, "must be 1");
    if (bit_count != 24) bad_field("biBitCount", bit_count, "only 24-bit images are supported");
    if (compression != 0) bad_field("biCompression", compression, "only BI_RGB (0) is supported");
    if (data_offset < kFileHeaderSize + info_size) {
        bad_field("bfOffBits", data_offset, "pixel data overlaps the headers");
    }

    const bool bottom_up = height > 0;
    const std::size_t h = static_cast<std::size_t>(bottom_up ? height : -static_cast<std::int64_t>(height));
    const std::size_t w = static_cast<std::size_t>(width);
    const std::size_t stride = row_stride(w);
    // The final row's padding is commonly omitted by writers.
    r.need(data_offset, stride * (h - 1) + 3 * w, "pixel data");

    Image img(h, w, 3);
    for (std::size_t row = 0; row < h; ++row) {
        const std::size_t y = bottom_up ? h - 1 - row : row;
        const std::uint8_t* src = bytes.data() + data_offset + row * stride;
        for (std::size_t x = 0; x < w; ++x) {
            img.at(y, x, 0) = src[3 * x + 2];
            img.at(y, x, 1) = src[3 * x + 1];
            img.at(y, x, 2) = src[3 * x + 0];
        }
    }
    return img;
}

Image read_bmp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_bmp(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_bmp(const Image& image, bool top_down) {
    if (image.channels != 1 && image.channels != 3) {
        throw DimensionError("encode_bmp: need 1 or 3 channels, got " + std::to_string(image.channels));
    }
    const std::size_t stride = row_stride(image.width);
    const std::size_t data_size = stride * image.height;
    std::vector<std::uint8_t> out;
    out.reserve(kFileHeaderSize + kInfoHeaderSize + data_size);
    out.push_back('B');
    out.push_back('M');
    put32(out, static_cast<std::uint32_t>(kFileHeaderSize + kInfoHeaderSize + data_size));
    put32(out, 0);
    put32(out, static_cast<std::uint32_t>(kFileHeaderSize + kInfoHeaderSize));
    put32(out, kInfoHeaderSize);
    put32(out, static_cast<std::uint32_t>(image.width));
    const auto h = static_cast<std::int32_t>(image.height);
    put32(out, static_cast<std::uint32_t>(top_down ? -h : h));
    put16(out, 1);
    put16(out, 24);
    put32(out, 0);
    put32(out, static_cast<std::uint32_t>(data_size));
    put32(out, 2835);  // 72 dpi
    put32(out, 2835);
    put32(out, 0);
    put32(out, 0);
    for (std::size_t row = 0; row < image.height; ++row) {
        const std::size_t y = top_down ? row : image.height - 1 - row;
        for (std::size_t x = 0; x < image.width; ++x) {
            const std::size_t last = image.channels - 1;
            out.push_back(image.at(y, x, last));
            out.push_back(image.at(y, x, last == 0 ? 0 : 1));
            out.push_back(image.at(y, x, 0));
        }
        out.resize(out.size() + stride - 3 * image.width, 0);
    }
    return out;
}

void write_bmp(const std::filesystem::path& path, const Image& image) {
    const auto bytes = encode_bmp(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image invert_colors(const Image& image) {
    Image out = image;
    for (std::uint8_t& v : out.pixels) v = static_cast<std::uint8_t>(255 - v);
    return out;
}

Image to_grayscale(const Image& image) {
    if (image.channels != 3) {
        throw DimensionError("to_grayscale: expected 3 channels, got " + std::to_string(image.channels));
    }
    Image out(image.height, image.width, 1);
    for (std::size_t i = 0; i < image.height * image.width; ++i) {
        const unsigned r = image.pixels[3 * i], g = image.pixels[3 * i + 1], b = image.pixels[3 * i + 2];
        // Integer weights keep the half-up rounding exact.
        out.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
    }
    return out;
}

Image channel_mean(const Image& image) {
    if (image.channels != 3) {
        throw DimensionError("channel_mean: expected 3 channels, got " + std::to_string(image.channels));
    }
    Image out(image.height, image.width, 1);
    for (std::size_t i = 0; i < image.height * image.width; ++i) {
        const unsigned s = image.pixels[3 * i] + image.pixels[3 * i + 1] + image.pixels[3 * i + 2];
        out.pixels[i] = static_cast<std::uint8_t>((2 * s + 3) / 6);
    }
    return out;
}

Image rotate_with_fill(const Image& image, double degrees, std::uint8_t fill) {
    Image out(image.height, image.width, image.channels, fill);
    if (image.pixels.empty()) return out;
    const double theta = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
    const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
    const double max_x = static_cast<double>(image.width - 1), max_y = static_cast<double>(image.height - 1);
    constexpr double slack = 1e-9;  // absorbs cos(90 deg) != 0 style residue
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            // Inverse map: where does output (x, y) come from in the source?
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            double sx = cx + c * dx - s * dy;
            double sy = cy + s * dx + c * dy;
            if (sx < -slack || sy < -slack || sx > max_x + slack || sy > max_y + slack) continue;
            sx = std::clamp(sx, 0.0, max_x);
            sy = std::clamp(sy, 0.0, max_y);
            const std::size_t x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t ch = 0; ch < image.channels; ++ch) {
                const double top = image.at(y0, x0, ch) * (1.0 - fx) + image.at(y0, x1, ch) * fx;
                const double bottom = image.at(y1, x0, ch) * (1.0 - fx) + image.at(y1, x1, ch) * fx;
                out.at(y, x, ch) = round_half_up(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    return out;
}

Plane resize_to_unit(const Image& gray, std::size_t size) {
    if (gray.channels != 1) {
        throw DimensionError("resize_to_unit: expected 1 channel, got " + std::to_string(gray.channels));
    }
    if (gray.height == 0 || gray.width == 0 || size == 0) throw DimensionError("resize_to_unit: empty image");
    const auto rows = axis_taps(gray.height, size);
    const auto cols = axis_taps(gray.width, size);
    // Horizontal pass into doubles, then vertical.
    std::vector<double> mid(gray.height * size, 0.0);
    for (std::size_t y = 0; y < gray.height; ++y) {
        for (std::size_t j = 0; j < size; ++j) {
            double acc = 0.0;
            for (const Tap& t : cols[j]) acc += t.weight * gray.at(y, t.index);
            mid[y * size + j] = acc;
        }
    }
    Plane out{size, size, std::vector<float>(size * size)};
    for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
            double acc = 0.0;
            for (const Tap& t : rows[i]) acc += t.weight * mid[t.index * size + j];
            out.values[i * size + j] = static_cast<float>(std::clamp(acc / 255.0, 0.0, 1.0));
        }
    }
    return out;
}

}  // namespace manetl
