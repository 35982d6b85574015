#include "unislide/png.hpp"

#include <algorithm>
#include <stdexcept>

#include <zlib.h>

namespace unislide::png {

Image::Image(int w, int h, std::uint32_t fill) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
    fill_rect(0, 0, w, h, fill);
}

void Image::fill_rect(int x0, int y0, int x1, int y1, std::uint32_t color) {
    x0 = std::clamp(x0, 0, width);
    x1 = std::clamp(x1, 0, width);
    y0 = std::clamp(y0, 0, height);
    y1 = std::clamp(y1, 0, height);
    const auto r = static_cast<std::uint8_t>(color >> 16);
    const auto g = static_cast<std::uint8_t>(color >> 8);
    const auto b = static_cast<std::uint8_t>(color);
    for (int y = y0; y < y1; ++y) {
        auto* p = rgb.data() + (static_cast<std::size_t>(y) * width + x0) * 3;
        for (int x = x0; x < x1; ++x) {
            *p++ = r;
            *p++ = g;
            *p++ = b;
        }
    }
}

void Image::stroke_rect(int x0, int y0, int x1, int y1, std::uint32_t color, int t) {
    fill_rect(x0, y0, x1, y0 + t, color);
    fill_rect(x0, y1 - t, x1, y1, color);
    fill_rect(x0, y0, x0 + t, y1, color);
    fill_rect(x1 - t, y0, x1, y1, color);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v >> 24));
    out.push_back(static_cast<char>(v >> 16));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v));
}

void chunk(std::string& out, const char* type, const std::string& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type, 4);
    body += data;
    out += body;
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

std::string encode(const Image& image) {
    std::string raw;
    raw.reserve(static_cast<std::size_t>(image.height) * (image.width * 3 + 1));
    for (int y = 0; y < image.height; ++y) {
        raw.push_back('\0');  // filter: none
        const auto* row = image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3;
        raw.append(reinterpret_cast<const char*>(row), static_cast<std::size_t>(image.width) * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(packed.data()), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("zlib compression failed");
    packed.resize(bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(image.width));
    put_u32(ihdr, static_cast<std::uint32_t>(image.height));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
    chunk(out, "IHDR", ihdr);
    chunk(out, "IDAT", packed);
    chunk(out, "IEND", "");
    return out;
}

std::uint32_t parse_hex_color(const std::string& hex, std::uint32_t fallback) {
    if (hex.size() != 7 || hex[0] != '#') return fallback;
    try {
        std::size_t used = 0;
        const auto v = std::stoul(hex.substr(1), &used, 16);
        return used == 6 ? static_cast<std::uint32_t>(v) : fallback;
    } catch (const std::exception&) {
        return fallback;
    }
}

}  // namespace unislide::png
