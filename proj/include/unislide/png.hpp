#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace unislide::png {

/// RGB raster, row-major, 3 bytes per pixel.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image(int w, int h, std::uint32_t fill = 0xFFFFFF);
    void fill_rect(int x0, int y0, int x1, int y1, std::uint32_t color);
    void stroke_rect(int x0, int y0, int x1, int y1, std::uint32_t color, int thickness = 1);
};

/// 8-bit truecolor PNG bytes.
std::string encode(const Image& image);

/// Parses "#RRGGBB"; fallback when malformed.
std::uint32_t parse_hex_color(const std::string& hex, std::uint32_t fallback);

}  // namespace unislide::png
