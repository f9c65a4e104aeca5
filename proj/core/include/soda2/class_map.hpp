#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace soda2 {

// Fixed class palette for classification maps. Class i uses
// kClassPalette[(i - 1) % 12]; Unknown renders black, unlabeled (0) white.
inline constexpr std::array<std::array<std::uint8_t, 3>, 12> kClassPalette = {{
    {0xE6, 0x19, 0x4B},  // red
    {0x3C, 0xB4, 0x4B},  // green
    {0xFF, 0xE1, 0x19},  // yellow
    {0x43, 0x63, 0xD8},  // blue
    {0xF5, 0x82, 0x31},  // orange
    {0x91, 0x1E, 0xB4},  // purple
    {0x42, 0xD4, 0xF4},  // cyan
    {0xF0, 0x32, 0xE6},  // magenta
    {0xBF, 0xEF, 0x45},  // lime
    {0xFA, 0xBE, 0xD4},  // pink
    {0x46, 0x99, 0x90},  // teal
    {0x9A, 0x63, 0x24},  // brown
}};

// Binary P6 PPM, header "P6\n{W} {H}\n255\n". `labels` is row-major H x W
// with values 1..C, kUnknownSentinel, or 0.
void write_class_map(const std::vector<int>& labels, std::size_t width,
                     std::size_t height, const std::string& path);

}  // namespace soda2
