#include "soda2/class_map.hpp"

#include <fstream>

#include "soda2/data.hpp"
#include "soda2/error.hpp"

namespace soda2 {

void write_class_map(const std::vector<int>& labels, std::size_t width,
                     std::size_t height, const std::string& path) {
    if (labels.size() != width * height)
        throw ValueError("write_class_map: label count does not match extent");
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.reserve(out.size() + 3 * labels.size());
    for (int v : labels) {
        if (v == static_cast<int>(kUnknownSentinel)) {
            out.append(3, '\0');
        } else if (v == 0) {
            out.append(3, static_cast<char>(0xFF));
        } else if (v > 0) {
            const auto& c = kClassPalette[static_cast<std::size_t>(v - 1) % 12];
            out.push_back(static_cast<char>(c[0]));
            out.push_back(static_cast<char>(c[1]));
            out.push_back(static_cast<char>(c[2]));
        } else {
            throw ValueError("write_class_map: negative label");
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write map " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write to " + path);
}

}  // namespace soda2
