#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace yoro {

// Interleaved RGB image, height x width x 3, values in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t ch) { return pixels[(y * width + x) * 3 + ch]; }
    double at(std::size_t y, std::size_t x, std::size_t ch) const { return pixels[(y * width + x) * 3 + ch]; }
};

// 8-bit binary PPM (P6).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// Raw interleaved 8-bit RGB; extents come from a sidecar "<path>.json" holding
// {"width": W, "height": H}.
Image read_raw_rgb(const std::filesystem::path& path);
void write_raw_rgb(const std::filesystem::path& path, const Image& image);

// Dispatches on extension: ".ppm" -> P6, ".rgb"/".raw" -> raw with sidecar.
Image read_image(const std::filesystem::path& path);

// 8-bit binary PGM (P5) from values already in [0, 255].
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const unsigned char> values);

// Bilinear resample to the requested extents.
Image resize(const Image& image, std::size_t height, std::size_t width);

}  // namespace yoro
