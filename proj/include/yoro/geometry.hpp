#pragma once

#include <cstddef>
#include <vector>

namespace yoro {

// Axis-aligned corners; normalized or pixel units depending on context.
struct Corners {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Center-size box normalized to the image extent.
struct Box {
    double cx = 0.5, cy = 0.5, w = 1.0, h = 1.0;

    // Throws ValidationError unless 0 <= cx,cy <= 1 and 0 < w,h <= 1.
    static Box validated(double cx, double cy, double w, double h);
    double area() const { return w * h; }
};

bool operator==(const Box& a, const Box& b);

// Corners clipped to the unit square.
Corners to_corners(const Box& b);
// Throws ValidationError for a degenerate (zero or negative extent) input.
Box from_corners(const Corners& c);

Corners to_pixel_corners(const Box& b, double width, double height);
Box from_pixel_corners(const Corners& px, double width, double height);

double iou(const Box& a, const Box& b);
// Generalized IoU in [-1, 1]. A zero-area union yields 0.
double giou(const Box& a, const Box& b);

// Image of height x width pixels cut into square patches of side `patch`,
// numbered row-major.
struct PatchGrid {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t patch = 8;

    // Throws ValidationError unless patch divides both extents.
    void validate() const;
    std::size_t rows() const { return height / patch; }
    std::size_t cols() const { return width / patch; }
    std::size_t count() const { return rows() * cols(); }
    // Pixel-space corners of cell j.
    Corners cell_pixels(std::size_t j) const;
    Box cell_box(std::size_t j) const;
};

enum class CoverageRule {
    // |cell ∩ box| / |cell| >= threshold
    kCellFraction,
    // IoU(cell, box) >= threshold
    kIoU,
};

// Indices of cells the box covers, ascending. Ties at the threshold count as
// covered.
std::vector<std::size_t> patch_coverage(const PatchGrid& grid, const Box& b,
                                        CoverageRule rule = CoverageRule::kCellFraction,
                                        double threshold = 0.5);

}  // namespace yoro
