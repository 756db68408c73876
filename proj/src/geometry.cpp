#include "yoro/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "yoro/errors.hpp"

namespace yoro {

namespace {

// Slack for threshold comparisons so that exact geometric ties survive
// floating-point rounding.
constexpr double kTieSlack = 1e-9;

double overlap(double a1, double a2, double b1, double b2) {
    return std::max(0.0, std::min(a2, b2) - std::max(a1, b1));
}

double corner_area(const Corners& c) { return std::max(0.0, c.x2 - c.x1) * std::max(0.0, c.y2 - c.y1); }

}  // namespace

Box Box::validated(double cx, double cy, double w, double h) {
    if (!(w > 0.0) || !(h > 0.0))
        throw ValidationError("degenerate box: w=" + std::to_string(w) + " h=" + std::to_string(h));
    if (w > 1.0 + 1e-12 || h > 1.0 + 1e-12 || cx < -1e-12 || cx > 1.0 + 1e-12 || cy < -1e-12 ||
        cy > 1.0 + 1e-12)
        throw ValidationError("box outside the unit square");
    return Box{cx, cy, w, h};
}

bool operator==(const Box& a, const Box& b) {
    return a.cx == b.cx && a.cy == b.cy && a.w == b.w && a.h == b.h;
}

Corners to_corners(const Box& b) {
    auto clip = [](double v) { return std::clamp(v, 0.0, 1.0); };
    return {clip(b.cx - b.w / 2), clip(b.cy - b.h / 2), clip(b.cx + b.w / 2), clip(b.cy + b.h / 2)};
}

Box from_corners(const Corners& c) {
    const double w = c.x2 - c.x1;
    const double h = c.y2 - c.y1;
    if (!(w > 0.0) || !(h > 0.0)) throw ValidationError("degenerate corners");
    return Box{(c.x1 + c.x2) / 2, (c.y1 + c.y2) / 2, w, h};
}

Corners to_pixel_corners(const Box& b, double width, double height) {
    const Corners n = to_corners(b);
    return {n.x1 * width, n.y1 * height, n.x2 * width, n.y2 * height};
}

Box from_pixel_corners(const Corners& px, double width, double height) {
    if (!(width > 0) || !(height > 0)) throw ValidationError("image extents must be positive");
    return from_corners({px.x1 / width, px.y1 / height, px.x2 / width, px.y2 / height});
}

double iou(const Box& a, const Box& b) {
    const Corners ca = to_corners(a);
    const Corners cb = to_corners(b);
    const double inter = overlap(ca.x1, ca.x2, cb.x1, cb.x2) * overlap(ca.y1, ca.y2, cb.y1, cb.y2);
    const double uni = corner_area(ca) + corner_area(cb) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) {
    const Corners ca = to_corners(a);
    const Corners cb = to_corners(b);
    const double inter = overlap(ca.x1, ca.x2, cb.x1, cb.x2) * overlap(ca.y1, ca.y2, cb.y1, cb.y2);
    const double uni = corner_area(ca) + corner_area(cb) - inter;
    if (!(uni > 0.0)) return 0.0;
    const Corners hull{std::min(ca.x1, cb.x1), std::min(ca.y1, cb.y1), std::max(ca.x2, cb.x2),
                       std::max(ca.y2, cb.y2)};
    const double hull_area = corner_area(hull);
    return inter / uni - (hull_area - uni) / hull_area;
}

void PatchGrid::validate() const {
    if (patch == 0 || height == 0 || width == 0 || height % patch != 0 || width % patch != 0)
        throw ValidationError("patch side " + std::to_string(patch) + " must divide image " +
                              std::to_string(height) + "x" + std::to_string(width));
}

Corners PatchGrid::cell_pixels(std::size_t j) const {
    const double r = static_cast<double>(j / cols());
    const double c = static_cast<double>(j % cols());
    const double s = static_cast<double>(patch);
    return {c * s, r * s, (c + 1) * s, (r + 1) * s};
}

Box PatchGrid::cell_box(std::size_t j) const {
    return from_pixel_corners(cell_pixels(j), static_cast<double>(width), static_cast<double>(height));
}

std::vector<std::size_t> patch_coverage(const PatchGrid& grid, const Box& b, CoverageRule rule,
                                        double threshold) {
    grid.validate();
    // Pixel units keep cell edges exact integers.
    const Corners px = to_pixel_corners(b, static_cast<double>(grid.width), static_cast<double>(grid.height));
    const double cell_area = static_cast<double>(grid.patch * grid.patch);
    const double box_area = corner_area(px);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < grid.count(); ++j) {
        const Corners cell = grid.cell_pixels(j);
        const double inter = overlap(cell.x1, cell.x2, px.x1, px.x2) * overlap(cell.y1, cell.y2, px.y1, px.y2);
        double score = 0.0;
        if (rule == CoverageRule::kCellFraction) {
            score = inter / cell_area;
        } else {
            const double uni = cell_area + box_area - inter;
            score = uni > 0.0 ? inter / uni : 0.0;
        }
        if (score >= threshold - kTieSlack) out.push_back(j);
    }
    return out;
}

}  // namespace yoro
