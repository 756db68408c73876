#include <random>

#include "doctest.h"
#include "yoro/errors.hpp"
#include "yoro/geometry.hpp"

using namespace yoro;

namespace {

// Counts cells of an N x N raster whose centers fall inside each box.
double raster_iou(const Box& a, const Box& b, int n) {
    const Corners ca = to_corners(a), cb = to_corners(b);
    long inter = 0, uni = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double px = (x + 0.5) / n, py = (y + 0.5) / n;
            const bool ia = px >= ca.x1 && px < ca.x2 && py >= ca.y1 && py < ca.y2;
            const bool ib = px >= cb.x1 && px < cb.x2 && py >= cb.y1 && py < cb.y2;
            inter += ia && ib;
            uni += ia || ib;
        }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

Box random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> c(0.05, 0.95), s(0.02, 0.6);
    return {c(rng), c(rng), s(rng), s(rng)};
}

}  // namespace

TEST_CASE("iou") {
    const Box b{0.3, 0.6, 0.2, 0.4};
    CHECK(iou(b, b) == 1.0);
    CHECK(iou({0.25, 0.25, 0.5, 0.5}, {0.75, 0.25, 0.5, 0.5}) == 0.0);
    const Box a{0.25, 0.25, 0.5, 0.5}, c{0.5, 0.5, 0.5, 0.5};
    CHECK(std::fabs(iou(a, c) - raster_iou(a, c, 1000)) <= 1e-3);
    CHECK(iou(a, c) == doctest::Approx(1.0 / 7));

    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const Box p = random_box(rng), q = random_box(rng);
        CHECK(iou(p, q) == doctest::Approx(iou(q, p)).epsilon(1e-14));
    }
}

TEST_CASE("giou") {
    const Box b{0.4, 0.5, 0.3, 0.2};
    CHECK(giou(b, b) == 1.0);
    // Union fills the hull: two halves of one rectangle.
    const Box left{0.25, 0.5, 0.5, 0.5}, right{0.75, 0.5, 0.5, 0.5};
    CHECK(giou(left, right) == doctest::Approx(iou(left, right)));
    const Box a{0.25, 0.5, 0.5, 1.0}, overlap{0.5, 0.5, 0.5, 1.0};
    CHECK(giou(a, overlap) == doctest::Approx(iou(a, overlap)));

    std::mt19937_64 rng(6);
    for (int i = 0; i < 10000; ++i) {
        const Box p = random_box(rng), q = random_box(rng);
        const double g = giou(p, q);
        CHECK(g >= -1.0);
        CHECK(g <= 1.0);
        CHECK(g <= iou(p, q) + 1e-15);
        CHECK(g == doctest::Approx(giou(q, p)).epsilon(1e-14));
        if (!(p == q)) CHECK(g < 1.0);
    }
}

TEST_CASE("box conversions") {
    const Corners c = to_corners({0.5, 0.5, 1, 1});
    CHECK(c.x1 == 0.0);
    CHECK(c.y1 == 0.0);
    CHECK(c.x2 == 1.0);
    CHECK(c.y2 == 1.0);
    CHECK(from_corners({0, 0, 1, 1}) == Box{0.5, 0.5, 1, 1});
    CHECK(from_pixel_corners({16, 16, 48, 48}, 64, 64) == Box{0.5, 0.5, 0.5, 0.5});
    CHECK_THROWS_AS(from_corners({0.5, 0.1, 0.5, 0.4}), ValidationError);
    CHECK_THROWS_AS(Box::validated(0.5, 0.5, 0.0, 0.2), ValidationError);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        // Boxes fully inside the unit square so clipping is inactive.
        const double x1 = 0.5 * u(rng), y1 = 0.5 * u(rng);
        const Box b = from_corners({x1, y1, x1 + 0.01 + 0.49 * u(rng), y1 + 0.01 + 0.49 * u(rng)});
        const Box back = from_corners(to_corners(b));
        worst = std::max({worst, std::fabs(back.cx - b.cx), std::fabs(back.cy - b.cy), std::fabs(back.w - b.w),
                          std::fabs(back.h - b.h)});
        const Box px = from_pixel_corners(to_pixel_corners(b, 640, 480), 640, 480);
        worst = std::max({worst, std::fabs(px.cx - b.cx), std::fabs(px.w - b.w)});
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("patch coverage") {
    const PatchGrid grid{64, 64, 8};
    CHECK(patch_coverage(grid, {0.5, 0.5, 1, 1}).size() == 64);
    CHECK(patch_coverage(grid, grid.cell_box(19)) == std::vector<std::size_t>{19});
    CHECK_THROWS_AS((PatchGrid{64, 60, 8}.validate()), ValidationError);

    // Per-cell rasterization oracle at 10x pixel resolution.
    auto oracle = [&](const Box& b) {
        const Corners c = to_corners(b);
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < grid.count(); ++j) {
            const Corners cell = grid.cell_pixels(j);
            int inside = 0, total = 0;
            for (int y = 0; y < 80; ++y)
                for (int x = 0; x < 80; ++x) {
                    const double px = (cell.x1 + (x + 0.5) / 10.0) / 64.0, py = (cell.y1 + (y + 0.5) / 10.0) / 64.0;
                    inside += px >= c.x1 && px < c.x2 && py >= c.y1 && py < c.y2;
                    ++total;
                }
            if (2 * inside >= total) out.push_back(j);
        }
        return out;
    };
    const Box b{0.5, 0.5, 0.4, 0.4};
    CHECK(patch_coverage(grid, b) == oracle(b));

    SUBCASE("boundary inclusive") {
        // Covers exactly half of cells in column 0.
        const Box half = from_pixel_corners({0, 0, 4, 64}, 64, 64);
        const auto idx = patch_coverage(grid, half);
        CHECK(idx.size() == 8);
        const Box less = from_pixel_corners({0, 0, 3.9, 64}, 64, 64);
        CHECK(patch_coverage(grid, less).empty());
    }
    SUBCASE("monotone under enlargement") {
        std::mt19937_64 rng(8);
        for (int i = 0; i < 500; ++i) {
            const Box small = random_box(rng);
            const Box big{small.cx, small.cy, std::min(1.0, small.w * 1.3), std::min(1.0, small.h * 1.2)};
            const auto s = patch_coverage(grid, small), l = patch_coverage(grid, big);
            CHECK(std::includes(l.begin(), l.end(), s.begin(), s.end()));
        }
    }
    SUBCASE("iou rule is available") {
        // A box much larger than one cell has no cell with IoU >= 0.5.
        CHECK(patch_coverage(grid, {0.5, 0.5, 0.5, 0.5}, CoverageRule::kIoU).empty());
        CHECK(patch_coverage(grid, grid.cell_box(7), CoverageRule::kIoU) == std::vector<std::size_t>{7});
    }
}
