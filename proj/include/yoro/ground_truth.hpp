#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "yoro/geometry.hpp"

namespace yoro {

// Binary token x patch table; cell (i, j) is 1 when token i should align with
// patch j.
struct AlignmentTable {
    std::size_t tokens = 0;
    std::size_t patches = 0;
    std::vector<std::uint8_t> cells;

    AlignmentTable() = default;
    AlignmentTable(std::size_t m, std::size_t n) : tokens(m), patches(n), cells(m * n, 0) {}

    std::uint8_t at(std::size_t i, std::size_t j) const { return cells[i * patches + j]; }
    std::uint8_t& at(std::size_t i, std::size_t j) { return cells[i * patches + j]; }
    bool operator==(const AlignmentTable&) const = default;
};

// Targets for one image/phrase pair. Token indices are 0-based positions in
// the phrase (classification index = token index + 1; index 0 is no-text).
struct GroundTruth {
    std::vector<Box> boxes;
    std::vector<std::vector<std::size_t>> token_sets;  // per box, ascending
    std::size_t tokens = 0;                            // m
    AlignmentTable alignment;

    std::size_t objects() const { return boxes.size(); }
    // Per token, the boxes whose token set contains it.
    std::vector<std::vector<std::size_t>> object_sets() const;
    // Distribution over `classes` entries, uniform over the box's tokens.
    std::vector<double> class_target(std::size_t box, std::size_t classes) const;
    // Throws ContractError on empty or out-of-range token sets.
    void validate() const;
    bool operator==(const GroundTruth&) const = default;
};

// A(i, j) = 1 iff token i belongs to some box whose patch coverage holds j.
AlignmentTable build_alignment(const GroundTruth& gt, const PatchGrid& grid,
                               CoverageRule rule = CoverageRule::kCellFraction);

}  // namespace yoro
