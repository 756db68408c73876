#include "yoro/ground_truth.hpp"

#include <string>

#include "yoro/errors.hpp"

namespace yoro {

std::vector<std::vector<std::size_t>> GroundTruth::object_sets() const {
    std::vector<std::vector<std::size_t>> out(tokens);
    for (std::size_t k = 0; k < token_sets.size(); ++k)
        for (std::size_t t : token_sets[k]) out.at(t).push_back(k);
    return out;
}

std::vector<double> GroundTruth::class_target(std::size_t box, std::size_t classes) const {
    const auto& set = token_sets.at(box);
    std::vector<double> target(classes, 0.0);
    for (std::size_t t : set) {
        if (t + 1 >= classes) throw ContractError("class_target: token index exceeds class count");
        target[t + 1] = 1.0 / static_cast<double>(set.size());
    }
    return target;
}

void GroundTruth::validate() const {
    if (boxes.size() != token_sets.size())
        throw ContractError("ground truth: " + std::to_string(boxes.size()) + " boxes but " +
                            std::to_string(token_sets.size()) + " token sets");
    for (const auto& set : token_sets) {
        if (set.empty()) throw ContractError("ground truth: empty token set");
        for (std::size_t t : set)
            if (t >= tokens) throw ContractError("ground truth: token index " + std::to_string(t) + " >= m");
    }
}

AlignmentTable build_alignment(const GroundTruth& gt, const PatchGrid& grid, CoverageRule rule) {
    AlignmentTable a(gt.tokens, grid.count());
    for (std::size_t k = 0; k < gt.boxes.size(); ++k) {
        const auto cells = patch_coverage(grid, gt.boxes[k], rule);
        for (std::size_t t : gt.token_sets.at(k))
            for (std::size_t j : cells) a.at(t, j) = 1;
    }
    return a;
}

}  // namespace yoro
