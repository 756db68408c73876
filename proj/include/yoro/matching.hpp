#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/geometry.hpp"
#include "yoro/ground_truth.hpp"

namespace yoro {

// q x g matrix; row i is a detection token, column k a ground-truth box.
struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    CostMatrix() = default;
    CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double at(std::size_t i, std::size_t k) const { return values[i * cols + k]; }
    double& at(std::size_t i, std::size_t k) { return values[i * cols + k]; }
};

struct Assignment {
    // (detection index, ground-truth index), ordered by ground-truth index.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double total_cost = 0.0;

    // Detection index matched to ground truth k.
    std::size_t detection_for(std::size_t k) const;
};

// Minimum-cost injective assignment of every column to a distinct row.
// Among optimal assignments the one giving the lowest detection indices their
// lowest ground-truth indices first is returned.
// Throws ContractError when cols > rows or cols == 0, NumericError on
// non-finite entries.
Assignment hungarian(const CostMatrix& cost);

// Box-regression term of the matching cost: λ1·L1 + λ2·(1 − GIoU).
double box_cost(const Box& pred, const Box& gt, double lambda_l1, double lambda_giou);

// −Σ target·log(max(pred, 1e-12)).
double soft_cross_entropy(std::span<const double> pred, std::span<const double> target);

// cost(i, k) = λ1·L1(box_i, gt_k) + λ2·(1 − giou) + sce(P_i, P_gt,k), from
// detached prediction values. class_probs is q rows of m_max+1 entries.
CostMatrix build_cost(std::span<const Box> pred_boxes, std::span<const double> class_probs,
                      const GroundTruth& gt, const ModelConfig& config);

}  // namespace yoro
