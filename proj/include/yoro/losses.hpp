#pragma once

#include <cstddef>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/ground_truth.hpp"
#include "yoro/heads.hpp"
#include "yoro/matching.hpp"
#include "yoro/tensor.hpp"

namespace yoro {

// Floor applied to probabilities inside logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

// λ1·Σ|pred − gt| + λ2·(1 − GIoU(pred, gt)) for one predicted row [1 x 4].
Tensor bbox_loss(const Tensor& pred_row, const Box& gt, double lambda_l1, double lambda_giou);

struct ClassificationLoss {
    Tensor value;
    // Supported target entries whose predicted probability hit the floor.
    std::size_t clamped = 0;
};

// Weighted mean over rows of −Σ_j target(j)·log P(j): Σ_r w_r·CE_r / Σ_r w_r.
// `targets` is row-major with the same shape as `probs`; empty `row_weights`
// means a plain mean.
ClassificationLoss cls_loss(const Tensor& probs, const std::vector<double>& targets,
                            const std::vector<double>& row_weights = {});

// Object-to-text contrastive loss. `det_rows` holds the matched detection
// embeddings in ground-truth order; `text` holds all m token embeddings.
// Throws ContractError on an empty token set.
Tensor ota_loss(const Tensor& det_rows, const Tensor& text,
                const std::vector<std::vector<std::size_t>>& token_sets, double tau);

// Text-to-object counterpart; the softmax runs over the g matched objects and
// tokens with no object are skipped.
Tensor toa_loss(const Tensor& text, const Tensor& det_rows,
                const std::vector<std::vector<std::size_t>>& object_sets, double tau);

// Row- and column-normalized views of an alignment table.
struct NormalizedAlignment {
    std::size_t tokens = 0, patches = 0;
    std::vector<double> per_token;  // m x n, row i sums to 1 for aligned tokens
    std::vector<double> per_patch;  // m x n, column j sums to 1 for aligned patches
    std::vector<std::size_t> aligned_tokens;
    std::vector<std::size_t> aligned_patches;
};

NormalizedAlignment normalize_alignment(const AlignmentTable& a);

struct PatchAlignmentLoss {
    Tensor token_to_patch;  // mean over aligned tokens of KL(A_tok_i || p_i)
    Tensor patch_to_token;  // mean over aligned patches of KL(A_pat_j || p_j)
    Tensor combined;        // average of the two
};

// p_i = softmax_j(text_i · patch_j / τ) for the token direction and the
// column-wise softmax over tokens for the patch direction. Terms with no
// aligned entries are zero.
PatchAlignmentLoss pa_loss(const Tensor& text, const Tensor& patches, const NormalizedAlignment& a,
                           double tau);

struct LossValues {
    double bbox = 0, cls = 0, ota = 0, toa = 0, oa = 0, tpa = 0, pta = 0, pa = 0, total = 0;

    LossValues& operator+=(const LossValues& o);
    LossValues scaled(double f) const;
};

struct LossBreakdown {
    Tensor bbox, cls, ota, toa, oa, tpa, pta, pa, total;
    std::size_t clamped = 0;

    LossValues values() const;
};

// Combined objective for one sample. Box and alignment terms use matched pairs
// only; classification covers every prediction, with unmatched rows targeting
// the no-text class. Disabled terms are constant zero.
LossBreakdown total_loss(const Predictions& preds, const AlignmentProjections& proj,
                         const GroundTruth& gt, const Assignment& assignment, const ModelConfig& config);

}  // namespace yoro
