#include "yoro/losses.hpp"

#include <cmath>
#include <string>

#include "yoro/errors.hpp"

namespace yoro {

namespace {

Tensor constant(double v) { return Tensor::scalar(v); }

// Σ_{i,j} w_ij · x_ij for a constant weight matrix.
Tensor weighted_sum(const Tensor& x, std::vector<double> weights) {
    return sum(mul(x, Tensor::from(x.shape(), std::move(weights))));
}

}  // namespace

Tensor bbox_loss(const Tensor& pred_row, const Box& gt, double lambda_l1, double lambda_giou) {
    if (pred_row.size() != 4) throw DimensionError("bbox_loss: prediction must have 4 coordinates");
    const Tensor row = reshape(pred_row, {1, 4});
    const Tensor target = Tensor::from({1, 4}, {gt.cx, gt.cy, gt.w, gt.h});
    const Tensor l1 = sum(abs(sub(row, target)));

    const Tensor cx = element(row, 0, 0), cy = element(row, 0, 1);
    const Tensor hw = scale(element(row, 0, 2), 0.5), hh = scale(element(row, 0, 3), 0.5);
    const Tensor px1 = clamp(sub(cx, hw), 0, 1), px2 = clamp(add(cx, hw), 0, 1);
    const Tensor py1 = clamp(sub(cy, hh), 0, 1), py2 = clamp(add(cy, hh), 0, 1);
    const Corners g = to_corners(gt);
    const Tensor gx1 = constant(g.x1), gx2 = constant(g.x2), gy1 = constant(g.y1), gy2 = constant(g.y2);
    const Tensor zero = constant(0.0);

    const Tensor iw = maximum(sub(minimum(px2, gx2), maximum(px1, gx1)), zero);
    const Tensor ih = maximum(sub(minimum(py2, gy2), maximum(py1, gy1)), zero);
    const Tensor inter = mul(iw, ih);
    const Tensor pred_area = mul(sub(px2, px1), sub(py2, py1));
    const Tensor uni = sub(add(pred_area, constant((g.x2 - g.x1) * (g.y2 - g.y1))), inter);

    Tensor giou_term = zero;
    if (uni.item() > 0.0) {
        const Tensor hull = mul(sub(maximum(px2, gx2), minimum(px1, gx1)), sub(maximum(py2, gy2), minimum(py1, gy1)));
        giou_term = sub(div(inter, uni), div(sub(hull, uni), hull));
    }
    return add(scale(l1, lambda_l1), scale(sub(constant(1.0), giou_term), lambda_giou));
}

ClassificationLoss cls_loss(const Tensor& probs, const std::vector<double>& targets,
                            const std::vector<double>& row_weights) {
    if (targets.size() != probs.size()) throw DimensionError("cls_loss: target shape mismatch");
    const std::size_t rows = probs.rows(), K = probs.cols();
    if (!row_weights.empty() && row_weights.size() != rows) throw DimensionError("cls_loss: one weight per row");
    ClassificationLoss out;
    const auto p = probs.data();
    for (std::size_t i = 0; i < p.size(); ++i)
        if (targets[i] > 0.0 && p[i] < kProbabilityFloor) ++out.clamped;
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) total += row_weights.empty() ? 1.0 : row_weights[r];
    if (!(total > 0)) throw ContractError("cls_loss: row weights must have a positive sum");
    std::vector<double> w(targets);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < K; ++j) w[r * K + j] *= (row_weights.empty() ? 1.0 : row_weights[r]) / total;
    out.value = scale(weighted_sum(log(probs, kProbabilityFloor), std::move(w)), -1.0);
    return out;
}

Tensor ota_loss(const Tensor& det_rows, const Tensor& text,
                const std::vector<std::vector<std::size_t>>& token_sets, double tau) {
    const std::size_t g = det_rows.rows(), m = text.rows();
    if (token_sets.size() != g) throw ContractError("ota_loss: one token set per matched object required");
    std::vector<double> w(g * m, 0.0);
    for (std::size_t k = 0; k < g; ++k) {
        if (token_sets[k].empty()) throw ContractError("ota_loss: empty token set");
        for (std::size_t t : token_sets[k]) {
            if (t >= m) throw ContractError("ota_loss: token index out of range");
            w[k * m + t] = 1.0 / static_cast<double>(token_sets[k].size());
        }
    }
    const Tensor logp = log_softmax(scale(matmul_nt(det_rows, text), 1.0 / tau), 1);
    return scale(weighted_sum(logp, std::move(w)), -1.0);
}

Tensor toa_loss(const Tensor& text, const Tensor& det_rows,
                const std::vector<std::vector<std::size_t>>& object_sets, double tau) {
    const std::size_t m = text.rows(), g = det_rows.rows();
    if (object_sets.size() != m) throw ContractError("toa_loss: one object set per token required");
    std::vector<double> w(m * g, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k : object_sets[i]) {
            if (k >= g) throw ContractError("toa_loss: object index out of range");
            w[i * g + k] = 1.0 / static_cast<double>(object_sets[i].size());
            any = true;
        }
    if (!any) return constant(0.0);
    const Tensor logp = log_softmax(scale(matmul_nt(text, det_rows), 1.0 / tau), 1);
    return scale(weighted_sum(logp, std::move(w)), -1.0);
}

NormalizedAlignment normalize_alignment(const AlignmentTable& a) {
    const std::size_t m = a.tokens, n = a.patches;
    NormalizedAlignment out;
    out.tokens = m;
    out.patches = n;
    out.per_token.assign(m * n, 0.0);
    out.per_patch.assign(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) count += a.at(i, j);
        if (count == 0) continue;
        out.aligned_tokens.push_back(i);
        for (std::size_t j = 0; j < n; ++j)
            if (a.at(i, j)) out.per_token[i * n + j] = 1.0 / static_cast<double>(count);
    }
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t count = 0;
        for (std::size_t i = 0; i < m; ++i) count += a.at(i, j);
        if (count == 0) continue;
        out.aligned_patches.push_back(j);
        for (std::size_t i = 0; i < m; ++i)
            if (a.at(i, j)) out.per_patch[i * n + j] = 1.0 / static_cast<double>(count);
    }
    return out;
}

namespace {

// Mean over `support` slices of KL(target || softmax), given log-probabilities.
Tensor mean_kl(const Tensor& logp, const std::vector<double>& target, std::size_t support) {
    double entropy_term = 0.0;  // Σ t ln t, with 0 ln 0 = 0
    for (double t : target)
        if (t > 0.0) entropy_term += t * std::log(t);
    const Tensor cross = weighted_sum(logp, target);
    return scale(sub(constant(entropy_term), cross), 1.0 / static_cast<double>(support));
}

}  // namespace

PatchAlignmentLoss pa_loss(const Tensor& text, const Tensor& patches, const NormalizedAlignment& a,
                           double tau) {
    if (text.rows() != a.tokens || patches.rows() != a.patches)
        throw DimensionError("pa_loss: embeddings do not match the alignment table");
    PatchAlignmentLoss out;
    out.token_to_patch = constant(0.0);
    out.patch_to_token = constant(0.0);
    if (!a.aligned_tokens.empty()) {
        const Tensor logits = scale(matmul_nt(text, patches), 1.0 / tau);
        out.token_to_patch = mean_kl(log_softmax(logits, 1), a.per_token, a.aligned_tokens.size());
        out.patch_to_token = mean_kl(log_softmax(logits, 0), a.per_patch, a.aligned_patches.size());
    }
    out.combined = scale(add(out.token_to_patch, out.patch_to_token), 0.5);
    return out;
}

LossValues& LossValues::operator+=(const LossValues& o) {
    bbox += o.bbox;
    cls += o.cls;
    ota += o.ota;
    toa += o.toa;
    oa += o.oa;
    tpa += o.tpa;
    pta += o.pta;
    pa += o.pa;
    total += o.total;
    return *this;
}

LossValues LossValues::scaled(double f) const {
    return {bbox * f, cls * f, ota * f, toa * f, oa * f, tpa * f, pta * f, pa * f, total * f};
}

LossValues LossBreakdown::values() const {
    return {bbox.item(), cls.item(), ota.item(), toa.item(), oa.item(),
            tpa.item(),  pta.item(), pa.item(),  total.item()};
}

LossBreakdown total_loss(const Predictions& preds, const AlignmentProjections& proj, const GroundTruth& gt,
                         const Assignment& assignment, const ModelConfig& config) {
    gt.validate();
    const std::size_t q = preds.boxes.rows(), K = config.classes(), g = gt.objects();
    if (assignment.pairs.size() != g) throw ContractError("total_loss: assignment does not cover every box");
    LossBreakdown out;

    // Box regression over matched pairs.
    std::vector<std::size_t> matched(g);
    out.bbox = constant(0.0);
    for (const auto& [i, k] : assignment.pairs) {
        matched[k] = i;
        out.bbox = add(out.bbox, bbox_loss(slice_rows(preds.boxes, i, i + 1), gt.boxes[k], config.lambda_l1,
                                           config.lambda_giou));
    }

    // Classification over every prediction.
    std::vector<double> targets(q * K, 0.0), weights(q, config.no_text_weight);
    for (std::size_t i = 0; i < q; ++i) targets[i * K] = 1.0;
    for (const auto& [i, k] : assignment.pairs) {
        const auto t = gt.class_target(k, K);
        std::copy(t.begin(), t.end(), targets.begin() + static_cast<std::ptrdiff_t>(i * K));
        weights[i] = 1.0;
    }
    auto cls = cls_loss(preds.class_probs, targets, weights);
    out.cls = cls.value;
    out.clamped = cls.clamped;

    out.ota = out.toa = out.oa = constant(0.0);
    if (config.use_object_alignment) {
        const Tensor det_rows = gather_rows(proj.det, matched);
        out.ota = ota_loss(det_rows, proj.text, gt.token_sets, config.tau);
        out.toa = toa_loss(proj.text, det_rows, gt.object_sets(), config.tau);
        out.oa = scale(add(out.ota, out.toa), 0.5);
    }

    out.tpa = out.pta = out.pa = constant(0.0);
    if (config.use_patch_alignment) {
        const auto pa = pa_loss(proj.patch_text, proj.patch_image, normalize_alignment(gt.alignment), config.tau);
        out.tpa = pa.token_to_patch;
        out.pta = pa.patch_to_token;
        out.pa = pa.combined;
    }

    out.total = add(add(add(out.bbox, out.cls), out.oa), out.pa);
    return out;
}

}  // namespace yoro
