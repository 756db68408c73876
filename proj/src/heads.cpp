#include "yoro/heads.hpp"

#include "yoro/errors.hpp"

namespace yoro {

namespace {

Tensor mlp(const Linear& hidden, const Linear& out, const Tensor& x) { return out(gelu(hidden(x))); }

Tensor detection_features(const EncoderOutput& out, const ModelConfig& config) {
    const Tensor text_cls = slice_rows(out.text, 0, 1);
    if (!config.use_det_tokens || !out.det.defined()) return text_cls;
    return fuse_cls(out.det, text_cls, config.fuse_text_cls);
}

}  // namespace

Tensor fuse_cls(const Tensor& det, const Tensor& text_cls, bool enabled) {
    if (text_cls.size() != det.cols()) throw DimensionError("fuse_cls: width mismatch");
    if (!enabled) return det;
    return add_row(det, text_cls);
}

Predictions predict(const EncoderOutput& out, const HeadParams& heads, const ModelConfig& config) {
    const Tensor features = detection_features(out, config);
    Predictions p;
    p.boxes = sigmoid(mlp(heads.box_hidden, heads.box_out, features));
    p.class_logits = mlp(heads.cls_hidden, heads.cls_out, features);
    p.class_probs = softmax(p.class_logits, 1);
    return p;
}

AlignmentProjections project_for_alignment(const EncoderOutput& out, const HeadParams& heads,
                                           const ModelConfig& config) {
    if (out.text.rows() < 2) throw ContractError("project_for_alignment: no text tokens");
    const Tensor tokens = slice_rows(out.text, 1, out.text.rows());
    const Tensor patches = slice_rows(out.image, 1, out.image.rows());
    const Tensor objects =
        (config.use_det_tokens && out.det.defined()) ? out.det : slice_rows(out.text, 0, 1);
    AlignmentProjections a;
    a.text = l2_normalize_rows(heads.align_text(tokens));
    a.det = l2_normalize_rows(heads.align_det(objects));
    a.patch_text = l2_normalize_rows(heads.patch_text(tokens));
    a.patch_image = l2_normalize_rows(heads.patch_image(patches));
    return a;
}

}  // namespace yoro
