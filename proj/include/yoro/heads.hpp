#pragma once

#include "yoro/config.hpp"
#include "yoro/encoder.hpp"
#include "yoro/params.hpp"
#include "yoro/tensor.hpp"

namespace yoro {

// Adds the text cls output to every detection row when `enabled`.
Tensor fuse_cls(const Tensor& det, const Tensor& text_cls, bool enabled = true);

struct Predictions {
    Tensor boxes;         // [q x 4] (cx, cy, w, h) in (0, 1)
    Tensor class_logits;  // [q x (m_max+1)]; index 0 is the no-text class
    Tensor class_probs;   // softmax of class_logits over each row
};

// Box and class heads over the fused detection features. Without detection
// tokens a single prediction is read from the text cls output.
Predictions predict(const EncoderOutput& out, const HeadParams& heads, const ModelConfig& config);

// Unit-norm embeddings for the alignment losses. Text rows exclude the cls
// position; image rows exclude the image cls position.
struct AlignmentProjections {
    Tensor text;         // [m x d_align], object alignment
    Tensor det;          // [q x d_align], from raw (unfused) detection outputs
    Tensor patch_text;   // [m x d_align], patch alignment
    Tensor patch_image;  // [n x d_align]
};

AlignmentProjections project_for_alignment(const EncoderOutput& out, const HeadParams& heads,
                                           const ModelConfig& config);

}  // namespace yoro
