#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/tensor.hpp"

namespace yoro {

// y = x W + b with W stored [in x out].
struct Linear {
    Tensor weight;
    Tensor bias;

    Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    Tensor operator()(const Tensor& x) const;
};

// Text branch. Row t of `table` is column t of the d x v projection, so a
// row gather equals projecting the one-hot token.
struct LanguageEmbedding {
    Tensor table;  // [v x d]
    Tensor cls;    // [d]
    Tensor pos;    // [(m_max+1) x d]
    Tensor type;   // [d], broadcast over the segment
};

struct VisionEmbedding {
    Tensor projection;  // [3s^2 x d]
    Tensor cls;         // [d]
    Tensor pos;         // [(n+1) x d]
    Tensor type;        // [d]
};

struct EncoderLayerParams {
    LayerNormParams attn_norm;
    Linear qkv;  // d -> 3d, heads packed along columns
    Linear attn_out;
    LayerNormParams ffn_norm;
    Linear ffn_in;
    Linear ffn_out;
};

struct HeadParams {
    Linear box_hidden, box_out;  // d -> d -> 4
    Linear cls_hidden, cls_out;  // d -> d -> m_max+1
    Linear align_text, align_det;        // object alignment, d -> d_align
    Linear patch_text, patch_image;      // patch alignment, d -> d_align
};

struct YoroParams {
    LanguageEmbedding language;
    VisionEmbedding vision;
    Tensor det_tokens;  // [q x d]; undefined when the detection branch is ablated
    std::vector<EncoderLayerParams> layers;
    HeadParams heads;

    // Fresh parameters. Linear weights are Xavier-uniform with zero bias;
    // embeddings, cls tokens and detection tokens are Normal(0, 0.02).
    static YoroParams init(const ModelConfig& config, std::uint64_t seed);

    // Stable name -> tensor listing; order is the serialization order.
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;

    // Same values, independent gradient buffers.
    YoroParams alias() const;
    // Independent copy of the values.
    YoroParams clone() const;
    std::size_t scalar_count() const;
    void zero_grad();
};

}  // namespace yoro
