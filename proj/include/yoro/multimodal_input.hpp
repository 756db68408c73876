#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/image.hpp"
#include "yoro/params.hpp"
#include "yoro/tensor.hpp"

namespace yoro {

struct TextEmbedding {
    Tensor value;  // [(m+1) x d], cls first
    std::size_t tokens = 0;  // m after truncation
    bool truncated = false;
};

// Row 0 = cls + pos_0 + type; row i = table[t_i] + pos_i + type. Phrases
// longer than m_max keep their first m_max tokens and set `truncated`.
TextEmbedding embed_text(std::span<const std::size_t> token_ids, const LanguageEmbedding& lang,
                         const ModelConfig& config);

// Patch matrix [n x 3s^2]; patch j is the j-th s x s cell in row-major order,
// flattened row-major with interleaved channels. Pixels are standardized with
// mean 0.5 and std 0.5.
Tensor patchify(const Image& image, std::size_t patch);

// Throws DimensionError when the image extents differ from the config.
Tensor embed_image(const Image& image, const VisionEmbedding& vision, const ModelConfig& config);

// Where each modality lives in the joint sequence.
struct Segments {
    std::size_t text_begin = 0, text_len = 0;
    std::size_t image_begin = 0, image_len = 0;
    std::size_t det_begin = 0, det_len = 0;  // det_len == 0 without detection tokens

    std::size_t total() const { return text_len + image_len + det_len; }
};

struct AssembledInput {
    Tensor sequence;  // [(m+n+q+2) x d]
    Segments segments;
};

// Concatenates text, image and (optional, may be undefined) detection rows.
AssembledInput assemble(const Tensor& text, const Tensor& image, const Tensor& det);

struct SplitSequence {
    Tensor text, image, det;
};

SplitSequence split(const Tensor& sequence, const Segments& segments);

}  // namespace yoro
