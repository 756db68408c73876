#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/multimodal_input.hpp"
#include "yoro/params.hpp"
#include "yoro/tensor.hpp"

namespace yoro {

// Row-stochastic attention weights, [layer][head][query][key].
struct AttentionMaps {
    std::size_t layers = 0, heads = 0, length = 0;
    std::vector<double> weights;

    double at(std::size_t layer, std::size_t head, std::size_t query, std::size_t key) const {
        return weights[((layer * heads + head) * length + query) * length + key];
    }
};

struct EncoderOutput {
    Tensor text;   // [(m+1) x d], cls first
    Tensor image;  // [(n+1) x d], cls first
    Tensor det;    // [q x d]; undefined without detection tokens
    Segments segments;
    bool has_attention = false;
    AttentionMaps attention;
};

struct EncodeOptions {
    bool retain_attention = false;
    // Dropout is active only when a generator is supplied and config.dropout > 0.
    std::mt19937_64* dropout_rng = nullptr;
};

// Pre-norm transformer: x' = x + MSA(LN(x)); x = x' + FFN(LN(x')), repeated
// for every layer, with full attention over all modalities.
EncoderOutput encode(const AssembledInput& input, const std::vector<EncoderLayerParams>& layers,
                     const ModelConfig& config, const EncodeOptions& options = {});

// Head-averaged attention from a detection token to the n image patches of the
// given layer (negative counts from the end). Without detection tokens, index 0
// addresses the text cls position. Throws StateError if attention was not
// retained.
std::vector<double> attention_map(const EncoderOutput& out, int layer, std::size_t det_index);
std::vector<double> attention_map_head(const EncoderOutput& out, int layer, std::size_t det_index,
                                       std::size_t head);

}  // namespace yoro
