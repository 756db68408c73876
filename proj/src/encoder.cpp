#include "yoro/encoder.hpp"

#include <cmath>
#include <string>

#include "yoro/errors.hpp"

namespace yoro {

namespace {

Tensor dropout(const Tensor& x, double p, std::mt19937_64* rng) {
    if (rng == nullptr || p <= 0.0) return x;
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<double> mask(x.size());
    const double s = 1.0 / (1.0 - p);
    for (double& m : mask) m = keep(*rng) ? s : 0.0;
    return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor self_attention(const Tensor& x, const EncoderLayerParams& layer, const ModelConfig& config,
                      double* retained) {
    const std::size_t d = config.d, hw = config.head_width(), L = x.rows();
    const Tensor qkv = layer.qkv(x);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hw));
    std::vector<Tensor> heads;
    heads.reserve(config.heads);
    for (std::size_t h = 0; h < config.heads; ++h) {
        const Tensor q = slice_cols(qkv, h * hw, (h + 1) * hw);
        const Tensor k = slice_cols(qkv, d + h * hw, d + (h + 1) * hw);
        const Tensor v = slice_cols(qkv, 2 * d + h * hw, 2 * d + (h + 1) * hw);
        const Tensor weights = softmax(scale(matmul_nt(q, k), inv_sqrt), 1);
        if (retained != nullptr) {
            const auto w = weights.data();
            std::copy(w.begin(), w.end(), retained + h * L * L);
        }
        heads.push_back(matmul(weights, v));
    }
    return layer.attn_out(concat_cols(heads));
}

std::size_t resolve_layer(const EncoderOutput& out, int layer) {
    if (!out.has_attention) throw StateError("attention was not retained for this forward pass");
    const auto n = static_cast<int>(out.attention.layers);
    const int idx = layer < 0 ? n + layer : layer;
    if (idx < 0 || idx >= n) throw ContractError("attention layer " + std::to_string(layer) + " out of range");
    return static_cast<std::size_t>(idx);
}

std::size_t query_row(const EncoderOutput& out, std::size_t det_index) {
    if (out.segments.det_len == 0) {
        if (det_index != 0) throw ContractError("only query 0 exists without detection tokens");
        return out.segments.text_begin;
    }
    if (det_index >= out.segments.det_len)
        throw ContractError("detection index " + std::to_string(det_index) + " out of range");
    return out.segments.det_begin + det_index;
}

}  // namespace

EncoderOutput encode(const AssembledInput& input, const std::vector<EncoderLayerParams>& layers,
                     const ModelConfig& config, const EncodeOptions& options) {
    const Tensor& x0 = input.sequence;
    if (x0.cols() != config.d) throw DimensionError("encode: sequence width differs from d");
    const std::size_t L = x0.rows();
    EncoderOutput out;
    out.segments = input.segments;
    if (options.retain_attention) {
        out.has_attention = true;
        out.attention.layers = layers.size();
        out.attention.heads = config.heads;
        out.attention.length = L;
        out.attention.weights.assign(layers.size() * config.heads * L * L, 0.0);
    }
    Tensor x = x0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& layer = layers[i];
        double* retained = options.retain_attention ? out.attention.weights.data() + i * config.heads * L * L
                                                    : nullptr;
        const Tensor attn = self_attention(layer.attn_norm(x), layer, config, retained);
        x = add(x, dropout(attn, config.dropout, options.dropout_rng));
        const Tensor ffn = layer.ffn_out(gelu(layer.ffn_in(layer.ffn_norm(x))));
        x = add(x, dropout(ffn, config.dropout, options.dropout_rng));
    }
    auto parts = split(x, input.segments);
    out.text = std::move(parts.text);
    out.image = std::move(parts.image);
    out.det = std::move(parts.det);
    return out;
}

std::vector<double> attention_map_head(const EncoderOutput& out, int layer, std::size_t det_index,
                                       std::size_t head) {
    const std::size_t l = resolve_layer(out, layer);
    if (head >= out.attention.heads) throw ContractError("attention head out of range");
    const std::size_t q = query_row(out, det_index);
    // Skip the image cls position; patches follow it.
    const std::size_t first = out.segments.image_begin + 1;
    std::vector<double> heat(out.segments.image_len - 1);
    for (std::size_t j = 0; j < heat.size(); ++j) heat[j] = out.attention.at(l, head, q, first + j);
    return heat;
}

std::vector<double> attention_map(const EncoderOutput& out, int layer, std::size_t det_index) {
    resolve_layer(out, layer);
    std::vector<double> heat;
    for (std::size_t h = 0; h < out.attention.heads; ++h) {
        const auto one = attention_map_head(out, layer, det_index, h);
        if (heat.empty()) heat.assign(one.size(), 0.0);
        for (std::size_t j = 0; j < one.size(); ++j) heat[j] += one[j];
    }
    for (double& v : heat) v /= static_cast<double>(out.attention.heads);
    return heat;
}

}  // namespace yoro
