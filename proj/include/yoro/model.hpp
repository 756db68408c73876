#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/data.hpp"
#include "yoro/encoder.hpp"
#include "yoro/heads.hpp"
#include "yoro/losses.hpp"
#include "yoro/matching.hpp"
#include "yoro/multimodal_input.hpp"
#include "yoro/params.hpp"

namespace yoro {

struct Model {
    ModelConfig config;
    Vocabulary vocab;
    YoroParams params;

    // config.vocab_size is overwritten with vocab.size().
    static Model create(ModelConfig config, Vocabulary vocab, std::uint64_t seed);
};

struct ForwardOptions {
    bool retain_attention = false;
    std::mt19937_64* dropout_rng = nullptr;
};

struct ForwardResult {
    TextEmbedding text;
    EncoderOutput encoded;
    Predictions preds;
    AlignmentProjections proj;
};

ForwardResult forward(const YoroParams& params, const ModelConfig& config, std::span<const std::size_t> token_ids,
                      const Image& image, const ForwardOptions& options = {});

// Detached predicted boxes and flat class probabilities of a forward pass.
std::vector<Box> predicted_boxes(const Predictions& preds);

struct SampleLoss {
    LossBreakdown loss;
    Assignment assignment;
};

// Matches on detached predictions, then builds the combined objective.
SampleLoss sample_loss(const ForwardResult& fwd, const GroundTruth& truth, const ModelConfig& config);

}  // namespace yoro
