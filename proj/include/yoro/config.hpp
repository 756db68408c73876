#pragma once

#include <cstddef>
#include <cstdint>

#include "json.hpp"
#include "yoro/geometry.hpp"

namespace yoro {

// Architecture and loss hyperparameters. Defaults are the desk-scale toy
// model; ModelConfig::paper_scale() gives the full-size encoder.
struct ModelConfig {
    std::size_t d = 64;             // embedding width
    std::size_t depth = 4;          // encoder layers
    std::size_t heads = 4;
    std::size_t m_max = 40;         // max text tokens
    std::size_t vocab_size = 16;
    std::size_t image_height = 64;
    std::size_t image_width = 64;
    std::size_t patch = 8;
    std::size_t det_tokens = 5;
    std::size_t ffn_mult = 4;
    std::size_t d_align = 64;
    double tau = 0.07;
    double lambda_l1 = 2.0;
    double lambda_giou = 5.0;
    double dropout = 0.0;
    // Classification weight of rows whose target is the no-text class,
    // relative to matched rows.
    double no_text_weight = 0.1;
    // Start the vision position table from a 2D sine-cosine pattern instead
    // of small random values; it is trained either way.
    bool sincos_positions = true;

    // Architecture ablations.
    bool use_det_tokens = true;  // false: boxes regressed from the text cls output
    bool fuse_text_cls = true;   // false: detection outputs are not offset by the text cls output

    // Loss ablations; box regression and classification are always on.
    bool use_object_alignment = true;
    bool use_patch_alignment = true;

    CoverageRule coverage = CoverageRule::kCellFraction;

    static ModelConfig paper_scale();

    std::size_t patches() const { return (image_height / patch) * (image_width / patch); }
    std::size_t patch_dim() const { return 3 * patch * patch; }
    std::size_t head_width() const { return d / heads; }
    // Rows emitted by the prediction heads.
    std::size_t predictions() const { return use_det_tokens ? det_tokens : 1; }
    std::size_t classes() const { return m_max + 1; }
    PatchGrid grid() const { return {image_height, image_width, patch}; }

    // Throws ValidationError on inconsistent extents.
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double warmup_fraction = 0.1;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace yoro
