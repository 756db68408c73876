#include "yoro/config.hpp"

#include <string>

#include "yoro/errors.hpp"

namespace yoro {

ModelConfig ModelConfig::paper_scale() {
    ModelConfig c;
    c.d = 768;
    c.depth = 12;
    c.heads = 12;
    c.image_height = 384;
    c.image_width = 384;
    c.patch = 32;
    c.d_align = 256;
    c.vocab_size = 30522;
    return c;
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("model config: " + what); };
    if (d == 0 || heads == 0 || d % heads != 0) fail("d must be a positive multiple of heads");
    if (m_max == 0) fail("m_max must be positive");
    if (vocab_size == 0) fail("vocab_size must be positive");
    if (det_tokens == 0) fail("det_tokens must be positive");
    if (ffn_mult == 0 || d_align == 0) fail("ffn_mult and d_align must be positive");
    if (!(tau > 0)) fail("tau must be positive");
    if (lambda_l1 < 0 || lambda_giou < 0) fail("loss weights must be nonnegative");
    if (dropout < 0 || dropout >= 1) fail("dropout must lie in [0, 1)");
    if (!(no_text_weight > 0)) fail("no_text_weight must be positive");
    grid().validate();
}

namespace {
const char* coverage_name(CoverageRule r) { return r == CoverageRule::kIoU ? "iou" : "cell_fraction"; }
}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d", c.d},
                       {"depth", c.depth},
                       {"heads", c.heads},
                       {"m_max", c.m_max},
                       {"vocab_size", c.vocab_size},
                       {"image_height", c.image_height},
                       {"image_width", c.image_width},
                       {"patch", c.patch},
                       {"det_tokens", c.det_tokens},
                       {"ffn_mult", c.ffn_mult},
                       {"d_align", c.d_align},
                       {"tau", c.tau},
                       {"lambda_l1", c.lambda_l1},
                       {"lambda_giou", c.lambda_giou},
                       {"dropout", c.dropout},
                       {"no_text_weight", c.no_text_weight},
                       {"sincos_positions", c.sincos_positions},
                       {"use_det_tokens", c.use_det_tokens},
                       {"fuse_text_cls", c.fuse_text_cls},
                       {"use_object_alignment", c.use_object_alignment},
                       {"use_patch_alignment", c.use_patch_alignment},
                       {"coverage", coverage_name(c.coverage)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("d", c.d);
    get("depth", c.depth);
    get("heads", c.heads);
    get("m_max", c.m_max);
    get("vocab_size", c.vocab_size);
    get("image_height", c.image_height);
    get("image_width", c.image_width);
    get("patch", c.patch);
    get("det_tokens", c.det_tokens);
    get("ffn_mult", c.ffn_mult);
    get("d_align", c.d_align);
    get("tau", c.tau);
    get("lambda_l1", c.lambda_l1);
    get("lambda_giou", c.lambda_giou);
    get("dropout", c.dropout);
    get("no_text_weight", c.no_text_weight);
    get("sincos_positions", c.sincos_positions);
    get("use_det_tokens", c.use_det_tokens);
    get("fuse_text_cls", c.fuse_text_cls);
    get("use_object_alignment", c.use_object_alignment);
    get("use_patch_alignment", c.use_patch_alignment);
    if (j.contains("coverage")) {
        const auto name = j.at("coverage").get<std::string>();
        if (name == "iou")
            c.coverage = CoverageRule::kIoU;
        else if (name == "cell_fraction")
            c.coverage = CoverageRule::kCellFraction;
        else
            throw ValidationError("model config: unknown coverage rule '" + name + "'");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},   {"batch_size", c.batch_size},
                       {"lr", c.lr},           {"weight_decay", c.weight_decay},
                       {"beta1", c.beta1},     {"beta2", c.beta2},
                       {"eps", c.eps},         {"warmup_fraction", c.warmup_fraction},
                       {"clip_norm", c.clip_norm}, {"seed", c.seed},
                       {"workers", c.workers}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("warmup_fraction", c.warmup_fraction);
    get("clip_norm", c.clip_norm);
    get("seed", c.seed);
    get("workers", c.workers);
}

}  // namespace yoro
