#include "yoro/model.hpp"

#include "yoro/errors.hpp"

namespace yoro {

Model Model::create(ModelConfig config, Vocabulary vocab, std::uint64_t seed) {
    config.vocab_size = vocab.size();
    config.validate();
    Model m{config, std::move(vocab), YoroParams::init(config, seed)};
    return m;
}

ForwardResult forward(const YoroParams& params, const ModelConfig& config, std::span<const std::size_t> token_ids,
                      const Image& image, const ForwardOptions& options) {
    ForwardResult r;
    r.text = embed_text(token_ids, params.language, config);
    const Tensor vision = embed_image(image, params.vision, config);
    const AssembledInput input =
        assemble(r.text.value, vision, config.use_det_tokens ? params.det_tokens : Tensor());
    r.encoded = encode(input, params.layers, config, {options.retain_attention, options.dropout_rng});
    r.preds = predict(r.encoded, params.heads, config);
    r.proj = project_for_alignment(r.encoded, params.heads, config);
    return r;
}

std::vector<Box> predicted_boxes(const Predictions& preds) {
    const auto v = preds.boxes.data();
    std::vector<Box> out(preds.boxes.rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[i * 4], v[i * 4 + 1], v[i * 4 + 2], v[i * 4 + 3]};
    return out;
}

SampleLoss sample_loss(const ForwardResult& fwd, const GroundTruth& truth, const ModelConfig& config) {
    if (truth.tokens != fwd.text.tokens)
        throw ContractError("sample_loss: ground truth covers " + std::to_string(truth.tokens) + " tokens, input has " +
                            std::to_string(fwd.text.tokens));
    const auto boxes = predicted_boxes(fwd.preds);
    const auto cost = build_cost(boxes, fwd.preds.class_probs.data(), truth, config);
    SampleLoss out;
    out.assignment = hungarian(cost);
    out.loss = total_loss(fwd.preds, fwd.proj, truth, out.assignment, config);
    return out;
}

}  // namespace yoro
