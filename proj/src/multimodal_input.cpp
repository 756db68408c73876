#include "yoro/multimodal_input.hpp"

#include <string>

#include "yoro/errors.hpp"

namespace yoro {

namespace {

// Adds the leading `rows` rows of the positional table and the broadcast type
// vector.
Tensor add_position_and_type(const Tensor& x, const Tensor& pos, const Tensor& type) {
    const Tensor p = x.rows() == pos.rows() ? pos : slice_rows(pos, 0, x.rows());
    return add_row(add(x, p), type);
}

}  // namespace

TextEmbedding embed_text(std::span<const std::size_t> token_ids, const LanguageEmbedding& lang,
                         const ModelConfig& config) {
    if (token_ids.empty()) throw InputError("embed_text: phrase has no tokens");
    TextEmbedding out;
    out.truncated = token_ids.size() > config.m_max;
    out.tokens = out.truncated ? config.m_max : token_ids.size();
    const auto ids = token_ids.first(out.tokens);
    for (std::size_t id : ids)
        if (id >= config.vocab_size)
            throw DimensionError("embed_text: token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(config.vocab_size));
    const Tensor words = gather_rows(lang.table, ids);
    const Tensor cls = reshape(lang.cls, {1, config.d});
    const Tensor parts[] = {cls, words};
    out.value = add_position_and_type(concat_rows(parts), lang.pos, lang.type);
    return out;
}

Tensor patchify(const Image& image, std::size_t patch) {
    if (patch == 0 || image.height % patch != 0 || image.width % patch != 0)
        throw DimensionError("patchify: patch side " + std::to_string(patch) + " does not tile " +
                             std::to_string(image.height) + "x" + std::to_string(image.width));
    const std::size_t gr = image.height / patch, gc = image.width / patch;
    const std::size_t dim = 3 * patch * patch;
    std::vector<double> out(gr * gc * dim);
    for (std::size_t r = 0; r < gr; ++r)
        for (std::size_t c = 0; c < gc; ++c) {
            double* dst = out.data() + (r * gc + c) * dim;
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x)
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        *dst++ = (image.at(r * patch + y, c * patch + x, ch) - 0.5) / 0.5;
        }
    return Tensor::from({gr * gc, dim}, std::move(out));
}

Tensor embed_image(const Image& image, const VisionEmbedding& vision, const ModelConfig& config) {
    if (image.height != config.image_height || image.width != config.image_width)
        throw DimensionError("embed_image: image " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + " does not match configured " +
                             std::to_string(config.image_height) + "x" + std::to_string(config.image_width));
    if (image.pixels.size() != image.height * image.width * 3)
        throw DimensionError("embed_image: pixel buffer size mismatch");
    const Tensor patches = matmul(patchify(image, config.patch), vision.projection);
    const Tensor cls = reshape(vision.cls, {1, config.d});
    const Tensor parts[] = {cls, patches};
    return add_position_and_type(concat_rows(parts), vision.pos, vision.type);
}

AssembledInput assemble(const Tensor& text, const Tensor& image, const Tensor& det) {
    if (text.cols() != image.cols() || (det.defined() && det.cols() != text.cols()))
        throw DimensionError("assemble: segment widths differ");
    AssembledInput out;
    auto& s = out.segments;
    s.text_begin = 0;
    s.text_len = text.rows();
    s.image_begin = s.text_len;
    s.image_len = image.rows();
    s.det_begin = s.image_begin + s.image_len;
    s.det_len = det.defined() ? det.rows() : 0;
    if (det.defined()) {
        const Tensor parts[] = {text, image, det};
        out.sequence = concat_rows(parts);
    } else {
        const Tensor parts[] = {text, image};
        out.sequence = concat_rows(parts);
    }
    return out;
}

SplitSequence split(const Tensor& sequence, const Segments& s) {
    if (sequence.rows() != s.total()) throw DimensionError("split: sequence length does not match segments");
    SplitSequence out;
    out.text = slice_rows(sequence, s.text_begin, s.text_begin + s.text_len);
    out.image = slice_rows(sequence, s.image_begin, s.image_begin + s.image_len);
    if (s.det_len > 0) out.det = slice_rows(sequence, s.det_begin, s.det_begin + s.det_len);
    return out;
}

}  // namespace yoro
