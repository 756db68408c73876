#include "yoro/params.hpp"

#include <cmath>
#include <random>

namespace yoro {

Tensor Linear::operator()(const Tensor& x) const { return add_row(matmul(x, weight), bias); }

Tensor LayerNormParams::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

namespace {

// Rows 1..n (row 0 belongs to the image cls token) get the usual 2D
// sine-cosine code: the first half of the width encodes the row, the second
// half the column, each as sin/cos pairs over geometric frequencies. Base
// 100 rather than 1e4 because the grids are small.
void fill_sincos(Tensor& pos, std::size_t rows, std::size_t cols) {
    const std::size_t d = pos.cols(), quarter = d / 4;
    if (quarter == 0) return;
    auto v = pos.mutable_data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            double* row = &v[(1 + r * cols + c) * d];
            for (std::size_t k = 0; k < quarter; ++k) {
                const double freq = std::pow(100.0, -static_cast<double>(k) / static_cast<double>(quarter));
                row[k] = std::sin(static_cast<double>(r) * freq);
                row[quarter + k] = std::cos(static_cast<double>(r) * freq);
                row[2 * quarter + k] = std::sin(static_cast<double>(c) * freq);
                row[3 * quarter + k] = std::cos(static_cast<double>(c) * freq);
            }
        }
}

class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    Tensor normal(Shape shape, double std) {
        std::normal_distribution<double> dist(0.0, std);
        std::vector<double> v(shape_size(shape));
        for (double& x : v) x = dist(rng_);
        return Tensor::from(std::move(shape), std::move(v), true);
    }

    Linear linear(std::size_t in, std::size_t out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        std::vector<double> v(in * out);
        for (double& x : v) x = dist(rng_);
        return {Tensor::from({in, out}, std::move(v), true), Tensor::zeros({out}, true)};
    }

    static LayerNormParams layer_norm(std::size_t d) {
        return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
    }

private:
    std::mt19937_64 rng_;
};

template <typename Params, typename Out>
void collect(Params& p, Out& out) {
    auto add = [&out](std::string name, auto* t) {
        if (t->defined()) out.emplace_back(std::move(name), t);
    };
    auto add_linear = [&add](const std::string& name, auto& l) {
        add(name + ".weight", &l.weight);
        add(name + ".bias", &l.bias);
    };
    auto add_norm = [&add](const std::string& name, auto& n) {
        add(name + ".gain", &n.gain);
        add(name + ".bias", &n.bias);
    };
    add("language.table", &p.language.table);
    add("language.cls", &p.language.cls);
    add("language.pos", &p.language.pos);
    add("language.type", &p.language.type);
    add("vision.projection", &p.vision.projection);
    add("vision.cls", &p.vision.cls);
    add("vision.pos", &p.vision.pos);
    add("vision.type", &p.vision.type);
    add("detection.tokens", &p.det_tokens);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string base = "encoder." + std::to_string(i) + ".";
        auto& layer = p.layers[i];
        add_norm(base + "attn_norm", layer.attn_norm);
        add_linear(base + "qkv", layer.qkv);
        add_linear(base + "attn_out", layer.attn_out);
        add_norm(base + "ffn_norm", layer.ffn_norm);
        add_linear(base + "ffn_in", layer.ffn_in);
        add_linear(base + "ffn_out", layer.ffn_out);
    }
    add_linear("heads.box_hidden", p.heads.box_hidden);
    add_linear("heads.box_out", p.heads.box_out);
    add_linear("heads.cls_hidden", p.heads.cls_hidden);
    add_linear("heads.cls_out", p.heads.cls_out);
    add_linear("heads.align_text", p.heads.align_text);
    add_linear("heads.align_det", p.heads.align_det);
    add_linear("heads.patch_text", p.heads.patch_text);
    add_linear("heads.patch_image", p.heads.patch_image);
}

}  // namespace

YoroParams YoroParams::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init(seed);
    const std::size_t d = config.d;
    constexpr double kEmbedStd = 0.02;
    YoroParams p;
    p.language.table = init.normal({config.vocab_size, d}, kEmbedStd);
    p.language.cls = init.normal({d}, kEmbedStd);
    p.language.pos = init.normal({config.m_max + 1, d}, kEmbedStd);
    p.language.type = init.normal({d}, kEmbedStd);
    p.vision.projection = init.linear(config.patch_dim(), d).weight;
    p.vision.cls = init.normal({d}, kEmbedStd);
    p.vision.pos = init.normal({config.patches() + 1, d}, kEmbedStd);
    if (config.sincos_positions)
        fill_sincos(p.vision.pos, config.image_height / config.patch, config.image_width / config.patch);
    p.vision.type = init.normal({d}, kEmbedStd);
    if (config.use_det_tokens) p.det_tokens = init.normal({config.det_tokens, d}, kEmbedStd);
    for (std::size_t i = 0; i < config.depth; ++i) {
        EncoderLayerParams layer;
        layer.attn_norm = Initializer::layer_norm(d);
        layer.qkv = init.linear(d, 3 * d);
        layer.attn_out = init.linear(d, d);
        layer.ffn_norm = Initializer::layer_norm(d);
        layer.ffn_in = init.linear(d, config.ffn_mult * d);
        layer.ffn_out = init.linear(config.ffn_mult * d, d);
        p.layers.push_back(std::move(layer));
    }
    p.heads.box_hidden = init.linear(d, d);
    p.heads.box_out = init.linear(d, 4);
    p.heads.cls_hidden = init.linear(d, d);
    p.heads.cls_out = init.linear(d, config.classes());
    p.heads.align_text = init.linear(d, config.d_align);
    p.heads.align_det = init.linear(d, config.d_align);
    p.heads.patch_text = init.linear(d, config.d_align);
    p.heads.patch_image = init.linear(d, config.d_align);
    return p;
}

std::vector<std::pair<std::string, Tensor*>> YoroParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect(*this, out);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> YoroParams::named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    collect(*this, out);
    return out;
}

YoroParams YoroParams::alias() const {
    YoroParams copy = *this;
    for (auto& [name, t] : copy.named()) *t = t->alias();
    return copy;
}

YoroParams YoroParams::clone() const {
    YoroParams copy = *this;
    for (auto& [name, t] : copy.named()) *t = t->clone(true);
    return copy;
}

std::size_t YoroParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t->size();
    return n;
}

void YoroParams::zero_grad() {
    for (auto& [name, t] : named()) t->zero_grad();
}

}  // namespace yoro
