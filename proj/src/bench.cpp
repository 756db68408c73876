#include <chrono>

#include "yoro/errors.hpp"
#include "yoro/runtime.hpp"

namespace yoro {

BenchReport bench(const Model& model, const Image& image, const std::string& phrase, std::size_t iterations,
                  std::size_t warmup, std::size_t batch) {
    if (iterations == 0 || batch == 0) throw ValidationError("bench: iterations and batch must be positive");
    using Clock = std::chrono::steady_clock;
    NoGradGuard guard;
    const ModelConfig& cfg = model.config;
    const Image input = (image.height == cfg.image_height && image.width == cfg.image_width)
                            ? image
                            : resize(image, cfg.image_height, cfg.image_width);
    const YoroParams& p = model.params;
    double stage[3] = {0, 0, 0};
    std::size_t checksum = 0;  // keeps the selections observable

    for (std::size_t it = 0; it < warmup + iterations; ++it) {
        const bool timed = it >= warmup;
        for (std::size_t b = 0; b < batch; ++b) {
            const auto t0 = Clock::now();
            const auto ids = tokenize(phrase, model.vocab, cfg.m_max);
            const auto text = embed_text(ids, p.language, cfg);
            const auto assembled =
                assemble(text.value, embed_image(input, p.vision, cfg), cfg.use_det_tokens ? p.det_tokens : Tensor());
            const auto t1 = Clock::now();
            const auto encoded = encode(assembled, p.layers, cfg);
            const auto t2 = Clock::now();
            const auto preds = predict(encoded, p.heads, cfg);
            checksum += select_prediction(preds.class_probs.data(), cfg.predictions(), cfg.classes());
            const auto t3 = Clock::now();
            if (timed) {
                stage[0] += std::chrono::duration<double, std::milli>(t1 - t0).count();
                stage[1] += std::chrono::duration<double, std::milli>(t2 - t1).count();
                stage[2] += std::chrono::duration<double, std::milli>(t3 - t2).count();
            }
        }
    }
    (void)checksum;

    BenchReport r;
    r.iterations = iterations;
    r.warmup = warmup;
    r.batch = batch;
    const double total = stage[0] + stage[1] + stage[2];
    const char* names[3] = {"input", "encoder", "heads"};
    for (int s = 0; s < 3; ++s)
        r.stages.push_back({names[s], stage[s] / static_cast<double>(iterations),
                            total > 0 ? 100.0 * stage[s] / total : 100.0 / 3.0});
    r.mean_ms = total / static_cast<double>(iterations);
    r.fps = total > 0 ? 1000.0 * static_cast<double>(iterations * batch) / total : 0.0;
    return r;
}

nlohmann::json to_json(const BenchReport& r) {
    nlohmann::json stages = nlohmann::json::array();
    double pct = 0;
    for (const auto& s : r.stages) {
        stages.push_back({{"stage", s.name}, {"mean_ms", s.mean_ms}, {"percent", s.percent}});
        pct += s.percent;
    }
    return {{"stages", stages},  {"percent_total", pct}, {"fps", r.fps},   {"mean_ms_per_iteration", r.mean_ms},
            {"iterations", r.iterations}, {"warmup", r.warmup}, {"batch", r.batch}};
}

}  // namespace yoro
