#include "yoro/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "yoro/errors.hpp"

namespace yoro {

// ---- optimizer ----

Schedule Schedule::make(std::size_t total_steps, double warmup_fraction, double base) {
    if (total_steps == 0) throw ValidationError("schedule needs at least one step");
    if (warmup_fraction < 0 || warmup_fraction > 1) throw ValidationError("warmup fraction must lie in [0, 1]");
    Schedule s;
    s.total_steps = total_steps;
    s.warmup_steps = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
    s.base = base;
    return s;
}

double Schedule::lr(std::size_t step) const {
    if (step < warmup_steps) return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const std::size_t last = total_steps - 1;
    if (last <= warmup_steps) return base;
    if (step >= last) return 0.0;
    return base * static_cast<double>(last - step) / static_cast<double>(last - warmup_steps);
}

AdamW::AdamW(const TrainConfig& hyper, const YoroParams& params)
    : beta1_(hyper.beta1), beta2_(hyper.beta2), eps_(hyper.eps), weight_decay_(hyper.weight_decay) {
    for (const auto& [name, t] : params.named()) {
        m_.emplace_back(t->size(), 0.0);
        v_.emplace_back(t->size(), 0.0);
    }
}

void AdamW::step(YoroParams& params, const Gradients& grads, double lr) {
    auto named = params.named();
    if (grads.size() != named.size()) throw DimensionError("AdamW: gradient count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < named.size(); ++p) {
        auto w = named[p].second->mutable_data();
        const auto& g = grads[p];
        if (g.size() != w.size()) throw DimensionError("AdamW: gradient shape mismatch for " + named[p].first);
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mh = m[i] / c1, vh = v[i] / c2;
            w[i] -= lr * (mh / (std::sqrt(vh) + eps_) + weight_decay_ * w[i]);
        }
    }
}

double clip_global_norm(Gradients& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g) sq += x * x;
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& g : grads)
            for (double& x : g) x *= f;
    }
    return norm;
}

namespace {

std::vector<std::size_t> ids_for(const GroundingSample& s, const Vocabulary& vocab) {
    std::vector<std::size_t> ids;
    ids.reserve(s.words.size());
    for (const auto& w : s.words) ids.push_back(vocab.id(w));
    return ids;
}

struct ItemResult {
    Gradients grads;
    LossValues loss;
    std::size_t clamped = 0;
};

ItemResult item_gradients(const YoroParams& params, const ModelConfig& config, const Vocabulary& vocab,
                          const GroundingSample& s) {
    YoroParams view = params.alias();
    const auto ids = ids_for(s, vocab);
    const auto fwd = forward(view, config, ids, s.image);
    const auto sl = sample_loss(fwd, s.truth, config);
    ItemResult r;
    r.loss = sl.loss.values();
    r.clamped = sl.loss.clamped;
    if (!std::isfinite(r.loss.total)) throw NumericError("non-finite loss on sample " + s.id);
    backward(sl.loss.total);
    for (const auto& [name, t] : std::as_const(view).named()) {
        if (t->has_grad()) {
            const auto g = t->grad();
            r.grads.emplace_back(g.begin(), g.end());
        } else {
            r.grads.emplace_back(t->size(), 0.0);
        }
    }
    return r;
}

void accumulate(BatchGradients& total, const ItemResult& item) {
    if (total.grads.empty()) {
        total.grads.reserve(item.grads.size());
        for (const auto& g : item.grads) total.grads.emplace_back(g.size(), 0.0);
    }
    for (std::size_t p = 0; p < item.grads.size(); ++p)
        for (std::size_t i = 0; i < item.grads[p].size(); ++i) total.grads[p][i] += item.grads[p][i];
    total.loss += item.loss;
    total.clamped += item.clamped;
}

}  // namespace

BatchGradients compute_gradients(const YoroParams& params, const ModelConfig& config, const Vocabulary& vocab,
                                 std::span<const GroundingSample* const> batch, std::size_t workers) {
    if (batch.empty()) throw ContractError("compute_gradients: empty batch");
    BatchGradients total;
    workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
    if (workers == 1) {
        for (const auto* s : batch) accumulate(total, item_gradients(params, config, vocab, *s));
    } else {
        std::vector<ItemResult> items(batch.size());
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < batch.size(); i += workers)
                        items[i] = item_gradients(params, config, vocab, *batch[i]);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (const auto& item : items) accumulate(total, item);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& g : total.grads)
        for (double& x : g) x *= inv;
    total.loss = total.loss.scaled(inv);
    return total;
}

// ---- evaluation and inference ----

std::size_t select_prediction(std::span<const double> class_probs, std::size_t predictions, std::size_t classes) {
    if (predictions == 0 || class_probs.size() != predictions * classes)
        throw DimensionError("select_prediction: probability table has the wrong size");
    std::size_t best = 0;
    for (std::size_t i = 1; i < predictions; ++i)
        if (1.0 - class_probs[i * classes] > 1.0 - class_probs[best * classes]) best = i;
    return best;
}

bool is_hit(double iou_value) { return iou_value >= 0.5; }

namespace {

Box row_box(const Tensor& boxes, std::size_t i) {
    const auto v = boxes.data();
    return {v[i * 4], v[i * 4 + 1], v[i * 4 + 2], v[i * 4 + 3]};
}

Image conform(const Image& image, const ModelConfig& config) {
    if (image.height == config.image_height && image.width == config.image_width) return image;
    return resize(image, config.image_height, config.image_width);
}

}  // namespace

EvalReport evaluate(const Model& model, std::span<const GroundingSample> samples) {
    if (samples.empty()) throw ContractError("evaluate: empty dataset");
    NoGradGuard guard;
    EvalReport report;
    std::size_t hits = 0;
    for (const auto& s : samples) {
        if (s.truth.boxes.empty()) throw ContractError("evaluate: sample " + s.id + " has no box");
        const auto ids = ids_for(s, model.vocab);
        const auto fwd = forward(model.params, model.config, ids, conform(s.image, model.config));
        SampleRecord r;
        r.id = s.id;
        r.selected = select_prediction(fwd.preds.class_probs.data(), model.config.predictions(),
                                       model.config.classes());
        r.predicted = row_box(fwd.preds.boxes, r.selected);
        r.score = 1.0 - fwd.preds.class_probs.data()[r.selected * model.config.classes()];
        r.iou = iou(r.predicted, s.truth.boxes[0]);
        r.hit = is_hit(r.iou);
        hits += r.hit;
        report.records.push_back(std::move(r));
    }
    report.accuracy = static_cast<double>(hits) / static_cast<double>(samples.size());
    return report;
}

namespace {

nlohmann::json box_json(const Box& b) { return {b.cx, b.cy, b.w, b.h}; }

}  // namespace

nlohmann::json to_json(const EvalReport& report, bool with_records) {
    std::size_t hits = 0;
    for (const auto& r : report.records) hits += r.hit;
    nlohmann::json j{{"accuracy", report.accuracy}, {"samples", report.records.size()}, {"hits", hits}};
    if (with_records) {
        auto& arr = j["records"] = nlohmann::json::array();
        for (const auto& r : report.records)
            arr.push_back({{"id", r.id},
                           {"box", box_json(r.predicted)},
                           {"score", r.score},
                           {"selected", r.selected},
                           {"iou", r.iou},
                           {"hit", r.hit}});
    }
    return j;
}

InferResult infer(const Model& model, const Image& image, const std::string& phrase, bool with_heatmap) {
    NoGradGuard guard;
    const auto ids = tokenize(phrase, model.vocab, model.config.m_max);
    const auto fwd = forward(model.params, model.config, ids, conform(image, model.config),
                             {.retain_attention = with_heatmap});
    const std::size_t K = model.config.classes();
    const auto probs = fwd.preds.class_probs.data();
    InferResult r;
    r.selected = select_prediction(probs, model.config.predictions(), K);
    r.box = row_box(fwd.preds.boxes, r.selected);
    r.pixels = to_pixel_corners(r.box, static_cast<double>(image.width), static_cast<double>(image.height));
    r.score = 1.0 - probs[r.selected * K];
    auto words = split_words(phrase);
    words.resize(ids.size());
    r.tokens = std::move(words);
    r.token_distribution.assign(probs.begin() + static_cast<std::ptrdiff_t>(r.selected * K),
                                probs.begin() + static_cast<std::ptrdiff_t>(r.selected * K + ids.size() + 1));
    if (with_heatmap) r.heatmap = attention_map(fwd.encoded, -1, r.selected);
    return r;
}

nlohmann::json to_json(const InferResult& r) {
    nlohmann::json j{{"box", box_json(r.box)},
                     {"box_pixels", {r.pixels.x1, r.pixels.y1, r.pixels.x2, r.pixels.y2}},
                     {"score", r.score},
                     {"selected", r.selected},
                     {"tokens", r.tokens},
                     {"token_distribution", r.token_distribution}};
    if (!r.heatmap.empty()) j["heatmap"] = r.heatmap;
    return j;
}

AttentionExport attention_export(const Model& model, const Image& image, const std::string& phrase, int layer) {
    NoGradGuard guard;
    const auto ids = tokenize(phrase, model.vocab, model.config.m_max);
    const auto fwd = forward(model.params, model.config, ids, conform(image, model.config),
                             {.retain_attention = true});
    AttentionExport out;
    out.selected = select_prediction(fwd.preds.class_probs.data(), model.config.predictions(),
                                     model.config.classes());
    out.weights = attention_map(fwd.encoded, layer, out.selected);
    out.rows = model.config.grid().rows();
    out.cols = model.config.grid().cols();
    out.layer = layer < 0 ? static_cast<int>(model.config.depth) + layer : layer;
    return out;
}

// ---- training ----

nlohmann::json to_json(const EpochMetrics& m) {
    nlohmann::json j{{"epoch", m.epoch},       {"l_bbox", m.loss.bbox}, {"l_cls", m.loss.cls},
                     {"l_oa", m.loss.oa},      {"l_pa", m.loss.pa},     {"l_total", m.loss.total},
                     {"val_acc", nullptr},     {"lr", m.lr}};
    if (m.val_acc) j["val_acc"] = *m.val_acc;
    return j;
}

namespace {

void dump_diagnostics(const std::filesystem::path& path, const std::string& reason, std::size_t epoch,
                      std::size_t step, std::span<const GroundingSample* const> batch, const Model& model) {
    if (path.empty()) return;
    nlohmann::json j{{"reason", reason}, {"epoch", epoch}, {"step", step}};
    auto& items = j["batch"] = nlohmann::json::array();
    for (const auto* s : batch) {
        nlohmann::json item{{"id", s->id}, {"phrase", s->phrase}, {"box", box_json(s->truth.boxes.at(0))}};
        NoGradGuard guard;
        try {
            const auto fwd = forward(model.params, model.config, ids_for(*s, model.vocab), s->image);
            const auto l = sample_loss(fwd, s->truth, model.config).loss.values();
            item["loss"] = {{"bbox", l.bbox}, {"cls", l.cls}, {"oa", l.oa}, {"pa", l.pa}, {"total", l.total}};
        } catch (const std::exception& e) {
            item["error"] = e.what();
        }
        items.push_back(std::move(item));
    }
    auto& norms = j["parameter_norms"] = nlohmann::json::object();
    for (const auto& [name, t] : model.params.named()) {
        double sq = 0;
        for (double x : t->data()) sq += x * x;
        norms[name] = std::sqrt(sq);
    }
    std::ofstream out(path);
    // NaN norms serialize as null.
    out << j.dump(2) << '\n';
}

}  // namespace

TrainResult train_from(Model model, const TrainConfig& tc, std::span<const GroundingSample> train_set,
                       std::span<const GroundingSample> val_set, const TrainHooks& hooks) {
    if (train_set.empty()) throw ContractError("train: empty dataset");
    if (tc.batch_size == 0 || tc.epochs == 0) throw ValidationError("train: epochs and batch size must be positive");
    const std::size_t n = train_set.size();
    const std::size_t per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
    const Schedule schedule = Schedule::make(per_epoch * tc.epochs, tc.warmup_fraction, tc.lr);
    AdamW opt(tc, model.params);
    std::mt19937_64 shuffle_rng(tc.seed ^ 0x5eed5eedULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result{std::move(model), {}};
    Model& m = result.model;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochMetrics metrics;
        metrics.epoch = epoch;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            std::vector<const GroundingSample*> batch;
            for (std::size_t i = b * tc.batch_size; i < std::min(n, (b + 1) * tc.batch_size); ++i)
                batch.push_back(&train_set[order[i]]);
            BatchGradients g;
            try {
                g = compute_gradients(m.params, m.config, m.vocab, batch, tc.workers);
            } catch (const NumericError& e) {
                dump_diagnostics(hooks.diagnostics, e.what(), epoch, step, batch, m);
                throw;
            }
            clip_global_norm(g.grads, tc.clip_norm);
            metrics.lr = schedule.lr(step);
            opt.step(m.params, g.grads, metrics.lr);
            metrics.loss += g.loss.scaled(static_cast<double>(batch.size()));
            metrics.clamped += g.clamped;
        }
        metrics.loss = metrics.loss.scaled(1.0 / static_cast<double>(n));
        if (!val_set.empty()) metrics.val_acc = evaluate(m, val_set).accuracy;
        if (hooks.on_epoch) hooks.on_epoch(metrics);
        result.log.push_back(metrics);
    }
    return result;
}

TrainResult train(const ModelConfig& config, const Vocabulary& vocab, const TrainConfig& tc,
                  std::span<const GroundingSample> train_set, std::span<const GroundingSample> val_set,
                  const TrainHooks& hooks) {
    return train_from(Model::create(config, vocab, tc.seed), tc, train_set, val_set, hooks);
}

}  // namespace yoro
