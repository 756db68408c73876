#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "yoro/config.hpp"
#include "yoro/data.hpp"
#include "yoro/losses.hpp"
#include "yoro/model.hpp"

namespace yoro {

// ---- optimizer ----

// Per-step linear warmup from 0 to `base`, then linear decay reaching 0 on the
// final step.
struct Schedule {
    std::size_t total_steps = 1;
    std::size_t warmup_steps = 0;
    double base = 1e-4;

    static Schedule make(std::size_t total_steps, double warmup_fraction, double base);
    double lr(std::size_t step) const;
};

// Flat gradient buffers in YoroParams::named() order.
using Gradients = std::vector<std::vector<double>>;

class AdamW {
public:
    AdamW(const TrainConfig& hyper, const YoroParams& params);
    // Decoupled decay: w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w).
    void step(YoroParams& params, const Gradients& grads, double lr);
    std::size_t steps() const { return t_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
    Gradients m_, v_;
};

// Scales `grads` in place so their global L2 norm is at most max_norm;
// returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

struct BatchGradients {
    Gradients grads;      // mean over the batch
    LossValues loss;      // mean over the batch
    std::size_t clamped = 0;
};

// Forward and backward for every sample against a private gradient view of
// `params`; per-sample gradients are summed in sample order whatever the
// worker count. Token ids are re-derived from the words with `vocab`.
BatchGradients compute_gradients(const YoroParams& params, const ModelConfig& config, const Vocabulary& vocab,
                                 std::span<const GroundingSample* const> batch, std::size_t workers = 1);

// ---- evaluation and inference ----

// Index of the largest 1 - P(no-text); the lowest index wins ties.
std::size_t select_prediction(std::span<const double> class_probs, std::size_t predictions, std::size_t classes);

struct SampleRecord {
    std::string id;
    Box predicted;
    double score = 0;
    std::size_t selected = 0;
    double iou = 0;
    bool hit = false;
};

struct EvalReport {
    double accuracy = 0;
    std::vector<SampleRecord> records;
};

bool is_hit(double iou_value);  // iou >= 0.5, boundary inclusive
EvalReport evaluate(const Model& model, std::span<const GroundingSample> samples);
nlohmann::json to_json(const EvalReport& report, bool with_records);

struct InferResult {
    Box box;
    Corners pixels;  // in the extents of the input image
    double score = 0;
    std::size_t selected = 0;
    std::vector<std::string> tokens;
    // Probabilities of the selected row for the no-text class and each token.
    std::vector<double> token_distribution;
    std::vector<double> heatmap;  // patch weights of the last layer when requested
};

// Throws InputError on an empty phrase. Images of other extents are resampled.
InferResult infer(const Model& model, const Image& image, const std::string& phrase, bool with_heatmap = false);
nlohmann::json to_json(const InferResult& r);

// Head-averaged patch weights of the selected detection token at `layer`.
struct AttentionExport {
    std::vector<double> weights;
    std::size_t rows = 0, cols = 0;  // patch grid
    std::size_t selected = 0;
    int layer = 0;
};

AttentionExport attention_export(const Model& model, const Image& image, const std::string& phrase, int layer);

// ---- training ----

struct EpochMetrics {
    std::size_t epoch = 0;
    LossValues loss;
    std::size_t clamped = 0;
    std::optional<double> val_acc;
    double lr = 0;  // rate used by the epoch's last step
};

nlohmann::json to_json(const EpochMetrics& m);

struct TrainHooks {
    std::function<void(const EpochMetrics&)> on_epoch;
    // Where a diagnostics dump goes when a loss turns non-finite.
    std::filesystem::path diagnostics;
};

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> log;
};

// Deterministic given train.seed and the worker-independent reduction. Model
// parameters are initialised from train.seed. Throws NumericError on a
// non-finite loss after dumping the offending batch.
TrainResult train(const ModelConfig& config, const Vocabulary& vocab, const TrainConfig& train,
                  std::span<const GroundingSample> train_set, std::span<const GroundingSample> val_set,
                  const TrainHooks& hooks = {});

// Continues from existing parameters.
TrainResult train_from(Model model, const TrainConfig& train, std::span<const GroundingSample> train_set,
                       std::span<const GroundingSample> val_set, const TrainHooks& hooks = {});

// ---- persistence ----

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// ---- benchmark ----

struct StageTiming {
    std::string name;
    double mean_ms = 0;
    double percent = 0;
};

struct BenchReport {
    std::vector<StageTiming> stages;  // input, encoder, heads
    double fps = 0;
    double mean_ms = 0;
    std::size_t iterations = 0;
    std::size_t warmup = 0;
    std::size_t batch = 1;
};

// Times inference on a pre-loaded image; no file I/O inside the timed loop.
BenchReport bench(const Model& model, const Image& image, const std::string& phrase, std::size_t iterations,
                  std::size_t warmup, std::size_t batch = 1);
nlohmann::json to_json(const BenchReport& r);

}  // namespace yoro
