#include "yoro/yoro.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "yoro/errors.hpp"
#include "yoro/runtime.hpp"

struct yoro_model {
    yoro::Model model;
};

struct yoro_dataset {
    yoro::IngestResult data;
    yoro::ModelConfig config;
};

namespace {

thread_local std::string g_last_error;

yoro_status fail(yoro_status s, const std::string& what) {
    g_last_error = what;
    return s;
}

template <typename F>
yoro_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return YORO_OK;
    } catch (const yoro::DimensionError& e) {
        return fail(YORO_ERR_DIMENSION, e.what());
    } catch (const yoro::ContractError& e) {
        return fail(YORO_ERR_CONTRACT, e.what());
    } catch (const yoro::NumericError& e) {
        return fail(YORO_ERR_NUMERIC, e.what());
    } catch (const yoro::ValidationError& e) {
        return fail(YORO_ERR_VALIDATION, e.what());
    } catch (const yoro::StateError& e) {
        return fail(YORO_ERR_STATE, e.what());
    } catch (const yoro::InputError& e) {
        return fail(YORO_ERR_INPUT, e.what());
    } catch (const yoro::IoError& e) {
        return fail(YORO_ERR_IO, e.what());
    } catch (const yoro::GenerationError& e) {
        return fail(YORO_ERR_GENERATION, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(YORO_ERR_VALIDATION, std::string("json: ") + e.what());
    } catch (const std::exception& e) {
        return fail(YORO_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(YORO_ERR_INTERNAL, "unknown failure");
    }
}

#define YORO_REQUIRE(cond, msg) \
    if (!(cond)) return fail(YORO_ERR_ARGUMENT, msg)

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void write_heatmap(const std::filesystem::path& path, std::span<const double> weights, std::size_t rows,
                   std::size_t cols) {
    const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
    std::vector<unsigned char> px(weights.size(), 0);
    if (*hi > *lo)
        for (std::size_t i = 0; i < weights.size(); ++i)
            px[i] = static_cast<unsigned char>(std::lround(255.0 * (weights[i] - *lo) / (*hi - *lo)));
    yoro::write_pgm(path, rows, cols, px);
}

}  // namespace

extern "C" {

const char* yoro_last_error(void) { return g_last_error.c_str(); }

const char* yoro_status_string(yoro_status status) {
    switch (status) {
        case YORO_OK: return "ok";
        case YORO_ERR_ARGUMENT: return "invalid argument";
        case YORO_ERR_DIMENSION: return "dimension error";
        case YORO_ERR_CONTRACT: return "contract error";
        case YORO_ERR_NUMERIC: return "numeric error";
        case YORO_ERR_VALIDATION: return "validation error";
        case YORO_ERR_STATE: return "state error";
        case YORO_ERR_INPUT: return "input error";
        case YORO_ERR_IO: return "i/o error";
        case YORO_ERR_GENERATION: return "generation error";
        case YORO_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

void yoro_string_free(char* s) { std::free(s); }

yoro_status yoro_generate(uint64_t seed, size_t count, const char* out_dir) {
    YORO_REQUIRE(out_dir, "out_dir is null");
    return guarded([&] {
        yoro::SyntheticSpec spec;
        spec.seed = seed;
        const auto samples = yoro::generate(spec, count);
        yoro::export_dataset(samples, out_dir);
    });
}

yoro_status yoro_dataset_open(const char* dir, const char* model_config_json, yoro_dataset** out) {
    YORO_REQUIRE(dir && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        yoro::ModelConfig config;
        if (model_config_json) config = nlohmann::json::parse(model_config_json).get<yoro::ModelConfig>();
        config.validate();
        const std::filesystem::path root(dir);
        auto ds = std::make_unique<yoro_dataset>();
        ds->data = yoro::ingest(root / "annotations.jsonl", root, config);
        ds->config = config;
        *out = ds.release();
    });
}

void yoro_dataset_free(yoro_dataset* dataset) { delete dataset; }

size_t yoro_dataset_size(const yoro_dataset* dataset) { return dataset ? dataset->data.samples.size() : 0; }

yoro_status yoro_dataset_info(const yoro_dataset* dataset, char** json_out) {
    YORO_REQUIRE(dataset && json_out, "null argument");
    return guarded([&] {
        const nlohmann::json j{{"samples", dataset->data.samples.size()},
                               {"skipped", dataset->data.skipped},
                               {"log", dataset->data.log},
                               {"vocabulary", dataset->data.vocabulary.size()}};
        *json_out = dup_string(j.dump());
    });
}

yoro_status yoro_train(const char* config_json, const yoro_dataset* train_set, const yoro_dataset* val_set,
                       const char* metrics_path, yoro_model** out) {
    YORO_REQUIRE(train_set && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        const auto j = config_json ? nlohmann::json::parse(config_json) : nlohmann::json::object();
        yoro::ModelConfig mc = j.value("model", nlohmann::json::object()).get<yoro::ModelConfig>();
        const yoro::TrainConfig tc = j.value("train", nlohmann::json::object()).get<yoro::TrainConfig>();
        if (mc.image_height != train_set->config.image_height || mc.image_width != train_set->config.image_width)
            throw yoro::ValidationError("training images were loaded at other extents than the model config");
        const auto& samples = train_set->data.samples;
        std::span<const yoro::GroundingSample> fit(samples), held;
        if (val_set) {
            held = val_set->data.samples;
        } else if (const double frac = j.value("val_fraction", 0.0); frac > 0) {
            if (frac >= 1) throw yoro::ValidationError("val_fraction must be below 1");
            const auto n_val = static_cast<std::size_t>(std::floor(frac * static_cast<double>(samples.size())));
            fit = fit.first(samples.size() - n_val);
            held = std::span<const yoro::GroundingSample>(samples).last(n_val);
        }
        std::ofstream metrics;
        if (metrics_path) {
            metrics.open(metrics_path, std::ios::trunc);
            if (!metrics) throw yoro::IoError(std::string("cannot write ") + metrics_path);
        }
        yoro::TrainHooks hooks;
        hooks.diagnostics = j.value("diagnostics", std::string("yoro-diagnostics.json"));
        hooks.on_epoch = [&](const yoro::EpochMetrics& m) {
            const std::string line = yoro::to_json(m).dump();
            if (metrics.is_open()) metrics << line << '\n' << std::flush;
        };
        auto result = yoro::train(mc, train_set->data.vocabulary, tc, fit, held, hooks);
        *out = new yoro_model{std::move(result.model)};
    });
}

yoro_status yoro_model_load(const char* path, yoro_model** out) {
    YORO_REQUIRE(path && out, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new yoro_model{yoro::load_checkpoint(path)}; });
}

yoro_status yoro_model_save(const yoro_model* model, const char* path) {
    YORO_REQUIRE(model && path, "null argument");
    return guarded([&] { yoro::save_checkpoint(model->model, path); });
}

void yoro_model_free(yoro_model* model) { delete model; }

yoro_status yoro_model_config(const yoro_model* model, char** json_out) {
    YORO_REQUIRE(model && json_out, "null argument");
    return guarded([&] { *json_out = dup_string(nlohmann::json(model->model.config).dump()); });
}

yoro_status yoro_evaluate(const yoro_model* model, const yoro_dataset* dataset, int with_records, char** json_out) {
    YORO_REQUIRE(model && dataset && json_out, "null argument");
    return guarded([&] {
        const auto report = yoro::evaluate(model->model, dataset->data.samples);
        *json_out = dup_string(yoro::to_json(report, with_records != 0).dump());
    });
}

yoro_status yoro_infer(const yoro_model* model, const char* image_path, const char* phrase, const char* heatmap_pgm,
                       char** json_out) {
    YORO_REQUIRE(model && image_path && phrase && json_out, "null argument");
    return guarded([&] {
        const auto image = yoro::read_image(image_path);
        const auto r = yoro::infer(model->model, image, phrase, heatmap_pgm != nullptr);
        auto j = yoro::to_json(r);
        if (heatmap_pgm) {
            const auto grid = model->model.config.grid();
            write_heatmap(heatmap_pgm, r.heatmap, grid.rows(), grid.cols());
            j["heatmap_pgm"] = heatmap_pgm;
        }
        *json_out = dup_string(j.dump());
    });
}

yoro_status yoro_bench(const yoro_model* model, const char* image_path, const char* phrase, size_t iterations,
                       size_t warmup, size_t batch, char** json_out) {
    YORO_REQUIRE(model && image_path && phrase && json_out, "null argument");
    return guarded([&] {
        const auto image = yoro::read_image(image_path);
        const auto report = yoro::bench(model->model, image, phrase, iterations, warmup, batch);
        *json_out = dup_string(yoro::to_json(report).dump());
    });
}

yoro_status yoro_attention(const yoro_model* model, const char* image_path, const char* phrase, int layer,
                           const char* pgm_path, const char* json_path, char** json_out) {
    YORO_REQUIRE(model && image_path && phrase && pgm_path && json_out, "null argument");
    return guarded([&] {
        const auto image = yoro::read_image(image_path);
        const auto a = yoro::attention_export(model->model, image, phrase, layer);
        write_heatmap(pgm_path, a.weights, a.rows, a.cols);
        nlohmann::json j{{"layer", a.layer}, {"selected", a.selected}, {"rows", a.rows}, {"cols", a.cols},
                         {"weights", a.weights}, {"pgm", pgm_path}};
        if (json_path) {
            std::ofstream f(json_path);
            if (!f) throw yoro::IoError(std::string("cannot write ") + json_path);
            f << j.dump() << '\n';
            j["json"] = json_path;
        }
        *json_out = dup_string(j.dump());
    });
}

}  // extern "C"
