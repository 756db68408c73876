// Command-line front end. Links only the C interface; every command prints a
// single JSON document on stdout and diagnostics on stderr.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "yoro/yoro.h"

#include <unistd.h>

namespace {

using json = nlohmann::json;

struct Failure {
    std::string message;
};

void check(yoro_status s) {
    if (s != YORO_OK) throw Failure{std::string(yoro_status_string(s)) + ": " + yoro_last_error()};
}

std::string take(char* s) {
    std::string out(s ? s : "");
    yoro_string_free(s);
    return out;
}

using ModelPtr = std::unique_ptr<yoro_model, decltype(&yoro_model_free)>;
using DatasetPtr = std::unique_ptr<yoro_dataset, decltype(&yoro_dataset_free)>;

ModelPtr load_model(const std::string& path) {
    yoro_model* m = nullptr;
    check(yoro_model_load(path.c_str(), &m));
    return {m, yoro_model_free};
}

DatasetPtr open_dataset(const std::string& dir, const std::string& model_config) {
    yoro_dataset* d = nullptr;
    check(yoro_dataset_open(dir.c_str(), model_config.empty() ? nullptr : model_config.c_str(), &d));
    DatasetPtr ds{d, yoro_dataset_free};
    char* info = nullptr;
    check(yoro_dataset_info(d, &info));
    const auto j = json::parse(take(info));
    for (const auto& line : j["log"]) std::cerr << dir << ": " << line.get<std::string>() << '\n';
    return ds;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Failure{"cannot open " + path};
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Failure{path + ": " + e.what()};
    }
}

std::string last_line(const std::string& path) {
    std::ifstream in(path);
    std::string line, last;
    while (std::getline(in, line))
        if (!line.empty()) last = line;
    return last;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-stage visual grounding at desk scale"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Write a synthetic referring-expression dataset");
    std::uint64_t gen_seed = 0;
    std::size_t gen_count = 0;
    std::string gen_out;
    gen->add_option("--seed", gen_seed, "Generator seed")->required();
    gen->add_option("--count", gen_count, "Number of samples")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
    std::string tr_config, tr_data, tr_out, tr_val, tr_metrics;
    std::optional<std::size_t> tr_epochs, tr_batch, tr_workers;
    std::optional<double> tr_lr;
    std::optional<std::uint64_t> tr_seed;
    bool no_oa = false, no_pa = false, no_det = false;
    tr->add_option("--config", tr_config, "JSON file {model, train, val_fraction}");
    tr->add_option("--data", tr_data, "Training dataset directory")->required();
    tr->add_option("--out", tr_out, "Checkpoint path")->required();
    tr->add_option("--val", tr_val, "Held-out dataset directory");
    tr->add_option("--metrics", tr_metrics, "Metrics log path (default <out>.metrics.jsonl)");
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--batch", tr_batch);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--workers", tr_workers);
    tr->add_flag("--no-oa", no_oa, "Disable the object alignment loss");
    tr->add_flag("--no-pa", no_pa, "Disable the patch alignment loss");
    tr->add_flag("--no-det", no_det, "Regress from the text cls output instead of detection tokens");

    auto* ev = app.add_subcommand("eval", "Accuracy@0.5 of a checkpoint on a dataset");
    std::string ev_ckpt, ev_data;
    bool ev_records = false;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_flag("--records", ev_records, "Include per-sample IoU records");

    auto* inf = app.add_subcommand("infer", "Ground one phrase in one image");
    std::string inf_ckpt, inf_image, inf_phrase, inf_heatmap;
    inf->add_option("--ckpt", inf_ckpt)->required();
    inf->add_option("--image", inf_image)->required();
    inf->add_option("--phrase", inf_phrase)->required();
    inf->add_option("--heatmap", inf_heatmap, "PGM path for the last-layer attention of the selected token");

    auto* be = app.add_subcommand("bench", "Latency breakdown over repeated inference");
    std::string be_ckpt, be_image, be_phrase;
    std::size_t be_iters = 100, be_warmup = 10, be_batch = 1;
    be->add_option("--ckpt", be_ckpt)->required();
    be->add_option("--image", be_image, "Image to time (default: a generated sample)");
    be->add_option("--phrase", be_phrase, "Phrase to ground (default: the generated sample's)");
    be->add_option("--iters", be_iters);
    be->add_option("--warmup", be_warmup);
    be->add_option("--batch", be_batch);

    auto* at = app.add_subcommand("attn", "Export detection-token attention over the patches");
    std::string at_ckpt, at_image, at_phrase, at_out;
    int at_layer = -1;
    at->add_option("--ckpt", at_ckpt)->required();
    at->add_option("--image", at_image)->required();
    at->add_option("--phrase", at_phrase)->required();
    at->add_option("--layer", at_layer, "Encoder layer; negative counts from the end");
    at->add_option("--out", at_out, "PGM path; raw weights go to <out>.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        json result;
        if (*gen) {
            check(yoro_generate(gen_seed, gen_count, gen_out.c_str()));
            result = {{"out", gen_out}, {"count", gen_count}, {"seed", gen_seed}};
        } else if (*tr) {
            json cfg = tr_config.empty() ? json::object() : read_json_file(tr_config);
            auto& mc = cfg["model"];
            auto& tc = cfg["train"];
            if (mc.is_null()) mc = json::object();
            if (tc.is_null()) tc = json::object();
            if (no_oa) mc["use_object_alignment"] = false;
            if (no_pa) mc["use_patch_alignment"] = false;
            if (no_det) mc["use_det_tokens"] = false;
            if (tr_epochs) tc["epochs"] = *tr_epochs;
            if (tr_batch) tc["batch_size"] = *tr_batch;
            if (tr_lr) tc["lr"] = *tr_lr;
            if (tr_seed) tc["seed"] = *tr_seed;
            if (tr_workers) tc["workers"] = *tr_workers;
            if (tr_metrics.empty()) tr_metrics = tr_out + ".metrics.jsonl";
            const std::string model_cfg = mc.dump();
            auto train_ds = open_dataset(tr_data, model_cfg);
            DatasetPtr val_ds{nullptr, yoro_dataset_free};
            if (!tr_val.empty()) val_ds = open_dataset(tr_val, model_cfg);
            yoro_model* m = nullptr;
            check(yoro_train(cfg.dump().c_str(), train_ds.get(), val_ds.get(), tr_metrics.c_str(), &m));
            ModelPtr model{m, yoro_model_free};
            check(yoro_model_save(model.get(), tr_out.c_str()));
            result = {{"checkpoint", tr_out}, {"metrics", tr_metrics}, {"samples", yoro_dataset_size(train_ds.get())}};
            if (const auto line = last_line(tr_metrics); !line.empty()) result["final"] = json::parse(line);
        } else if (*ev) {
            auto model = load_model(ev_ckpt);
            char* cfg = nullptr;
            check(yoro_model_config(model.get(), &cfg));
            auto ds = open_dataset(ev_data, take(cfg));
            char* out = nullptr;
            check(yoro_evaluate(model.get(), ds.get(), ev_records ? 1 : 0, &out));
            result = json::parse(take(out));
        } else if (*inf) {
            auto model = load_model(inf_ckpt);
            char* out = nullptr;
            check(yoro_infer(model.get(), inf_image.c_str(), inf_phrase.c_str(),
                             inf_heatmap.empty() ? nullptr : inf_heatmap.c_str(), &out));
            result = json::parse(take(out));
        } else if (*be) {
            auto model = load_model(be_ckpt);
            std::string image = be_image;
            std::optional<std::string> scratch;
            if (!image.empty() && be_phrase.empty()) throw Failure{"--phrase is required with --image"};
            if (image.empty()) {
                // A generated sample stands in for a user image.
                scratch = (std::filesystem::temp_directory_path() / ("yoro-bench-" + std::to_string(::getpid()))).string();
                check(yoro_generate(0, 1, scratch->c_str()));
                const auto rec = json::parse(last_line(*scratch + "/annotations.jsonl"));
                image = *scratch + "/" + rec["image"].get<std::string>();
                if (be_phrase.empty()) be_phrase = rec["phrase"].get<std::string>();
            }
            char* out = nullptr;
            const auto s = yoro_bench(model.get(), image.c_str(), be_phrase.c_str(), be_iters, be_warmup, be_batch, &out);
            if (scratch) std::filesystem::remove_all(*scratch);
            check(s);
            result = json::parse(take(out));
        } else if (*at) {
            auto model = load_model(at_ckpt);
            const std::string json_path = at_out + ".json";
            char* out = nullptr;
            check(yoro_attention(model.get(), at_image.c_str(), at_phrase.c_str(), at_layer, at_out.c_str(),
                                 json_path.c_str(), &out));
            auto j = json::parse(take(out));
            j.erase("weights");
            result = j;
        }
        std::cout << result.dump() << '\n';
        return 0;
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
