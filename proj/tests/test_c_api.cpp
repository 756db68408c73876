// Exercises the shared library through its C header only.

#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "yoro/yoro.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("yoro-test-capi-" + name);
    fs::remove_all(dir);
    return dir;
}

nlohmann::json take_json(char* s) {
    REQUIRE(s != nullptr);
    auto j = nlohmann::json::parse(s);
    yoro_string_free(s);
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const char* kModel = R"({"d": 16, "depth": 1, "heads": 2, "m_max": 12, "patch": 16, "det_tokens": 2, "d_align": 8})";

}  // namespace

TEST_CASE("errors are reported through status codes") {
    CHECK(yoro_generate(1, 1, nullptr) == YORO_ERR_ARGUMENT);
    CHECK(std::string(yoro_last_error()).find("null") != std::string::npos);
    yoro_model* m = nullptr;
    CHECK(yoro_model_load("/nonexistent/model.ckpt", &m) == YORO_ERR_IO);
    CHECK(m == nullptr);
    CHECK(std::string(yoro_status_string(YORO_ERR_INPUT)).size() > 0);
    yoro_dataset* ds = nullptr;
    CHECK(yoro_dataset_open("/nonexistent", nullptr, &ds) == YORO_ERR_IO);
    CHECK(yoro_dataset_size(nullptr) == 0);
    char* out = nullptr;
    CHECK(yoro_evaluate(nullptr, nullptr, 0, &out) == YORO_ERR_ARGUMENT);
}

TEST_CASE("generate, train, persist, evaluate and infer") {
    const auto dir = scratch("flow");
    REQUIRE(yoro_generate(5, 24, (dir / "data").c_str()) == YORO_OK);
    REQUIRE(yoro_generate(5, 24, (dir / "again").c_str()) == YORO_OK);
    CHECK(slurp(dir / "data/annotations.jsonl") == slurp(dir / "again/annotations.jsonl"));

    yoro_dataset* ds = nullptr;
    REQUIRE(yoro_dataset_open((dir / "data").c_str(), kModel, &ds) == YORO_OK);
    CHECK(yoro_dataset_size(ds) == 24);
    char* info = nullptr;
    REQUIRE(yoro_dataset_info(ds, &info) == YORO_OK);
    CHECK(take_json(info).at("skipped") == 0);

    const std::string cfg = std::string(R"({"model": )") + kModel +
                            R"(, "train": {"epochs": 2, "batch_size": 8, "lr": 1e-3}, "val_fraction": 0.25})";
    yoro_model* model = nullptr;
    const auto metrics = dir / "metrics.jsonl";
    REQUIRE(yoro_train(cfg.c_str(), ds, nullptr, metrics.c_str(), &model) == YORO_OK);
    std::ifstream lines(metrics);
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* key : {"epoch", "l_bbox", "l_cls", "l_oa", "l_pa", "l_total", "val_acc", "lr"})
            CHECK(j.contains(key));
        ++count;
    }
    CHECK(count == 2);

    const auto ckpt = dir / "model.ckpt";
    REQUIRE(yoro_model_save(model, ckpt.c_str()) == YORO_OK);
    yoro_model* back = nullptr;
    REQUIRE(yoro_model_load(ckpt.c_str(), &back) == YORO_OK);
    char* e1 = nullptr;
    char* e2 = nullptr;
    REQUIRE(yoro_evaluate(model, ds, 1, &e1) == YORO_OK);
    REQUIRE(yoro_evaluate(back, ds, 1, &e2) == YORO_OK);
    CHECK(take_json(e1) == take_json(e2));

    char* conf = nullptr;
    REQUIRE(yoro_model_config(back, &conf) == YORO_OK);
    CHECK(take_json(conf).at("d") == 16);

    const auto image = dir / "data/images/synthetic-5-0.ppm";
    char* inf = nullptr;
    const auto heat = dir / "heat.pgm";
    REQUIRE(yoro_infer(back, image.c_str(), "the red circle", heat.c_str(), &inf) == YORO_OK);
    const auto r = take_json(inf);
    CHECK(r.at("box").size() == 4);
    CHECK(fs::file_size(heat) > 16);
    CHECK(yoro_infer(back, image.c_str(), "", nullptr, &inf) == YORO_ERR_INPUT);
    CHECK(yoro_infer(back, (dir / "missing.ppm").c_str(), "the cube", nullptr, &inf) == YORO_ERR_IO);

    char* att = nullptr;
    const auto pgm = dir / "att.pgm";
    const auto att_json = dir / "att.json";
    REQUIRE(yoro_attention(back, image.c_str(), "the red circle", -1, pgm.c_str(), att_json.c_str(), &att) ==
            YORO_OK);
    take_json(att);
    CHECK(fs::exists(pgm));
    CHECK(nlohmann::json::parse(slurp(att_json)).at("weights").size() == 16);
    CHECK(yoro_attention(back, image.c_str(), "the red circle", 9, pgm.c_str(), nullptr, &att) != YORO_OK);

    char* b = nullptr;
    REQUIRE(yoro_bench(back, image.c_str(), "the red circle", 5, 1, 1, &b) == YORO_OK);
    CHECK(take_json(b).at("fps").get<double>() > 0);

    yoro_model_free(model);
    yoro_model_free(back);
    yoro_dataset_free(ds);
    fs::remove_all(dir);
}
