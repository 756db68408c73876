#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "yoro/errors.hpp"
#include "yoro/losses.hpp"

using namespace yoro;

namespace {

// Unit-norm random rows.
Tensor unit_rows(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> n(0, 1);
    std::vector<double> v(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) s += (v[i * c + j] = n(rng)) * v[i * c + j];
        for (std::size_t j = 0; j < c; ++j) v[i * c + j] /= std::sqrt(s);
    }
    return Tensor::from({r, c}, std::move(v), true);
}

using oracle::dot;

// -log( exp(x_t) / sum_k exp(x_k) ) with plain loops.
double neg_log_softmax(const std::vector<double>& x, std::size_t t) {
    double z = 0;
    for (double v : x) z += std::exp(v);
    return -(x[t] - std::log(z));
}

double scalar_ota(const Tensor& det, const Tensor& text, const std::vector<std::vector<std::size_t>>& sets,
                  double tau) {
    double total = 0;
    for (std::size_t k = 0; k < det.rows(); ++k) {
        std::vector<double> logits;
        for (std::size_t i = 0; i < text.rows(); ++i) logits.push_back(dot(det, k, text, i) / tau);
        double s = 0;
        for (std::size_t t : sets[k]) s += neg_log_softmax(logits, t);
        total += s / static_cast<double>(sets[k].size());
    }
    return total;
}

double scalar_toa(const Tensor& text, const Tensor& det, const std::vector<std::vector<std::size_t>>& osets,
                  double tau) {
    double total = 0;
    for (std::size_t i = 0; i < text.rows(); ++i) {
        if (osets[i].empty()) continue;
        std::vector<double> logits;
        for (std::size_t k = 0; k < det.rows(); ++k) logits.push_back(dot(text, i, det, k) / tau);
        double s = 0;
        for (std::size_t k : osets[i]) s += neg_log_softmax(logits, k);
        total += s / static_cast<double>(osets[i].size());
    }
    return total;
}

}  // namespace

TEST_CASE("bbox loss") {
    const Box gt{0.3, 0.6, 0.2, 0.4};
    const auto same = Tensor::from({1, 4}, {gt.cx, gt.cy, gt.w, gt.h});
    CHECK(std::fabs(bbox_loss(same, gt, 2, 5).item()) <= 1e-12);

    // L1 = 0.5; the target sits inside the prediction, so GIoU = IoU = 1/4.
    const auto pred = Tensor::from({1, 4}, {0.5, 0.5, 0.5, 0.5});
    const Box inner{0.5, 0.5, 0.25, 0.25};
    CHECK(giou({0.5, 0.5, 0.5, 0.5}, inner) == doctest::Approx(0.25));
    CHECK(bbox_loss(pred, inner, 2, 5).item() == doctest::Approx(2 * 0.5 + 5 * (1 - 0.25)).epsilon(1e-14));

    // Tensor GIoU agrees with the geometry module on random pairs.
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> c(0.1, 0.9), s(0.05, 0.5);
    for (int i = 0; i < 200; ++i) {
        const Box p{c(rng), c(rng), s(rng), s(rng)}, g{c(rng), c(rng), s(rng), s(rng)};
        const auto row = Tensor::from({1, 4}, {p.cx, p.cy, p.w, p.h});
        CHECK(bbox_loss(row, g, 0, 1).item() == doctest::Approx(1 - giou(p, g)).epsilon(1e-12));
    }
    auto leaf = Tensor::from({1, 4}, {0.45, 0.52, 0.3, 0.22}, true);
    const auto r = testing::check_gradients([&] { return bbox_loss(leaf, gt, 2, 5); }, {leaf});
    CHECK(r.max_rel <= 1e-6);
}

TEST_CASE("classification loss") {
    const std::vector<double> onehot{0, 0, 1, 0};
    CHECK(cls_loss(Tensor::from({1, 4}, onehot), onehot).value.item() == 0.0);
    const auto uniform = Tensor::full({2, 4}, 0.25);
    const std::vector<double> fig{0, 0.5, 0.5, 0, 1, 0, 0, 0};  // two supported words, then no-text
    CHECK(cls_loss(uniform, fig).value.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    const auto hits_floor = cls_loss(Tensor::from({1, 4}, {1, 0, 0, 0}), {0, 1, 0, 0});
    CHECK(hits_floor.clamped == 1);
    CHECK(hits_floor.value.item() == doctest::Approx(-std::log(kProbabilityFloor)));

    // Row weights give a weighted mean of per-row cross-entropies.
    const auto two = Tensor::from({2, 2}, {0.5, 0.5, 0.8, 0.2});
    const std::vector<double> t{1, 0, 1, 0};
    const double expect = (0.1 * -std::log(0.5) + 1.0 * -std::log(0.8)) / 1.1;
    CHECK(cls_loss(two, t, {0.1, 1.0}).value.item() == doctest::Approx(expect).epsilon(1e-14));
    CHECK(cls_loss(two, t, {1.0, 1.0}).value.item() == doctest::Approx(cls_loss(two, t).value.item()));
    CHECK_THROWS_AS(cls_loss(two, t, {1.0}), DimensionError);
    auto leaf = Tensor::from({2, 3}, {0.2, 0.3, 0.5, 0.6, 0.3, 0.1}, true);
    const auto r = testing::check_gradients(
        [&] { return cls_loss(leaf, {0, 0.5, 0.5, 1, 0, 0}, {1.0, 0.1}).value; }, {leaf});
    CHECK(r.max_rel <= 1e-6);
}

TEST_CASE("object alignment losses") {
    const double tau = 0.07;
    SUBCASE("degenerate cases") {
        const auto det = Tensor::from({1, 3}, {1, 0, 0});
        CHECK(ota_loss(det, Tensor::from({1, 3}, {0, 1, 0}), {{0}}, tau).item() == doctest::Approx(0.0));
        // Orthogonal embeddings: uniform softmax over m = 2 tokens.
        const auto text = Tensor::from({2, 3}, {0, 1, 0, 0, 0, 1});
        CHECK(ota_loss(det, text, {{1}}, tau).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
        CHECK(toa_loss(text, det, {{0}, {}}, tau).item() == doctest::Approx(0.0));
        CHECK_THROWS_AS(ota_loss(det, text, {{}}, tau), ContractError);
    }
    SUBCASE("scalar oracle") {
        std::mt19937_64 rng(22);
        for (int trial = 0; trial < 20; ++trial) {
            const auto det = unit_rows(rng, 2, 6), text = unit_rows(rng, 5, 6);
            const std::vector<std::vector<std::size_t>> sets{{0, 3}, {1}};
            CHECK(ota_loss(det, text, sets, tau).item() ==
                  doctest::Approx(scalar_ota(det, text, sets, tau)).epsilon(1e-12));
            const std::vector<std::vector<std::size_t>> osets{{0}, {1}, {}, {0}, {}};
            CHECK(toa_loss(text, det, osets, tau).item() ==
                  doctest::Approx(scalar_toa(text, det, osets, tau)).epsilon(1e-12));
        }
    }
    SUBCASE("swapping roles transposes the problem") {
        std::mt19937_64 rng(23);
        const auto a = unit_rows(rng, 3, 4), b = unit_rows(rng, 3, 4);
        const std::vector<std::vector<std::size_t>> sets{{0}, {1}, {2}};
        CHECK(ota_loss(a, b, sets, tau).item() == doctest::Approx(toa_loss(a, b, sets, tau).item()).epsilon(1e-14));
    }
    SUBCASE("gradients") {
        std::mt19937_64 rng(24);
        auto det = unit_rows(rng, 2, 4), text = unit_rows(rng, 3, 4);
        const std::vector<std::vector<std::size_t>> sets{{0, 2}, {1}};
        const auto r = testing::check_gradients(
            [&] { return add(ota_loss(det, text, sets, tau), toa_loss(text, det, {{0}, {1}, {0}}, tau)); },
            {det, text});
        CHECK(r.max_rel <= 1e-6);
    }
}

TEST_CASE("alignment normalization") {
    const auto n = normalize_alignment(oracle::figure_fixture());
    const std::vector<double> first(n.per_token.begin(), n.per_token.begin() + 6);
    CHECK(first == std::vector<double>{0, 0, 0, 0, 0.5, 0.5});
    CHECK(n.aligned_tokens == std::vector<std::size_t>{0, 1});
    CHECK(n.aligned_patches == std::vector<std::size_t>{4, 5});

    const auto empty = normalize_alignment(AlignmentTable(3, 4));
    CHECK(empty.aligned_tokens.empty());
    for (double v : empty.per_token) CHECK(v == 0.0);
    for (double v : empty.per_patch) CHECK(v == 0.0);

    std::mt19937_64 rng(25);
    std::bernoulli_distribution bit(0.3);
    for (int trial = 0; trial < 100; ++trial) {
        AlignmentTable a(4, 7);
        for (auto& c : a.cells) c = bit(rng);
        const auto z = normalize_alignment(a);
        for (std::size_t i : z.aligned_tokens) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) s += z.per_token[i * 7 + j];
            CHECK(std::fabs(s - 1) <= 1e-12);
        }
        for (std::size_t j : z.aligned_patches) {
            double s = 0;
            for (std::size_t i = 0; i < 4; ++i) s += z.per_patch[i * 7 + j];
            CHECK(std::fabs(s - 1) <= 1e-12);
        }
    }
}

TEST_CASE("patch alignment loss") {
    const double tau = 0.07;
    const auto fig = oracle::figure_fixture();
    SUBCASE("zero logits give ln(n/k)") {
        // Orthogonal halves of the space: every text/patch product is zero.
        std::vector<double> t(5 * 12, 0.0), p(6 * 12, 0.0);
        for (std::size_t i = 0; i < 5; ++i) t[i * 12 + i] = 1;
        for (std::size_t j = 0; j < 6; ++j) p[j * 12 + 6 + j] = 1;
        const auto text = Tensor::from({5, 12}, t), patch = Tensor::from({6, 12}, p);
        const auto l = pa_loss(text, patch, normalize_alignment(fig), tau);
        CHECK(l.token_to_patch.item() == doctest::Approx(std::log(6.0 / 2)).epsilon(1e-14));
        CHECK(l.patch_to_token.item() == doctest::Approx(std::log(5.0 / 2)).epsilon(1e-14));
        CHECK(l.combined.item() == doctest::Approx(0.5 * (std::log(3.0) + std::log(2.5))).epsilon(1e-14));
    }
    SUBCASE("scalar oracle on the figure fixture") {
        std::mt19937_64 rng(26);
        for (int trial = 0; trial < 10; ++trial) {
            const auto text = unit_rows(rng, 5, 8), patch = unit_rows(rng, 6, 8);
            const auto l = pa_loss(text, patch, normalize_alignment(fig), tau);
            const auto [tpa, pta] = oracle::patch_alignment(text, patch, fig, tau);
            CHECK(l.token_to_patch.item() == doctest::Approx(tpa).epsilon(1e-12));
            CHECK(l.patch_to_token.item() == doctest::Approx(pta).epsilon(1e-12));
        }
    }
    SUBCASE("matching distribution gives zero") {
        // One patch per token and a huge logit on it: p equals A up to e^-big.
        AlignmentTable a(2, 3);
        a.at(0, 1) = a.at(1, 2) = 1;
        const auto text = Tensor::from({2, 3}, {0, 1, 0, 0, 0, 1});
        const auto patch = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        const auto l = pa_loss(text, patch, normalize_alignment(a), 1e-3);
        CHECK(l.token_to_patch.item() == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("relabeling patches with the columns of A") {
        std::mt19937_64 rng(27);
        const auto text = unit_rows(rng, 5, 8), patch = unit_rows(rng, 6, 8);
        const std::vector<std::size_t> perm{3, 5, 0, 4, 1, 2};
        AlignmentTable b(5, 6);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 6; ++j) b.at(i, j) = fig.at(i, perm[j]);
        const auto l1 = pa_loss(text, patch, normalize_alignment(fig), tau).combined.item();
        const auto l2 = pa_loss(text, gather_rows(patch, perm), normalize_alignment(b), tau).combined.item();
        CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
    }
    SUBCASE("logit scaling equals a temperature change") {
        std::mt19937_64 rng(28);
        const auto text = unit_rows(rng, 5, 8), patch = unit_rows(rng, 6, 8);
        const auto a = normalize_alignment(fig);
        const double scaled = pa_loss(scale(text, 0.5 / 0.07), patch, a, 0.5).combined.item();
        CHECK(scaled == doctest::Approx(pa_loss(text, patch, a, 0.07).combined.item()).epsilon(1e-12));
    }
    SUBCASE("sharpening temperature drives the token term to zero") {
        // Each token's aligned patch is its strictly most similar one.
        AlignmentTable a(2, 3);
        a.at(0, 0) = a.at(1, 2) = 1;
        const auto text = Tensor::from({2, 2}, {1, 0, 0, 1});
        const auto patch = Tensor::from({3, 2}, {0.9, 0.1, 0.5, 0.5, 0.2, 0.8});
        double last = std::numeric_limits<double>::infinity();
        for (double t : {0.5, 0.07, 0.01}) {
            const double v = pa_loss(text, patch, normalize_alignment(a), t).token_to_patch.item();
            CHECK(v < last);
            last = v;
        }
        CHECK(last < 1e-6);
    }
    SUBCASE("gradients") {
        std::mt19937_64 rng(29);
        auto text = unit_rows(rng, 5, 4), patch = unit_rows(rng, 6, 4);
        const auto a = normalize_alignment(fig);
        const auto r =
            testing::check_gradients([&] { return pa_loss(text, patch, a, 0.5).combined; }, {text, patch});
        CHECK(r.max_rel <= 1e-6);
    }
}

TEST_CASE("combined loss") {
    ModelConfig cfg;
    cfg.m_max = 4;
    cfg.det_tokens = 2;
    const std::size_t K = cfg.classes();
    GroundTruth gt;
    gt.boxes = {{0.5, 0.5, 0.5, 0.5}};
    gt.token_sets = {{0, 1}};
    gt.tokens = 3;
    gt.alignment = build_alignment(gt, {16, 16, 8});

    std::mt19937_64 rng(30);
    Predictions preds;
    preds.boxes = Tensor::from({2, 4}, {0.9, 0.9, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5});
    std::vector<double> probs(2 * K, 0.0);
    probs[0] = 1.0;  // row 0: no-text
    const auto t = gt.class_target(0, K);
    std::copy(t.begin(), t.end(), probs.begin() + K);
    preds.class_probs = Tensor::from({2, K}, probs);
    AlignmentProjections proj{unit_rows(rng, 3, 4), unit_rows(rng, 2, 4), unit_rows(rng, 3, 4),
                              unit_rows(rng, 4, 4)};
    Assignment as;
    as.pairs = {{1, 0}};

    const auto l = total_loss(preds, proj, gt, as, cfg);
    CHECK(std::fabs(l.bbox.item()) <= 1e-12);
    // Entropy of the matched target; the perfect no-text row adds nothing but
    // still counts with its reduced weight.
    const double w = cfg.no_text_weight;
    CHECK(l.cls.item() == doctest::Approx(std::log(2.0) / (1 + w)).epsilon(1e-14));
    const auto v = l.values();
    CHECK(v.oa == doctest::Approx((v.ota + v.toa) / 2).epsilon(1e-15));
    CHECK(v.pa == doctest::Approx((v.tpa + v.pta) / 2).epsilon(1e-15));
    CHECK(v.total == doctest::Approx(v.bbox + v.cls + v.oa + v.pa).epsilon(1e-15));
    for (double x : {v.bbox, v.cls, v.ota, v.toa, v.tpa, v.pta}) CHECK(x >= 0);

    // Table-3 style ablations.
    auto cl_re = cfg;
    cl_re.use_object_alignment = cl_re.use_patch_alignment = false;
    const auto base = total_loss(preds, proj, gt, as, cl_re).values();
    CHECK(base.oa == 0.0);
    CHECK(base.pa == 0.0);
    CHECK(base.total == doctest::Approx(v.bbox + v.cls).epsilon(1e-15));
    auto with_oa = cl_re;
    with_oa.use_object_alignment = true;
    const auto oa_only = total_loss(preds, proj, gt, as, with_oa).values();
    CHECK(oa_only.oa == v.oa);
    CHECK(oa_only.pa == 0.0);

    Assignment partial;
    CHECK_THROWS_AS(total_loss(preds, proj, gt, partial, cfg), ContractError);
}
