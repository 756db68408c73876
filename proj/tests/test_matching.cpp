#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "yoro/errors.hpp"
#include "yoro/losses.hpp"
#include "yoro/matching.hpp"

using namespace yoro;

namespace {

CostMatrix random_cost(std::mt19937_64& rng, std::size_t q, std::size_t g) {
    std::uniform_real_distribution<double> u(0.0, 10.0);
    CostMatrix c(q, g);
    for (double& v : c.values) v = u(rng);
    return c;
}

void check_injective(const Assignment& a, std::size_t g) {
    REQUIRE(a.pairs.size() == g);
    std::vector<std::size_t> dets;
    for (std::size_t k = 0; k < g; ++k) {
        CHECK(a.pairs[k].second == k);
        dets.push_back(a.pairs[k].first);
    }
    std::sort(dets.begin(), dets.end());
    CHECK(std::adjacent_find(dets.begin(), dets.end()) == dets.end());
}

}  // namespace

TEST_CASE("hungarian small cases") {
    CostMatrix col(4, 1);
    col.values = {3, 1, 2, 1};
    const auto a = hungarian(col);
    CHECK(a.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}});
    CHECK(a.total_cost == 1);

    // Zero on a permutation, one elsewhere.
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    CostMatrix p(4, 4, 1.0);
    for (std::size_t k = 0; k < 4; ++k) p.at(perm[k], k) = 0.0;
    const auto b = hungarian(p);
    CHECK(b.total_cost == 0.0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(b.detection_for(k) == perm[k]);

    // Ties: lowest detection takes the lowest ground truth.
    const auto t = hungarian(CostMatrix(3, 2, 0.5));
    CHECK(t.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}});

    CHECK_THROWS_AS(hungarian(CostMatrix(2, 3)), ContractError);
    CHECK_THROWS_AS(hungarian(CostMatrix(2, 0)), ContractError);
    CostMatrix bad(2, 1);
    bad.values = {1, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(hungarian(bad), NumericError);
}

TEST_CASE("hungarian equals enumeration on 5x3") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto c = random_cost(rng, 5, 3);
        const auto a = hungarian(c);
        check_injective(a, 3);
        CHECK(std::fabs(a.total_cost - oracle::brute_force_assignment(c)) <= 1e-12);
    }
}

TEST_CASE("assignment is invariant to shifts and positive scaling") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        // Integer costs make ties common, which exercises the canonical choice.
        std::uniform_int_distribution<int> u(0, 3);
        CostMatrix c(4, 3);
        for (double& v : c.values) v = u(rng);
        const auto base = hungarian(c);
        CostMatrix shifted = c, scaled = c;
        for (double& v : shifted.values) v += 7.0;
        for (double& v : scaled.values) v *= 2.5;
        CHECK(hungarian(shifted).pairs == base.pairs);
        CHECK(hungarian(scaled).pairs == base.pairs);
    }
}

TEST_CASE("build_cost") {
    ModelConfig cfg;
    cfg.m_max = 4;
    GroundTruth gt;
    gt.boxes = {{0.4, 0.5, 0.2, 0.3}};
    gt.token_sets = {{0, 2}};
    gt.tokens = 3;
    const std::size_t K = cfg.classes();
    const auto target = gt.class_target(0, K);
    CHECK(target == std::vector<double>{0, 0.5, 0, 0.5, 0});

    // Perfect box and distribution: only the target entropy remains.
    std::vector<Box> boxes{{0.4, 0.5, 0.2, 0.3}, {0.7, 0.2, 0.1, 0.1}};
    std::vector<double> probs(target);
    probs.insert(probs.end(), {0.6, 0.1, 0.1, 0.1, 0.1});
    const auto c = build_cost(boxes, probs, gt, cfg);
    CHECK(c.at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // Swapping predictions swaps rows.
    std::vector<Box> swapped{boxes[1], boxes[0]};
    std::vector<double> sprobs(probs.begin() + 5, probs.end());
    sprobs.insert(sprobs.end(), probs.begin(), probs.begin() + 5);
    const auto s = build_cost(swapped, sprobs, gt, cfg);
    CHECK(s.at(0, 0) == c.at(1, 0));
    CHECK(s.at(1, 0) == c.at(0, 0));

    // Matches the loss module on the same pair.
    const auto row = Tensor::from({1, 4}, {boxes[1].cx, boxes[1].cy, boxes[1].w, boxes[1].h});
    const double bbox = bbox_loss(row, gt.boxes[0], cfg.lambda_l1, cfg.lambda_giou).item();
    const auto p1 = Tensor::from({1, K}, std::vector<double>(probs.begin() + 5, probs.end()));
    const double cls = cls_loss(p1, target).value.item();
    CHECK(c.at(1, 0) == doctest::Approx(bbox + cls).epsilon(1e-12));
}
