#include "doctest.h"
#include "support.hpp"
#include "yoro/errors.hpp"
#include "yoro/tensor.hpp"

using namespace yoro;
using testing::check_gradients;
using testing::random_leaf;

namespace {

// Scalar probe: a fixed random weighting makes sum-based checks sensitive to
// every output element.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> w(y.size());
    for (double& x : w) x = u(rng);
    return sum(mul(y, Tensor::from(y.shape(), w)));
}

}  // namespace

TEST_CASE("matmul values") {
    const auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
    const auto p = matmul(eye, m);
    CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 2, 3, 4});
    CHECK(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11);
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul gradients against central differences") {
    std::mt19937_64 rng(1);
    auto a = random_leaf(rng, {3, 4}), b = random_leaf(rng, {4, 2});
    const auto r = check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
    CHECK(r.max_rel <= 1e-6);
    const auto r2 = check_gradients([&] { return probe(matmul_nt(a, transpose(b))); }, {a, b});
    CHECK(r2.max_rel <= 1e-6);
}

TEST_CASE("softmax") {
    const auto s = softmax(Tensor::from({1, 3}, {0, 0, 0}));
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const auto big = softmax(Tensor::from({1, 2}, {1000, 0}));
    CHECK(std::fabs(big[0] - 1.0) <= 1e-12);
    CHECK(std::fabs(big[1]) <= 1e-12);

    std::mt19937_64 rng(2);
    auto x = random_leaf(rng, {1, 5});
    // Full Jacobian: one probe per output coordinate.
    for (std::size_t k = 0; k < 5; ++k) {
        const auto r = check_gradients([&] { return element(softmax(x), 0, k); }, {x});
        CHECK(r.max_rel <= 1e-6);
    }
    auto m = random_leaf(rng, {4, 3});
    for (int axis : {0, 1}) {
        const auto y = softmax(m, axis);
        const std::size_t slices = axis == 1 ? 4 : 3, len = axis == 1 ? 3 : 4;
        for (std::size_t s = 0; s < slices; ++s) {
            double total = 0;
            for (std::size_t i = 0; i < len; ++i) total += axis == 1 ? y.at(s, i) : y.at(i, s);
            CHECK(std::fabs(total - 1) <= 1e-9);
        }
        CHECK(check_gradients([&] { return probe(softmax(m, axis)); }, {m}).max_rel <= 1e-6);
        CHECK(check_gradients([&] { return probe(log_softmax(m, axis)); }, {m}).max_rel <= 1e-6);
    }
    CHECK_THROWS_AS(softmax(Tensor::from({1, 2}, {std::nan(""), 0})), NumericError);
}

TEST_CASE("layer norm") {
    const auto one = Tensor::full({4}, 1.0), zero = Tensor::zeros({4});
    const auto c = layer_norm(Tensor::from({1, 4}, {5, 5, 5, 5}), one, zero);
    for (double v : c.data()) CHECK(v == 0.0);
    const auto pm = layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
    CHECK(pm[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(pm[1] == doctest::Approx(-1.0).epsilon(1e-4));

    std::mt19937_64 rng(3);
    auto x = random_leaf(rng, {3, 8});
    auto g = random_leaf(rng, {8}), b = random_leaf(rng, {8});
    const auto y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0, var = 0;
        for (std::size_t c2 = 0; c2 < 8; ++c2) mean += y.at(r, c2) / 8;
        for (std::size_t c2 = 0; c2 < 8; ++c2) var += (y.at(r, c2) - mean) * (y.at(r, c2) - mean) / 8;
        CHECK(std::fabs(mean) <= 1e-9);
        CHECK(std::fabs(var - 1) <= 1e-4);
    }
    CHECK(check_gradients([&] { return probe(layer_norm(x, g, b)); }, {x, g, b}).max_rel <= 1e-6);
}

TEST_CASE("elementwise suite") {
    CHECK(gelu(Tensor::scalar(0)).item() == 0.0);
    CHECK(sigmoid(Tensor::scalar(0)).item() == 0.5);

    std::mt19937_64 rng(4);
    auto a = random_leaf(rng, {2, 3}), b = random_leaf(rng, {2, 3});
    auto pos = random_leaf(rng, {2, 3}, 0.5, 2.0);
    auto row = random_leaf(rng, {3});
    const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"add", [&] { return probe(add(a, b)); }},
        {"sub", [&] { return probe(sub(a, b)); }},
        {"mul", [&] { return probe(mul(a, b)); }},
        {"div", [&] { return probe(div(a, pos)); }},
        {"scale", [&] { return probe(scale(a, -1.7)); }},
        {"add_scalar", [&] { return probe(add_scalar(a, 0.3)); }},
        {"gelu", [&] { return probe(gelu(a)); }},
        {"sigmoid", [&] { return probe(sigmoid(a)); }},
        {"exp", [&] { return probe(exp(a)); }},
        {"log", [&] { return probe(log(pos)); }},
        {"add_row", [&] { return probe(add_row(a, row)); }},
        {"mean", [&] { return mean(mul(a, b)); }},
        {"l2_normalize_rows", [&] { return probe(l2_normalize_rows(a)); }},
        {"concat_rows", [&] { return probe(concat_rows(std::vector<Tensor>{a, b})); }},
        {"concat_cols", [&] { return probe(concat_cols(std::vector<Tensor>{a, b})); }},
        {"slice_rows", [&] { return probe(slice_rows(concat_rows(std::vector<Tensor>{a, b}), 1, 3)); }},
        {"slice_cols", [&] { return probe(slice_cols(a, 1, 3)); }},
        {"gather_rows", [&] { return probe(gather_rows(a, std::vector<std::size_t>{1, 0, 1})); }},
        {"transpose", [&] { return probe(transpose(a)); }},
        {"reshape", [&] { return probe(reshape(a, {3, 2})); }},
        {"element", [&] { return mul(element(a, 1, 2), element(b, 0, 1)); }},
    };
    for (const auto& [name, f] : cases) {
        CAPTURE(name);
        CHECK(check_gradients(f, {a, b, pos, row}).max_rel <= 1e-6);
    }
    // Nonsmooth ops away from their kinks.
    auto far = Tensor::from({1, 4}, {-1.5, -0.4, 0.6, 1.3}, true);
    auto other = Tensor::from({1, 4}, {0.1, 0.2, -0.3, 2.0}, true);
    CHECK(check_gradients([&] { return probe(abs(far)); }, {far}).max_rel <= 1e-6);
    CHECK(check_gradients([&] { return probe(clamp(far, -1, 1)); }, {far}).max_rel <= 1e-6);
    CHECK(check_gradients([&] { return probe(minimum(far, other)); }, {far, other}).max_rel <= 1e-6);
    CHECK(check_gradients([&] { return probe(maximum(far, other)); }, {far, other}).max_rel <= 1e-6);

    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(concat_rows(std::vector<Tensor>{Tensor::zeros({1, 2}), Tensor::zeros({1, 3})}), DimensionError);
}

TEST_CASE("backward semantics") {
    auto x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    auto y = Tensor::from({2}, {1, 2}, true);
    backward(sum(mul(y, y)));
    CHECK(y.grad()[0] == 2.0);
    CHECK(y.grad()[1] == 4.0);
    // Another pass without reset accumulates.
    backward(sum(mul(y, y)));
    CHECK(y.grad()[0] == 4.0);
    CHECK(y.grad()[1] == 8.0);
    // Cleared gradients read as absent, which callers treat as zero.
    y.zero_grad();
    CHECK_FALSE(y.has_grad());
    CHECK(y.grad().empty());

    CHECK_THROWS_AS(backward(x), ContractError);
}

TEST_CASE("backward visits each node once") {
    auto a = Tensor::from({1, 3}, {1, 2, 3}, true);
    // Diamond: b feeds two branches that rejoin; 6 recorded nodes in total
    // (a, b, c, d, e, loss).
    const auto b = scale(a, 2.0);
    const auto c = exp(b);
    const auto d = mul(b, b);
    const auto e = add(c, d);
    const auto loss = sum(e);
    CHECK(backward(loss) == 6);
    // d(loss)/da = 2 * (exp(2a) + 2 * 2a)
    for (std::size_t i = 0; i < 3; ++i) {
        const double av = a[i];
        CHECK(a.grad()[i] == doctest::Approx(2 * (std::exp(2 * av) + 4 * av)).epsilon(1e-12));
    }
}

TEST_CASE("alias shares values but not gradients") {
    auto w = Tensor::from({2}, {1, 2}, true);
    auto v = w.alias();
    backward(sum(mul(v, v)));
    CHECK_FALSE(w.has_grad());
    CHECK(v.grad()[1] == 4.0);
    w.mutable_data()[0] = 5.0;
    CHECK(v[0] == 5.0);
}

TEST_CASE("no-grad guard records nothing") {
    auto w = Tensor::from({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard g;
        y = sum(mul(w, w));
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(grad_enabled());
}
