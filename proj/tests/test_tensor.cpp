#include <doctest.h>

#include <sstream>

#include "lpsc/tensor.hpp"
#include "support.hpp"

using namespace lpsc;
using lpsc::testing::dot;
using lpsc::testing::numeric_gradient;
using lpsc::testing::random_away_from_zero;
using lpsc::testing::random_tensor;

namespace {

// Six nested loops straight from the definition; independent of im2col.
Tensor conv_loops(const Tensor& x, const Tensor& w, Size2 s, Size2 p) {
    const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    const std::size_t oh = (h + 2 * p.rows - kh) / s.rows + 1, ow = (wd + 2 * p.cols - kw) / s.cols + 1;
    Tensor out({oh, ow, cout});
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t co = 0; co < cout; ++co) {
                double acc = 0.0;
                for (std::size_t m = 0; m < kh; ++m)
                    for (std::size_t n = 0; n < kw; ++n)
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const long r = static_cast<long>(i * s.rows + m) - static_cast<long>(p.rows);
                            const long c = static_cast<long>(j * s.cols + n) - static_cast<long>(p.cols);
                            if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(wd)) continue;
                            acc += x.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ci) *
                                   w.at(m, n, ci, co);
                        }
                out.at(i, j, co) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("conv2d scalar and all-ones cases") {
    CHECK(conv2d(Tensor({1, 1, 1}, 5.0), ConvKernel(Tensor({1, 1, 1, 1}, 3.0)), {1, 1}, {0, 0})[0] == 15.0);
    const Tensor out = conv2d(Tensor({3, 3, 1}, 1.0), ConvKernel(Tensor({3, 3, 1, 1}, 1.0)), {1, 1}, {0, 0});
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == 9.0);
}

TEST_CASE("conv2d matches the loop oracle") {
    std::mt19937_64 rng(11);
    const Tensor x = random_tensor({8, 8, 2}, rng);
    const Tensor w = random_tensor({3, 3, 2, 4}, rng);
    const Tensor got = conv2d(x, ConvKernel(w), {1, 1}, {1, 1});
    CHECK(got.shape() == Shape{8, 8, 4});
    CHECK(max_relative_error(got, conv_loops(x, w, {1, 1}, {1, 1})) <= 1e-14);

    // non-square kernel, asymmetric stride and padding
    const Tensor w2 = random_tensor({3, 5, 2, 3}, rng);
    const Tensor got2 = conv2d(x, ConvKernel(w2), {2, 1}, {0, 2});
    CHECK(max_relative_error(got2, conv_loops(x, w2, {2, 1}, {0, 2})) <= 1e-14);
}

TEST_CASE("conv2d output extent follows the floor formula") {
    const Tensor x({7, 9, 1});
    const Tensor out = conv2d(x, ConvKernel(Tensor({3, 3, 1, 2})), {2, 3}, {1, 0});
    CHECK(out.shape() == Shape{(7 + 2 - 3) / 2 + 1, (9 - 3) / 3 + 1, 2});
}

TEST_CASE("conv2d errors") {
    CHECK_THROWS_AS(conv2d(Tensor({4, 4, 2}), ConvKernel(Tensor({3, 3, 1, 1})), {1, 1}, {0, 0}), ValidationError);
    CHECK_THROWS_AS(conv2d(Tensor({2, 2, 1}), ConvKernel(Tensor({3, 3, 1, 1})), {1, 1}, {0, 0}), ValidationError);
    CHECK_THROWS_AS(ConvKernel(Tensor({2, 3, 1, 1})), ValidationError);
}

TEST_CASE("conv2d is linear and the identity kernel is exact") {
    std::mt19937_64 rng(3);
    const Tensor x = random_tensor({6, 7, 3}, rng), y = random_tensor({6, 7, 3}, rng);
    const ConvKernel k(random_tensor({3, 3, 3, 2}, rng));
    const double a = 0.37, b = -1.9;
    const Tensor lhs = conv2d(x * a + y * b, k, {1, 1}, {1, 1});
    const Tensor rhs = conv2d(x, k, {1, 1}, {1, 1}) * a + conv2d(y, k, {1, 1}, {1, 1}) * b;
    CHECK(max_relative_error(lhs, rhs) <= 1e-12);

    Tensor id({3, 3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c) id.at(1, 1, c, c) = 1.0;
    CHECK(conv2d(x, ConvKernel(id), {1, 1}, {1, 1}) == x);
}

TEST_CASE("conv2d_backward: zero, 1x1 and finite differences") {
    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({5, 6, 3}, rng);
    const ConvKernel k(random_tensor({3, 3, 3, 2}, rng), random_tensor({2}, rng));

    const ConvGrads zero = conv2d_backward(x, k, Tensor({5, 6, 2}), {1, 1}, {1, 1});
    CHECK(max_abs(zero.input) == 0.0);
    CHECK(max_abs(zero.weights) == 0.0);

    const ConvGrads one = conv2d_backward(Tensor({1, 1, 1}, 2.5), ConvKernel(Tensor({1, 1, 1, 1}, 7.0)),
                                          Tensor({1, 1, 1}, -3.0), {1, 1}, {0, 0});
    CHECK(one.weights[0] == 2.5 * -3.0);
    CHECK(one.input[0] == 7.0 * -3.0);

    for (const Size2 stride : {Size2{1, 1}, Size2{2, 1}}) {
        const Tensor probe = random_tensor(conv2d(x, k, stride, {1, 1}).shape(), rng);
        const ConvGrads g = conv2d_backward(x, k, probe, stride, {1, 1});
        const auto loss_x = [&](const Tensor& xv) { return dot(conv2d(xv, k, stride, {1, 1}), probe); };
        const auto loss_w = [&](const Tensor& wv) { return dot(conv2d(x, ConvKernel(wv, k.bias), stride, {1, 1}), probe); };
        const auto loss_b = [&](const Tensor& bv) { return dot(conv2d(x, ConvKernel(k.weights, bv), stride, {1, 1}), probe); };
        CHECK(max_relative_error(g.input, numeric_gradient(loss_x, x)) <= 1e-5);
        CHECK(max_relative_error(g.weights, numeric_gradient(loss_w, k.weights)) <= 1e-5);
        CHECK(max_relative_error(*g.bias, numeric_gradient(loss_b, *k.bias)) <= 1e-5);
    }
}

TEST_CASE("conv2d_backward rejects a mismatched gradient") {
    CHECK_THROWS_AS(conv2d_backward(Tensor({4, 4, 1}), ConvKernel(Tensor({3, 3, 1, 1})), Tensor({4, 4, 1}), {1, 1},
                                    {0, 0}),
                    ValidationError);
}

TEST_CASE("relu and softmax cross-entropy definitions") {
    const Tensor r = relu(Tensor({2}, std::vector<double>{-1.0, 2.0}));
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 2.0);

    for (std::size_t k : {2u, 5u, 10u}) {
        const std::size_t label = 1;
        const LossResult lr = softmax_cross_entropy(Tensor({k}, 0.3), std::span<const std::size_t>(&label, 1));
        CHECK(lr.loss == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-14));
    }
    const std::size_t bad = 3;
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({3}), std::span<const std::size_t>(&bad, 1)), ValidationError);
}

TEST_CASE("layer backward passes match finite differences") {
    std::mt19937_64 rng(17);

    SUBCASE("dense") {
        const Tensor x = random_tensor({7}, rng), w = random_tensor({7, 4}, rng), b = random_tensor({4}, rng);
        const Tensor probe = random_tensor({4}, rng);
        const DenseGrads g = dense_backward(x, w, probe);
        CHECK(max_relative_error(g.input, numeric_gradient([&](const Tensor& v) { return dot(dense(v, w, &b), probe); }, x)) <= 1e-5);
        CHECK(max_relative_error(g.weights, numeric_gradient([&](const Tensor& v) { return dot(dense(x, v, &b), probe); }, w)) <= 1e-5);
        CHECK(max_relative_error(g.bias, numeric_gradient([&](const Tensor& v) { return dot(dense(x, w, &v), probe); }, b)) <= 1e-5);
    }
    SUBCASE("relu") {
        const Tensor x = random_away_from_zero({4, 5, 3}, rng);
        const Tensor probe = random_tensor(x.shape(), rng);
        CHECK(max_relative_error(relu_backward(x, probe),
                                 numeric_gradient([&](const Tensor& v) { return dot(relu(v), probe); }, x)) <= 1e-4);
    }
    SUBCASE("max and mean pooling") {
        const Tensor x = random_tensor({6, 6, 2}, rng);
        for (const auto& [win, st] : {std::pair{Size2{2, 2}, Size2{2, 2}}, std::pair{Size2{3, 3}, Size2{1, 1}}}) {
            const Tensor probe_max = random_tensor(max_pool2d(x, win, st).shape(), rng);
            CHECK(max_relative_error(max_pool2d_backward(x, probe_max, win, st),
                                     numeric_gradient([&](const Tensor& v) { return dot(max_pool2d(v, win, st), probe_max); }, x)) <= 1e-4);
            const Tensor probe_mean = random_tensor(mean_pool2d(x, win, st).shape(), rng);
            CHECK(max_relative_error(mean_pool2d_backward(x, probe_mean, win, st),
                                     numeric_gradient([&](const Tensor& v) { return dot(mean_pool2d(v, win, st), probe_mean); }, x)) <= 1e-4);
        }
    }
    SUBCASE("softmax cross-entropy") {
        const Tensor z = random_tensor({3, 4}, rng);
        const std::vector<std::size_t> labels{0, 3, 2};
        const LossResult lr = softmax_cross_entropy(z, labels);
        CHECK(max_relative_error(lr.grad, numeric_gradient([&](const Tensor& v) { return softmax_cross_entropy(v, labels).loss; }, z)) <= 1e-5);
    }
}

TEST_CASE("max pooling routes ties to the first cell") {
    Tensor x({2, 2, 1}, 1.0);
    const Tensor g = max_pool2d_backward(x, Tensor({1, 1, 1}, 1.0), {2, 2}, {2, 2});
    CHECK(g[0] == 1.0);
    CHECK(g[1] + g[2] + g[3] == 0.0);
}

TEST_CASE("tensor construction rejects non-finite external data") {
    CHECK_THROWS_AS(Tensor::from_external({2}, {1.0, std::nan("")}), ValidationError);
    CHECK_THROWS_AS(Tensor::from_external({1}, {INFINITY}), ValidationError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("TNSR files round-trip bitwise and reject corruption") {
    std::mt19937_64 rng(2);
    const Tensor t = random_tensor({3, 4, 2}, rng, -1e6, 1e6);
    std::stringstream ss;
    write_tensor(ss, t);
    const std::string bytes = ss.str();
    CHECK(bytes.rfind("TNSR v1 3 3 4 2\n", 0) == 0);
    CHECK(bytes.size() == std::string("TNSR v1 3 3 4 2\n").size() + 24 * 8);
    std::stringstream in(bytes);
    CHECK(read_tensor(in) == t);

    std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_tensor(truncated), FormatError);
    std::stringstream bad_magic("TNSX v1 1 1\n        ");
    CHECK_THROWS_AS(read_tensor(bad_magic), FormatError);
}

TEST_CASE("TNSR payload is little-endian float64") {
    std::stringstream ss;
    write_tensor(ss, Tensor({1}, std::vector<double>{1.0}));
    const std::string bytes = ss.str();
    const std::string payload = bytes.substr(bytes.find('\n') + 1);
    REQUIRE(payload.size() == 8);
    // 1.0 == 0x3FF0000000000000
    CHECK(static_cast<unsigned char>(payload[7]) == 0x3F);
    CHECK(static_cast<unsigned char>(payload[6]) == 0xF0);
    for (int i = 0; i < 6; ++i) CHECK(payload[i] == 0);
}
