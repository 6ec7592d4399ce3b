#include <doctest.h>

#include <set>

#include "lpsc/baselines.hpp"
#include "support.hpp"

using namespace lpsc;
using lpsc::testing::dot;
using lpsc::testing::numeric_gradient;
using lpsc::testing::random_tensor;

namespace {

// Loop oracle for dilated convolution, written against the definition.
Tensor dilated_loops(const Tensor& x, const Tensor& w, std::size_t rate, std::size_t stride, std::size_t pad) {
    const long H = static_cast<long>(x.dim(0)), W = static_cast<long>(x.dim(1));
    const std::size_t k = w.dim(0), cin = w.dim(2), cout = w.dim(3);
    const std::size_t ext = (k - 1) * rate + 1;
    const std::size_t oh = (x.dim(0) + 2 * pad - ext) / stride + 1, ow = (x.dim(1) + 2 * pad - ext) / stride + 1;
    Tensor out({oh, ow, cout});
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
            for (std::size_t co = 0; co < cout; ++co) {
                double s = 0.0;
                for (std::size_t m = 0; m < k; ++m)
                    for (std::size_t n = 0; n < k; ++n) {
                        const long r = static_cast<long>(i * stride + m * rate) - static_cast<long>(pad);
                        const long c = static_cast<long>(j * stride + n * rate) - static_cast<long>(pad);
                        if (r < 0 || c < 0 || r >= H || c >= W) continue;
                        for (std::size_t ci = 0; ci < cin; ++ci)
                            s += x.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ci) * w.at(m, n, ci, co);
                    }
                out.at(i, j, co) = s;
            }
    return out;
}

}  // namespace

TEST_CASE("dilated convolution") {
    std::mt19937_64 rng(31);
    const Tensor x = random_tensor({9, 10, 2}, rng);
    const ConvKernel k(random_tensor({3, 3, 2, 3}, rng), random_tensor({3}, rng));

    SUBCASE("rate 1 is conv2d") {
        DilatedConfig c{3, 1, {1, 1}, {1, 1}};
        CHECK(dilated_conv2d(x, k, c) == conv2d(x, k, {1, 1}, {1, 1}));
    }
    SUBCASE("rate 2 touches only offsets {-2, 0, 2}^2") {
        DilatedConfig c{3, 2, {1, 1}, {2, 2}};
        const Tensor base = dilated_conv2d(x, ConvKernel(k.weights), c);
        // Output (4, 4) centers on input (4, 4).
        for (long dr = -4; dr <= 4; ++dr)
            for (long dc = -4; dc <= 4; ++dc) {
                Tensor y = x;
                y.at(static_cast<std::size_t>(4 + dr), static_cast<std::size_t>(4 + dc), 0) += 1.0;
                const bool tap = dr % 2 == 0 && dc % 2 == 0 && std::abs(dr) <= 2 && std::abs(dc) <= 2;
                const bool changed = dilated_conv2d(y, ConvKernel(k.weights), c).at(4, 4, 0) != base.at(4, 4, 0);
                CHECK(changed == tap);
            }
    }
    SUBCASE("loop oracle") {
        for (std::size_t rate : {1u, 2u, 3u})
            for (std::size_t stride : {1u, 2u}) {
                DilatedConfig c{3, rate, {stride, stride}, {rate, rate}};
                CHECK(max_relative_error(dilated_conv2d(x, ConvKernel(k.weights), c),
                                         dilated_loops(x, k.weights, rate, stride, rate)) <= 1e-12);
            }
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS((DilatedConfig{3, 0, {1, 1}, {0, 0}}.validate()), ValidationError);
        CHECK_THROWS_AS((DilatedConfig{4, 1, {1, 1}, {0, 0}}.validate()), ValidationError);
        DilatedConfig big{3, 6, {1, 1}, {0, 0}};   // extent 13 > 9
        CHECK_THROWS_AS(dilated_conv2d(x, k, big), ValidationError);
    }
    SUBCASE("finite differences") {
        const Tensor xs = random_tensor({8, 8, 3}, rng);
        const ConvKernel ks(random_tensor({3, 3, 3, 2}, rng), random_tensor({2}, rng));
        for (std::size_t rate : {1u, 2u}) {
            DilatedConfig c{3, rate, {2, 1}, {1, 2}};
            const Tensor probe = random_tensor(dilated_conv2d(xs, ks, c).shape(), rng);
            const ConvGrads g = dilated_conv2d_backward(xs, ks, probe, c);
            CHECK(max_relative_error(g.input, numeric_gradient([&](const Tensor& v) {
                                         return dot(dilated_conv2d(v, ks, c), probe);
                                     }, xs)) <= 1e-4);
            CHECK(max_relative_error(g.weights, numeric_gradient([&](const Tensor& v) {
                                         return dot(dilated_conv2d(xs, ConvKernel(v, ks.bias), c), probe);
                                     }, ks.weights)) <= 1e-4);
            CHECK(max_relative_error(*g.bias, numeric_gradient([&](const Tensor& v) {
                                         return dot(dilated_conv2d(xs, ConvKernel(ks.weights, v), c), probe);
                                     }, *ks.bias)) <= 1e-4);
        }
    }
}

TEST_CASE("square region-shared convolution") {
    std::mt19937_64 rng(32);
    const Tensor x = random_tensor({12, 11, 2}, rng);

    SUBCASE("pool 1 is conv2d") {
        const ConvKernel k(random_tensor({3, 3, 2, 2}, rng));
        SquareShareConfig c{3, 1, {1, 1}, {1, 1}};
        CHECK(square_share_conv2d(x, k, c) == conv2d(x, k, {1, 1}, {1, 1}));
    }
    SUBCASE("expanded 9x9 kernel holds 9 distinct blocks") {
        const Tensor region = random_tensor({3, 3, 1, 1}, rng);
        const Tensor full = expand_square_weights(region, 3);
        REQUIRE(full.shape() == Shape{9, 9, 1, 1});
        std::set<double> values(full.data().begin(), full.data().end());
        CHECK(values.size() == 9);
        for (std::size_t r = 0; r < 9; ++r)
            for (std::size_t c = 0; c < 9; ++c) CHECK(full.at(r, c, 0, 0) == region.at(r / 3, c / 3, 0, 0));
        CHECK(max_relative_error(fold_square_weights(full, 3), region * 9.0) <= 1e-15);
    }
    SUBCASE("loop oracle with block lookup") {
        const Tensor rw = random_tensor({3, 3, 2, 3}, rng);
        Tensor full({9, 9, 2, 3});
        for (std::size_t r = 0; r < 9; ++r)
            for (std::size_t c = 0; c < 9; ++c)
                for (std::size_t ci = 0; ci < 2; ++ci)
                    for (std::size_t co = 0; co < 3; ++co) full.at(r, c, ci, co) = rw.at(r / 3, c / 3, ci, co);
        SquareShareConfig c{9, 3, {2, 2}, {4, 4}};
        CHECK(max_relative_error(square_share_conv2d(x, ConvKernel(rw), c), dilated_loops(x, full, 1, 2, 4)) <= 1e-12);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS((SquareShareConfig{9, 2, {1, 1}, {0, 0}}.validate()), ValidationError);
        CHECK_THROWS_AS((SquareShareConfig{9, 0, {1, 1}, {0, 0}}.validate()), ValidationError);
        const ConvKernel wrong(random_tensor({1, 1, 2, 1}, rng));
        CHECK_THROWS_AS(square_share_conv2d(x, wrong, SquareShareConfig{9, 3, {1, 1}, {4, 4}}), ValidationError);
    }
    SUBCASE("finite differences") {
        const Tensor xs = random_tensor({8, 8, 3}, rng);
        const ConvKernel rk(random_tensor({3, 3, 3, 2}, rng), random_tensor({2}, rng));
        SquareShareConfig c{3, 1, {1, 1}, {1, 1}};
        SquareShareConfig c9{9, 3, {1, 2}, {4, 3}};
        for (const SquareShareConfig& cfg : {c, c9}) {
            const ConvKernel& kk = rk;
            const Tensor probe = random_tensor(square_share_conv2d(xs, kk, cfg).shape(), rng);
            const ConvGrads g = square_share_conv2d_backward(xs, kk, probe, cfg);
            CHECK(g.weights.shape() == kk.weights.shape());
            CHECK(max_relative_error(g.input, numeric_gradient([&](const Tensor& v) {
                                         return dot(square_share_conv2d(v, kk, cfg), probe);
                                     }, xs)) <= 1e-4);
            CHECK(max_relative_error(g.weights, numeric_gradient([&](const Tensor& v) {
                                         return dot(square_share_conv2d(xs, ConvKernel(v, kk.bias), cfg), probe);
                                     }, kk.weights)) <= 1e-4);
            CHECK(max_relative_error(*g.bias, numeric_gradient([&](const Tensor& v) {
                                         return dot(square_share_conv2d(xs, ConvKernel(kk.weights, v), cfg), probe);
                                     }, *kk.bias)) <= 1e-4);
        }
    }
}
