#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "lpsc/analysis.hpp"
#include "support.hpp"

using namespace lpsc;
using lpsc::testing::random_tensor;

namespace {

LpscConfig lpsc_cfg(std::size_t size, std::size_t lr, std::size_t lt, std::size_t pad) {
    LpscConfig c;
    c.kernel_size = size;
    c.levels_r = lr;
    c.levels_theta = lt;
    c.padding = Size2::square(pad);
    return c;
}

LayerSpec no_bias(LayerSpec l) {
    l.bias = false;
    return l;
}

}  // namespace

TEST_CASE("parameter counts per channel pair") {
    const CostReport a = count_costs(NetSpec{{LayerSpec::lpsc_layer(1, lpsc_cfg(11, 3, 8, 5))}, {11, 11, 1}, 0});
    CHECK(a.layers[0].params_per_pair == 25);
    const CostReport b = count_costs(NetSpec{{LayerSpec::lpsc_layer(1, lpsc_cfg(5, 2, 6, 2))}, {11, 11, 1}, 0});
    CHECK(b.layers[0].params_per_pair == 13);
    const CostReport c = count_costs(NetSpec{{LayerSpec::conv(1, 11, 5)}, {11, 11, 1}, 0});
    CHECK(c.layers[0].params_per_pair == 121);
    for (std::size_t r = 2; r <= 9; ++r) {
        const CostReport conv = count_costs(NetSpec{{LayerSpec::conv(1, 2 * r + 1, r)}, {20, 20, 1}, 0});
        CHECK(conv.layers[0].params_per_pair == (2 * r + 1) * (2 * r + 1));
    }
    const CostReport d = count_costs(NetSpec{{LayerSpec::dilated(2, 3, 4, 4), LayerSpec::square_share(2, 9, 3, 4)},
                                             {12, 12, 3}, 0});
    CHECK(d.layers[0].params_per_pair == 9);
    CHECK(d.layers[1].params_per_pair == 9);
    CHECK(d.layers[0].params == 9 * 3 * 2 + 2);
}

TEST_CASE("exact multiply counts") {
    SUBCASE("1x1 conv") {
        const CostReport r = count_costs(NetSpec{{no_bias(LayerSpec::conv(5, 1))}, {7, 6, 3}, 0});
        CHECK(r.layers[0].multiplies == 7 * 6 * 3 * 5);
        CHECK(r.layers[0].adds == 7 * 6 * 3 * 5);
    }
    SUBCASE("dense") {
        const CostReport r = count_costs(NetSpec{{LayerSpec::simple(LayerKind::Flatten), LayerSpec::dense(4)}, {2, 3, 1}, 4});
        CHECK(r.layers[1].multiplies == 24);
        CHECK(r.layers[1].adds == 24 + 4);
        CHECK(r.total_params == 6 * 4 + 4);
    }
    SUBCASE("LPSC breakdown") {
        const LpscConfig c = lpsc_cfg(11, 3, 8, 5);
        const LayerCost l = lpsc_layer_cost(c, {16, 16, 3}, 4);
        const std::size_t loc = 16 * 16;
        CHECK(l.context_multiplies == loc * 24 * 3 * 4);
        CHECK(l.center_multiplies == loc * 3 * 4);
        CHECK(l.pool_adds == loc * 3 * 80);
        CHECK(l.pool_multiplies == loc * 3 * 24);
        CHECK(l.pooled_cells == loc * 24 * 3);
        CHECK(l.multiplies == l.context_multiplies + l.center_multiplies + l.pool_multiplies);
        CHECK(l.params == 25 * 12);

        LpscConfig sum = c;
        sum.pooling = PoolingMode::Sum;
        CHECK(lpsc_layer_cost(sum, {16, 16, 3}, 4).pool_multiplies == 0);
        LpscConfig no_center = c;
        no_center.center_conv = false;
        CHECK(lpsc_layer_cost(no_center, {16, 16, 3}, 4).center_multiplies == 0);
    }
}

TEST_CASE("LPSC cost scaling") {
    // Convolution multiplies depend on L_r L_theta and not on R.
    const Shape in{16, 16, 2};
    std::size_t prev = 0;
    for (std::size_t r : {2u, 4u, 6u, 8u}) {
        const LayerCost l = lpsc_layer_cost(lpsc_cfg(2 * r + 1, 2, 8, r), in, 3);
        const std::size_t expected = 256 * (16 * 2 * 3 + 2 * 3);
        CHECK(l.context_multiplies + l.center_multiplies == expected);
        CHECK(l.pool_adds <= 256 * 2 * (2 * r + 1) * (2 * r + 1));
        CHECK(l.pool_adds > prev);
        prev = l.pool_adds;
    }
    const LayerCost one = lpsc_layer_cost(lpsc_cfg(9, 1, 8, 4), in, 3);
    for (std::size_t lr : {2u, 3u, 4u}) {
        const LayerCost l = lpsc_layer_cost(lpsc_cfg(9, lr, 8, 4), in, 3);
        CHECK(l.context_multiplies == lr * one.context_multiplies);
    }
}

TEST_CASE("report totals and writers") {
    NetSpec spec{{LayerSpec::lpsc_layer(4, lpsc_cfg(5, 2, 8, 2)), LayerSpec::simple(LayerKind::Relu),
                  LayerSpec::simple(LayerKind::MeanPool, 8), LayerSpec::simple(LayerKind::Flatten), LayerSpec::dense(2)},
                 {8, 8, 1}, 2};
    const CostReport r = count_costs(spec);
    std::size_t p = 0, m = 0, a = 0, cells = 0;
    for (const auto& l : r.layers) {
        p += l.params;
        m += l.multiplies;
        a += l.adds;
        cells += l.pooled_cells;
    }
    CHECK(r.total_params == p);
    CHECK(r.total_multiplies == m);
    CHECK(r.total_adds == a);
    CHECK(r.total_pooled_cells == cells);
    CHECK(r.total_params == Network(spec, 0).parameter_count());
    // mean pool 8x8 over 4 channels: 63 adds and one multiply per output cell
    CHECK(r.layers[2].adds == 4 * 63);
    CHECK(r.layers[2].multiplies == 4);

    std::ostringstream table, csv;
    write_cost_table(table, r);
    write_cost_csv(csv, r);
    CHECK(table.str().find("lpsc") != std::string::npos);
    const std::string rows = csv.str();
    CHECK(rows.rfind("layer,kind,output,params,", 0) == 0);
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 5);

    const CostReport bigger = count_costs(spec, {16, 16, 1});
    CHECK(bigger.layers[0].context_multiplies == 4 * r.layers[0].context_multiplies);
}

TEST_CASE("gradient receptive fields") {
    SUBCASE("single 3x3 conv") {
        Network net(NetSpec{{LayerSpec::conv(2, 3, 1)}, {9, 9, 2}, 0}, 3);
        const RfReport rf = estimate_rf(net, {4, 4});
        CHECK(rf.height() == 3);
        CHECK(rf.width() == 3);
        CHECK(rf.support_cells == 9);
        CHECK(rf.top == 3);
        CHECK(rf.left == 3);
    }
    SUBCASE("two stacked 3x3 convs") {
        Network net(NetSpec{{LayerSpec::conv(2, 3, 1), LayerSpec::conv(2, 3, 1)}, {9, 9, 1}, 0}, 3);
        const RfReport rf = estimate_rf(net, center_location(net));
        CHECK(rf.height() == 5);
        CHECK(rf.width() == 5);
        CHECK(rf.support_cells == 25);
    }
    SUBCASE("dilated 3x3 at rate 2") {
        Network net(NetSpec{{LayerSpec::dilated(1, 3, 2, 2)}, {9, 9, 1}, 0}, 3);
        const RfReport rf = estimate_rf(net, {4, 4});
        CHECK(rf.height() == 5);
        CHECK(rf.support_cells == 9);
    }
    SUBCASE("LPSC size 11 covers exactly the circular field") {
        const LpscConfig c = lpsc_cfg(11, 3, 8, 5);
        Network net(NetSpec{{LayerSpec::lpsc_layer(2, c)}, {13, 13, 1}, 0}, 3);
        const RfReport rf = estimate_rf(net, {6, 6});
        const LogPolarMask m = build_mask(c);
        CHECK(rf.height() == 11);
        CHECK(rf.width() == 11);
        CHECK(rf.support_cells == 81);
        for (int dr = -6; dr <= 6; ++dr)
            for (int dc = -6; dc <= 6; ++dc) {
                const bool inside = std::abs(dr) <= 5 && std::abs(dc) <= 5 && m.at_offset(dr, dc) != 0;
                CHECK(rf.support[static_cast<std::size_t>((6 + dr) * 13 + 6 + dc)] == inside);
            }
    }
    SUBCASE("LPSC strictly contains the 3x3 footprint for R >= 2") {
        for (std::size_t r = 2; r <= 5; ++r) {
            Network net(NetSpec{{LayerSpec::lpsc_layer(1, lpsc_cfg(2 * r + 1, 2, 8, r))}, {11, 11, 1}, 0}, 3);
            const RfReport rf = estimate_rf(net, {5, 5});
            for (std::size_t i = 4; i <= 6; ++i)
                for (std::size_t j = 4; j <= 6; ++j) CHECK(rf.support[i * 11 + j]);
            CHECK(rf.support_cells > 9);
            CHECK(rf.height() == 2 * r + 1);
        }
    }
    SUBCASE("classifier networks use their spatial prefix") {
        Network net(NetSpec{{LayerSpec::conv(2, 3, 1), LayerSpec::simple(LayerKind::Flatten), LayerSpec::dense(2)},
                            {6, 6, 1}, 2},
                    1);
        CHECK(estimate_rf(net, {2, 2}).support_cells == 9);
    }
    SUBCASE("location out of range") {
        Network net(NetSpec{{LayerSpec::conv(2, 3, 1)}, {9, 9, 2}, 0}, 3);
        CHECK_THROWS_AS(estimate_rf(net, {9, 0}), ValidationError);
    }
}

TEST_CASE("kernel visualization") {
    const LpscConfig c = lpsc_cfg(11, 3, 8, 0);
    const LogPolarMask m = build_mask(c);

    SUBCASE("equal weights give a constant field") {
        LpscWeights w(3, 8, 1, 1);
        w.center[0] = 0.5;
        for (double& v : w.regions.data()) v = 0.5;
        const KernelImage off = visualize_kernel(w, m, false, 0, 0);
        const KernelImage on = visualize_kernel(w, m, true, 0, 0);
        for (std::size_t i = 0; i < 121; ++i) {
            CHECK(off.painted[i] == (m.index_grid[i] != 0));
            if (off.painted[i]) CHECK(off.values[i] == 0.5);
            CHECK(on.painted[i]);
            CHECK(on.values[i] == 0.5);
        }
        const GrayImage g = render_kernel(off);
        CHECK(g.pixels[0] == 0);
        CHECK(g.pixels[60] >= 32);
    }

    SUBCASE("corners take the nearest region's weight") {
        // Corner (R, R): the outermost level in its own direction bin.
        CHECK(nearest_region(m, 10, 10) == Size2{3, 8});
        CHECK(nearest_region(m, 0, 0) == Size2{3, 4});
        CHECK(nearest_region(m, 0, 10) == Size2{3, 2});
        CHECK(nearest_region(m, 10, 0) == Size2{3, 6});
        CHECK(nearest_region(m, 5, 5) == Size2{0, 0});

        // Brute-force oracle: the chosen region owns one of the nearest in-field cells.
        for (std::size_t r = 0; r < 11; ++r)
            for (std::size_t col = 0; col < 11; ++col) {
                if (m.at(r, col) != 0) continue;
                long best = 1L << 30;
                std::set<std::pair<std::size_t, std::size_t>> nearest;
                for (std::size_t a = 0; a < 11; ++a)
                    for (std::size_t b = 0; b < 11; ++b) {
                        const int k = m.at(a, b);
                        if (k <= 0) continue;
                        const long dr = static_cast<long>(a) - static_cast<long>(r);
                        const long dc = static_cast<long>(b) - static_cast<long>(col);
                        const long d = dr * dr + dc * dc;
                        const std::pair<std::size_t, std::size_t> reg{static_cast<std::size_t>(k - 1) / 8 + 1,
                                                                      static_cast<std::size_t>(k - 1) % 8 + 1};
                        if (d < best) {
                            best = d;
                            nearest = {reg};
                        } else if (d == best) {
                            nearest.insert(reg);
                        }
                    }
                const Size2 got = nearest_region(m, r, col);
                CAPTURE(r);
                CAPTURE(col);
                CHECK(nearest.count({got.rows, got.cols}) == 1);
                const std::size_t own = direction_bin(c, static_cast<int>(r) - 5, static_cast<int>(col) - 5);
                bool own_available = false;
                for (const auto& reg : nearest) own_available |= reg.second == own;
                if (own_available) CHECK(got.cols == own);
            }
    }

    SUBCASE("painted values follow the weights") {
        std::mt19937_64 rng(3);
        LpscWeights w(3, 8, 2, 2);
        w.center = random_tensor(w.center.shape(), rng);
        w.regions = random_tensor(w.regions.shape(), rng);
        const auto all = visualize_kernels(w, m, true);
        REQUIRE(all.size() == 4);
        const KernelImage& k = all[1 * 2 + 0];   // ci = 1, co = 0
        CHECK(k.values[60] == w.center[1 * 2 + 0]);
        CHECK(k.values[5 * 11 + 10] == w.region(3, 1, 1, 0));
        CHECK(k.values[10 * 11 + 10] == w.region(3, 8, 1, 0));
        CHECK_THROWS_AS(visualize_kernel(w, m, true, 2, 0), ValidationError);

        const ColorImage rgb = render_kernel_rgb(visualize_kernel(w, m, false, 0, 0), all[0], all[1]);
        CHECK(rgb.rgb[0] == 255);   // sentinel magenta in the corner
        CHECK(rgb.rgb[1] == 0);
        CHECK(rgb.rgb[2] == 255);
    }
}

TEST_CASE("raster output") {
    GrayImage g{2, 3, {0, 10, 20, 30, 40, 50}};
    const GrayImage up = upscale(g, 2);
    CHECK(up.rows == 4);
    CHECK(up.cols == 6);
    CHECK(up.pixels[0] == 0);
    CHECK(up.pixels[1] == 0);
    CHECK(up.pixels[6 + 2] == 10);
    CHECK(up.pixels[3 * 6 + 5] == 50);

    const auto dir = std::filesystem::temp_directory_path() / "lpsc_test_raster";
    std::filesystem::create_directories(dir);
    write_pgm((dir / "g.pgm").string(), g);
    std::ifstream in(dir / "g.pgm", std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes == std::string("P5\n3 2\n255\n") + std::string("\x00\x0a\x14\x1e\x28\x32", 6));
    write_ppm((dir / "c.ppm").string(), ColorImage{1, 1, {1, 2, 3}});
    CHECK(std::filesystem::file_size(dir / "c.ppm") == std::string("P6\n1 1\n255\n").size() + 3);
    CHECK_THROWS_AS(write_pgm((dir / "missing" / "x.pgm").string(), g), FormatError);
    std::filesystem::remove_all(dir);
}
