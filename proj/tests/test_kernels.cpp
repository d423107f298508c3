#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "volta/kernels.hpp"
#include "volta/rng.hpp"

using namespace volta;

namespace {

Tensor random_tensor(Shape4 s, Rng& rng)
{
    Tensor t(s);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

oracle::Array4 to_array(const Tensor& t)
{
    const Shape4 s = t.shape();
    oracle::Array4 a(s.n, s.c, s.h, s.w);
    for (std::size_t i = 0; i < t.size(); ++i) a.v[i] = t[i];
    return a;
}

double max_abs_diff(const Tensor& a, const Tensor& b)
{
    REQUIRE(a.shape() == b.shape());
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    return worst;
}

}  // namespace

TEST_CASE("conv output extents")
{
    const ConvGeometry first{3, 12, 3, 1, 2};
    CHECK(first.output_shape({1, 3, 32, 32}) == Shape4{1, 12, 34, 34});
    CHECK(first.parameter_count() == 336);
    CHECK_THROWS_AS(first.output_shape({1, 4, 32, 32}), ShapeError);
    CHECK_THROWS_AS((ConvGeometry{1, 1, 5, 1, 0}.output_shape({1, 1, 3, 3})), ShapeError);
    CHECK(PoolGeometry{3, 3}.output_shape({1, 12, 34, 34}) == Shape4{1, 12, 11, 11});
    CHECK_THROWS_AS((PoolGeometry{3, 3}.output_shape({1, 1, 2, 2})), ShapeError);
}

TEST_CASE("conv of ones with a ones filter counts the overlap")
{
    const ConvGeometry geo{1, 1, 3, 1, 2};
    const Tensor x = new_filled<float>({1, 1, 3, 3}, 1.0f);
    const Tensor w = new_filled<float>({1, 1, 3, 3}, 1.0f);
    const Tensor b({1, 1, 1, 1});
    for (const Tensor& y : {reference::conv2d_forward(geo, x, w, b), parallel::conv2d_forward(geo, x, w, b)}) {
        REQUIRE(y.shape() == Shape4{1, 1, 5, 5});
        CHECK(y.at(0, 0, 0, 0) == 1.0f);
        CHECK(y.at(0, 0, 4, 4) == 1.0f);
        CHECK(y.at(0, 0, 2, 2) == 9.0f);
        CHECK(y.at(0, 0, 0, 2) == 3.0f);
    }
}

TEST_CASE("zero weights produce the bias everywhere")
{
    const ConvGeometry geo{2, 3, 3, 1, 1};
    Rng rng(1);
    const Tensor x = random_tensor({2, 2, 5, 5}, rng);
    const Tensor w({3, 2, 3, 3});
    const Tensor b({3, 1, 1, 1}, std::vector<float>{0.5f, -1.0f, 2.0f});
    const Tensor y = parallel::conv2d_forward(geo, x, w, b);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t o = 0; o < 3; ++o)
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j) CHECK(y.at(n, o, i, j) == b[o]);
}

TEST_CASE("conv forward matches the direct loop oracle")
{
    Rng rng(2);
    for (const ConvGeometry& geo : {ConvGeometry{3, 4, 3, 1, 2}, ConvGeometry{3, 2, 3, 2, 1}, ConvGeometry{3, 5, 1, 1, 0},
                                    ConvGeometry{3, 3, 5, 3, 2}}) {
        const Tensor x = random_tensor({2, 3, 8, 8}, rng);
        const Tensor w = random_tensor(geo.weight_shape(), rng);
        const Tensor b = random_tensor(geo.bias_shape(), rng);
        std::vector<double> bias(b.data().begin(), b.data().end());
        const oracle::Array4 want = oracle::direct_conv(to_array(x), to_array(w), bias, geo.stride, geo.padding);
        for (const Tensor& got : {reference::conv2d_forward(geo, x, w, b), parallel::conv2d_forward(geo, x, w, b)}) {
            REQUIRE(got.shape() == Shape4{want.n, want.c, want.h, want.w});
            double worst = 0;
            for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want.v[i]));
            CHECK(worst < 1e-5);
        }
    }
}

TEST_CASE("conv backward scalar chain rule")
{
    const ConvGeometry geo{1, 1, 1, 1, 0};
    const Tensor x({1, 1, 1, 1}, std::vector<float>{1.5f});
    const Tensor w({1, 1, 1, 1}, std::vector<float>{2.0f});
    const Tensor g({1, 1, 1, 1}, std::vector<float>{3.0f});
    for (const auto& grads : {reference::conv2d_backward(geo, x, w, g, true), parallel::conv2d_backward(geo, x, w, g, true)}) {
        CHECK(grads.input[0] == 6.0f);
        CHECK(grads.weight[0] == doctest::Approx(4.5));
        CHECK(grads.bias[0] == 3.0f);
    }
}

TEST_CASE("conv backward of a zero gradient is zero")
{
    const ConvGeometry geo{3, 4, 3, 1, 2};
    Rng rng(4);
    const Tensor x = random_tensor({2, 3, 6, 6}, rng);
    const Tensor w = random_tensor(geo.weight_shape(), rng);
    const Tensor g(geo.output_shape(x.shape()));
    const auto grads = parallel::conv2d_backward(geo, x, w, g, true);
    for (const Tensor* t : {&grads.input, &grads.weight, &grads.bias})
        for (float v : t->data()) CHECK(v == 0.0f);
    CHECK(parallel::conv2d_backward(geo, x, w, g, false).input.empty());
    CHECK_THROWS_AS(parallel::conv2d_backward(geo, x, w, Tensor({2, 4, 3, 3}), true), ShapeError);
}

TEST_CASE("parallel kernels agree with the serial reference")
{
    Rng rng(8);
    const ConvGeometry geo{4, 6, 3, 1, 2};
    const Tensor x = random_tensor({3, 4, 11, 11}, rng);
    const Tensor w = random_tensor(geo.weight_shape(), rng);
    const Tensor b = random_tensor(geo.bias_shape(), rng);
    const Tensor g = random_tensor(geo.output_shape(x.shape()), rng);
    CHECK(max_abs_diff(reference::conv2d_forward(geo, x, w, b), parallel::conv2d_forward(geo, x, w, b)) < 1e-5);
    const auto r = reference::conv2d_backward(geo, x, w, g, true);
    const auto p = parallel::conv2d_backward(geo, x, w, g, true);
    CHECK(max_abs_diff(r.input, p.input) < 1e-4);
    CHECK(max_abs_diff(r.weight, p.weight) < 1e-4);
    CHECK(max_abs_diff(r.bias, p.bias) < 1e-4);

    std::vector<std::size_t> ra, pa;
    const Tensor pooled_r = reference::maxpool_forward(PoolGeometry{3, 3}, x, &ra);
    const Tensor pooled_p = parallel::maxpool_forward(PoolGeometry{3, 3}, x, &pa);
    CHECK(pooled_r == pooled_p);
    CHECK(ra == pa);
    const Tensor pg = random_tensor(pooled_r.shape(), rng);
    CHECK(reference::maxpool_backward(x.shape(), ra, pg) == parallel::maxpool_backward(x.shape(), pa, pg));

    const Tensor lx = random_tensor({5, 20, 1, 1}, rng);
    const Tensor lw = random_tensor({7, 20, 1, 1}, rng);
    const Tensor lb = random_tensor({7, 1, 1, 1}, rng);
    const Tensor lg = random_tensor({5, 7, 1, 1}, rng);
    CHECK(max_abs_diff(reference::linear_forward(lx, lw, lb), parallel::linear_forward(lx, lw, lb)) < 1e-5);
    const auto lr = reference::linear_backward(lx, lw, lg, true);
    const auto lp = parallel::linear_backward(lx, lw, lg, true);
    CHECK(max_abs_diff(lr.input, lp.input) < 1e-5);
    CHECK(max_abs_diff(lr.weight, lp.weight) < 1e-5);
    CHECK(max_abs_diff(lr.bias, lp.bias) < 1e-5);
}

TEST_CASE("parallel kernels are deterministic")
{
    Rng rng(9);
    const ConvGeometry geo{3, 8, 3, 1, 2};
    const Tensor x = random_tensor({4, 3, 16, 16}, rng);
    const Tensor w = random_tensor(geo.weight_shape(), rng);
    const Tensor g = random_tensor(geo.output_shape(x.shape()), rng);
    const auto a = parallel::conv2d_backward(geo, x, w, g, true);
    const auto b = parallel::conv2d_backward(geo, x, w, g, true);
    CHECK(a.input == b.input);
    CHECK(a.weight == b.weight);
    CHECK(a.bias == b.bias);
}

TEST_CASE("max pool single window and scatter")
{
    const Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    std::vector<std::size_t> argmax;
    const Tensor y = parallel::maxpool_forward(PoolGeometry{2, 2}, x, &argmax);
    REQUIRE(y.shape() == Shape4{1, 1, 1, 1});
    CHECK(y[0] == 4.0f);
    const Tensor gx = parallel::maxpool_backward(x.shape(), argmax, Tensor({1, 1, 1, 1}, std::vector<float>{2.5f}));
    CHECK(gx == Tensor({1, 1, 2, 2}, std::vector<float>{0, 0, 0, 2.5f}));
}

TEST_CASE("max pool ties go to the first element in scan order")
{
    const Tensor x({1, 1, 2, 2}, std::vector<float>{7, 7, 7, 7});
    std::vector<std::size_t> argmax;
    (void)reference::maxpool_forward(PoolGeometry{2, 2}, x, &argmax);
    CHECK(argmax == std::vector<std::size_t>{0});
    (void)parallel::maxpool_forward(PoolGeometry{2, 2}, x, &argmax);
    CHECK(argmax == std::vector<std::size_t>{0});
}

TEST_CASE("max pool matches the window scan oracle and conserves gradient mass")
{
    Rng rng(12);
    const Tensor x = random_tensor({2, 3, 34, 34}, rng);
    std::vector<std::size_t> argmax;
    const Tensor y = parallel::maxpool_forward(PoolGeometry{3, 3}, x, &argmax);
    const oracle::Array4 want = oracle::window_max(to_array(x), 3, 3);
    REQUIRE(y.shape() == Shape4{2, 3, 11, 11});
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == want.v[i]);

    const Tensor g = random_tensor(y.shape(), rng);
    const Tensor gx = parallel::maxpool_backward(x.shape(), argmax, g);
    double in_sum = 0, out_sum = 0;
    for (float v : gx.data()) in_sum += v;
    for (float v : g.data()) out_sum += v;
    CHECK(in_sum == doctest::Approx(out_sum).epsilon(1e-6));
}

TEST_CASE("linear forward hand values")
{
    const Tensor w({2, 2, 1, 1}, std::vector<float>{1, 2, 3, 4});
    const Tensor b({2, 1, 1, 1});
    const Tensor x({1, 2, 1, 1}, std::vector<float>{1, 1});
    CHECK(parallel::linear_forward(x, w, b) == Tensor({1, 2, 1, 1}, std::vector<float>{3, 7}));

    Rng rng(3);
    const Tensor eye({3, 3, 1, 1}, std::vector<float>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor v = random_tensor({4, 3, 1, 1}, rng);
    CHECK(parallel::linear_forward(v, eye, Tensor({3, 1, 1, 1})) == v);
    CHECK_THROWS_AS(parallel::linear_forward(Tensor({1, 4, 1, 1}), w, b), ShapeError);
}

TEST_CASE("linear forward matches the dense oracle")
{
    Rng rng(21);
    const Tensor x = random_tensor({3, 9, 1, 1}, rng);
    const Tensor w = random_tensor({4, 9, 1, 1}, rng);
    const Tensor b = random_tensor({4, 1, 1, 1}, rng);
    std::vector<std::vector<double>> xs(3, std::vector<double>(9)), ws(4, std::vector<double>(9));
    std::vector<double> bs(4);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < 9; ++i) xs[n][i] = x[n * 9 + i];
    for (std::size_t o = 0; o < 4; ++o) {
        bs[o] = b[o];
        for (std::size_t i = 0; i < 9; ++i) ws[o][i] = w[o * 9 + i];
    }
    const auto want = oracle::dense(xs, ws, bs);
    const Tensor got = parallel::linear_forward(x, w, b);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t o = 0; o < 4; ++o) CHECK(got[n * 4 + o] == doctest::Approx(want[n][o]).epsilon(1e-6));
}
