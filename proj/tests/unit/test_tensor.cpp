#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "attrib/checkpoint.hpp"
#include "attrib/error.hpp"
#include "attrib/optim.hpp"
#include "attrib/parallel.hpp"
#include "attrib/tensor.hpp"
#include "support.hpp"

using namespace attrib;
using namespace attrib::tg;
using testing::random_tensor;

namespace {

// Direct 6-loop cross-correlation with zero padding 1.
template <typename T>
Tensor<T> conv_oracle(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), K = w.dim(0);
    Tensor<T> y(Shape{N, K, H, W});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) {
                    T s = b ? (*b)[k] : T(0);
                    for (std::size_t c = 0; c < C; ++c)
                        for (int di = -1; di <= 1; ++di)
                            for (int dj = -1; dj <= 1; ++dj) {
                                const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                                if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
                                s += x.at({n, c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)}) *
                                     w.at({k, c, static_cast<std::size_t>(di + 1), static_cast<std::size_t>(dj + 1)});
                            }
                    y.at({n, k, i, j}) = s;
                }
    return y;
}

}  // namespace

TEST_CASE("tensor construction and indexing") {
    Tensor<double> t(Shape{2, 3}, 1.5);
    CHECK(t.numel() == 6);
    t.at({1, 2}) = 4.0;
    CHECK(t[5] == 4.0);
    CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    CHECK(t.reshaped(Shape{3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(t.reshaped(Shape{4, 2}), DimensionError);
    CHECK(Tensor<double>::scalar(2.0).item() == 2.0);
}

TEST_CASE("conv2d of a constant image with a horizontal high-pass kernel") {
    Tensor<double> w(Shape{1, 1, 3, 3}, 0.0);
    w.at({0, 0, 1, 0}) = 1;
    w.at({0, 0, 1, 1}) = -1;
    const auto y = conv2d(Var<double>::leaf(Tensor<double>(Shape{1, 1, 3, 3}, 1.0)), Var<double>::leaf(w));
    CHECK(y.value().at({0, 0, 1, 1}) == 0.0);
}

TEST_CASE("conv2d with an identity kernel copies the input") {
    Rng rng(1);
    const auto x = random_tensor(Shape{2, 1, 5, 4}, rng);
    Tensor<double> w(Shape{1, 1, 3, 3}, 0.0);
    w.at({0, 0, 1, 1}) = 1;
    const auto y = conv2d(Var<double>::leaf(x), Var<double>::leaf(w));
    CHECK(y.value() == x);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto x = random_tensor(Shape{2, 3, 8, 8}, rng);
        const auto w = random_tensor(Shape{4, 3, 3, 3}, rng);
        const auto b = random_tensor(Shape{4}, rng);
        const Var<double> bv = Var<double>::leaf(b);
        const auto y = conv2d(Var<double>::leaf(x), Var<double>::leaf(w), &bv);
        const auto ref = conv_oracle(x, w, &b);
        for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));

        const auto xf = x.cast<float>(), wf = w.cast<float>();
        const auto yf = conv2d(Var<float>::leaf(xf), Var<float>::leaf(wf));
        const auto reff = conv_oracle(xf, wf, static_cast<const Tensor<float>*>(nullptr));
        double worst = 0;
        for (std::size_t i = 0; i < reff.numel(); ++i) worst = std::max(worst, double(std::abs(yf.value()[i] - reff[i])));
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("conv2d rejects mismatched shapes") {
    const auto x = Var<double>::leaf(Tensor<double>(Shape{1, 2, 4, 4}));
    CHECK_THROWS_AS(conv2d(x, Var<double>::leaf(Tensor<double>(Shape{1, 3, 3, 3}))), DimensionError);
    CHECK_THROWS_AS(conv2d(x, Var<double>::leaf(Tensor<double>(Shape{1, 2, 5, 5}))), DimensionError);
    const auto b = Var<double>::leaf(Tensor<double>(Shape{2}));
    CHECK_THROWS_AS(conv2d(x, Var<double>::leaf(Tensor<double>(Shape{1, 2, 3, 3})), &b), DimensionError);
}

TEST_CASE("conv2d is independent of the worker count") {
    Rng rng(3);
    const auto x = testing::random_tensor_f(Shape{6, 2, 8, 8}, rng);
    const auto w = testing::random_tensor_f(Shape{3, 2, 3, 3}, rng);
    auto run = [&](int threads) {
        set_num_threads(threads);
        auto wv = Var<float>::leaf(w, true);
        const auto y = conv2d(Var<float>::leaf(x), wv);
        backward(sum(mul(y, y)));
        set_num_threads(1);
        return std::make_pair(y.value(), wv.grad());
    };
    const auto a = run(1), b = run(3);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("batchnorm of a constant channel yields beta") {
    const auto x = Var<double>::leaf(Tensor<double>(Shape{3, 2, 2, 2}, 7.0));
    const auto gamma = Var<double>::leaf(Tensor<double>(Shape{2}, 2.0));
    const auto beta = Var<double>::leaf(Tensor<double>(Shape{2}, std::vector<double>{0.25, -1.0}));
    BatchNormState<double> st(2);
    const auto y = batchnorm(x, gamma, beta, st, true);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(y.value()[(n * 2 + 0) * 4 + i] == doctest::Approx(0.25));
            CHECK(y.value()[(n * 2 + 1) * 4 + i] == doctest::Approx(-1.0));
        }
}

TEST_CASE("batchnorm leaves standardized data unchanged and tracks running statistics") {
    Rng rng(5);
    Tensor<double> t = random_tensor(Shape{4, 1, 5, 5}, rng);
    double mean = 0, var = 0;
    for (double v : t.storage()) mean += v;
    mean /= t.numel();
    for (double v : t.storage()) var += (v - mean) * (v - mean);
    var /= t.numel();
    for (auto& v : t.storage()) v = (v - mean) / std::sqrt(var);
    BatchNormState<double> st(1);
    const auto y = batchnorm(Var<double>::leaf(t), Var<double>::leaf(Tensor<double>(Shape{1}, 1.0)),
                             Var<double>::leaf(Tensor<double>(Shape{1}, 0.0)), st, true);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(y.value()[i] == doctest::Approx(t[i]).epsilon(1e-4));
    CHECK(st.running_mean[0] == doctest::Approx(0.0).epsilon(1e-12));
    // Unbiased variance of standardized data is n/(n-1).
    CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * 100.0 / 99.0));

    const auto e = batchnorm(Var<double>::leaf(t), Var<double>::leaf(Tensor<double>(Shape{1}, 1.0)),
                             Var<double>::leaf(Tensor<double>(Shape{1}, 0.0)), st, false);
    const double scale = 1.0 / std::sqrt(st.running_var[0] + 1e-5);
    CHECK(e.value()[3] == doctest::Approx((t[3] - st.running_mean[0]) * scale));
}

TEST_CASE("elementwise and pooling ops") {
    const auto r = relu(Var<double>::leaf(Tensor<double>(Shape{3}, std::vector<double>{-1, 0, 2})));
    CHECK(r.value().storage() == std::vector<double>{0, 0, 2});

    Tensor<double> x(Shape{1, 1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    const auto p = avgpool2x2(Var<double>::leaf(x));
    CHECK(p.shape() == Shape{1, 1, 1, 2});
    CHECK(p.value()[0] == doctest::Approx(3.5));
    CHECK(p.value()[1] == doctest::Approx(5.5));
    CHECK_THROWS_AS(avgpool2x2(Var<double>::leaf(Tensor<double>(Shape{1, 1, 3, 4}))), DimensionError);

    const auto g = global_avgpool(Var<double>::leaf(x));
    CHECK(g.shape() == Shape{1, 1});
    CHECK(g.value()[0] == doctest::Approx(4.5));

    const auto c = concat_channels<double>({Var<double>::leaf(Tensor<double>(Shape{2, 1}, 1.0)),
                                            Var<double>::leaf(Tensor<double>(Shape{2, 2}, 2.0))});
    CHECK(c.value().storage() == std::vector<double>{1, 2, 2, 1, 2, 2});
    CHECK_THROWS_AS(concat_channels<double>({Var<double>::leaf(Tensor<double>(Shape{2, 1})),
                                             Var<double>::leaf(Tensor<double>(Shape{3, 1}))}),
                    DimensionError);
}

TEST_CASE("linear computes x W^T + b") {
    const auto x = Var<double>::leaf(Tensor<double>(Shape{1, 2}, std::vector<double>{1, 2}));
    const auto w = Var<double>::leaf(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 0, 3, -1}));
    const auto b = Var<double>::leaf(Tensor<double>(Shape{2}, std::vector<double>{0.5, 0}));
    const auto y = linear(x, w, &b);
    CHECK(y.value().storage() == std::vector<double>{1.5, 1});
    CHECK_THROWS_AS(linear(x, Var<double>::leaf(Tensor<double>(Shape{2, 3}))), DimensionError);
}

TEST_CASE("l2 distance matrix") {
    const auto f = Var<double>::leaf(Tensor<double>(Shape{2, 2}, std::vector<double>{0, 0, 3, 4}));
    const auto d = l2_distance_matrix(f);
    CHECK(d.value().storage() == std::vector<double>{0, 5, 5, 0});

    Rng rng(2);
    const auto g = l2_distance_matrix(Var<double>::leaf(random_tensor(Shape{6, 3}, rng)));
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(g.value()[i * 6 + i] == 0.0);
        for (std::size_t j = 0; j < 6; ++j) CHECK(g.value()[i * 6 + j] == g.value()[j * 6 + i]);
    }
}

TEST_CASE("coincident rows get zero distance gradient") {
    auto f = Var<double>::leaf(Tensor<double>(Shape{2, 2}, std::vector<double>{1, 1, 1, 1}), true);
    backward(sum(l2_distance_matrix(f)));
    for (double v : f.grad().storage()) CHECK(v == 0.0);
}

TEST_CASE("backward contracts") {
    Rng rng(4);
    auto w = Var<double>::leaf(random_tensor(Shape{5}, rng), true);
    const auto x = random_tensor(Shape{5}, rng);
    const auto loss = sum(mul(w, Var<double>::leaf(x)));
    backward(loss);
    CHECK(w.grad() == x);
    backward(loss);
    for (std::size_t i = 0; i < 5; ++i) CHECK(w.grad()[i] == doctest::Approx(2 * x[i]));
    w.zero_grad();
    for (double v : w.grad().storage()) CHECK(v == 0.0);

    CHECK_THROWS_AS(backward(mul(w, w)), UsageError);
}

TEST_CASE("inference mode records no tape") {
    auto w = Var<double>::leaf(Tensor<double>(Shape{2}, 1.0), true);
    {
        NoGradGuard guard;
        const auto y = scale(w, 2.0);
        CHECK_FALSE(y.requires_grad());
        CHECK(y.node().parents.empty());
    }
    CHECK(scale(w, 2.0).requires_grad());
}

TEST_CASE("cross entropy of uniform logits is log C") {
    const auto logits = Var<double>::leaf(Tensor<double>(Shape{2, 4}, 0.0));
    const int labels[] = {1, 3};
    CHECK(cross_entropy(logits, labels).value().item() == doctest::Approx(std::log(4.0)));
    const int bad[] = {1, 4};
    CHECK_THROWS(cross_entropy(logits, bad));
}

TEST_CASE("adam first step moves by the learning rate") {
    auto p = Var<double>::leaf(Tensor<double>(Shape{1}, 1.0), true);
    Adam<double> opt({{"p", p}});
    backward(sum(p));
    opt.step();
    // m = 0.1, v = 0.001; bias-corrected both are 1, so the step is lr / (1 + eps).
    CHECK(p.value()[0] == doctest::Approx(1.0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(opt.steps() == 1);
}

TEST_CASE("adam with a zero gradient leaves parameters unchanged") {
    auto p = Var<double>::leaf(Tensor<double>(Shape{3}, 0.5), true);
    Adam<double> opt({{"p", p}});
    backward(sum(scale(p, 0.0)));
    opt.step();
    CHECK(p.value() == Tensor<double>(Shape{3}, 0.5));
}

TEST_CASE("adam decreases a convex quadratic") {
    auto p = Var<double>::leaf(Tensor<double>(Shape{2}, std::vector<double>{1.0, -2.0}), true);
    Adam<double> opt({{"p", p}}, AdamOptions{0.1});
    auto loss = [&] { return sum(mul(p, p)); };
    double prev = loss().value().item();
    for (int i = 0; i < 2; ++i) {
        opt.zero_grad();
        backward(loss());
        opt.step();
        const double cur = loss().value().item();
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("adam usage errors") {
    auto p = Var<double>::leaf(Tensor<double>(Shape{1}, 1.0), true);
    CHECK_THROWS_AS(Adam<double>({{"a", p}, {"a", p}}), UsageError);
    CHECK_THROWS_AS(Adam<double>({{"c", Var<double>::leaf(Tensor<double>(Shape{1}))}}), UsageError);
    Adam<double> opt({{"p", p}});
    CHECK_THROWS_AS(opt.step(), UsageError);
}

TEST_CASE("checkpoint round-trip and corruption") {
    testing::TempDir dir("ckpt");
    Rng rng(9);
    std::vector<NamedTensor> entries{{"a.weight", testing::random_tensor_f(Shape{2, 3, 3, 3}, rng)},
                                     {"scalar", Tensor<float>::scalar(3.0f)}};
    save_checkpoint(dir / "m.ckpt", entries);
    const auto back = load_checkpoint(dir / "m.ckpt");
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "a.weight");
    CHECK(back[0].tensor == entries[0].tensor);
    CHECK(back[1].tensor == entries[1].tensor);

    std::ofstream(dir / "bad.ckpt", std::ios::binary) << "ATRX";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), IoError);
    save_checkpoint(dir / "dup.ckpt", {entries[0], entries[0]});
    CHECK_THROWS_AS(load_checkpoint(dir / "dup.ckpt"), FormatError);

    const auto full = std::filesystem::file_size(dir / "m.ckpt");
    std::filesystem::resize_file(dir / "m.ckpt", full - 3);
    CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), FormatError);
}
