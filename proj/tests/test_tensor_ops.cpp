#include <catch2/catch_amalgamated.hpp>

#include "rccn/gradcheck.hpp"
#include "rccn/ops.hpp"
#include "rccn/rng.hpp"
#include "rccn/tensor.hpp"

using namespace rccn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Naive quintuple-loop convolution, independent of the library's loop
/// restructuring.
Tensor conv_oracle(const Tensor& x, const ConvParams& p) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = p.cout(), KH = p.kh(), KW = p.kw();
    const int OH = conv_out_extent(H, p.padding, KH, p.dilation, p.stride);
    const int OW = conv_out_extent(W, p.padding, KW, p.dilation, p.stride);
    Tensor out({N, OC, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    double acc = p.bias.data[static_cast<size_t>(oc)];
                    for (int ic = 0; ic < C; ++ic)
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw) {
                                const int ih = oh * p.stride - p.padding + kh * p.dilation;
                                const int iw = ow * p.stride - p.padding + kw * p.dilation;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(n, ic, ih, iw) * p.weights.at(oc, ic, kh, kw);
                            }
                    out.at(n, oc, oh, ow) = acc;
                }
    return out;
}

ConvParams random_conv(int oc, int ic, int k, int stride, int pad, int dil, Rng& rng) {
    ConvParams p;
    p.weights = random_tensor({oc, ic, k, k}, rng);
    p.bias = random_tensor({oc}, rng);
    p.stride = stride;
    p.padding = pad;
    p.dilation = dil;
    return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// Finite-difference check of one layer's parameter and input gradients via
/// loss = <f(x), R> for a fixed random cotangent R.
template <typename Fwd, typename Bwd>
double layer_fd_error(std::vector<Tensor*> inputs, Fwd&& fwd, Bwd&& bwd) {
    Tensor out0 = fwd();
    Rng rng(99);
    Tensor cot = random_tensor(out0.shape, rng);
    auto loss = [&] { return dot(fwd(), cot); };

    std::vector<Tensor> grads = bwd(cot);
    REQUIRE(grads.size() == inputs.size());

    std::vector<Tensor> mom;
    std::vector<ParamRef> refs;
    mom.reserve(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) mom.emplace_back(inputs[i]->shape);
    for (size_t i = 0; i < inputs.size(); ++i)
        refs.push_back({"t" + std::to_string(i), inputs[i], &grads[i], &mom[i], false});

    auto report = gradcheck(refs, loss, loss, 6, 1e-5);
    REQUIRE_FALSE(report.failed);
    return report.max_rel_error;
}

}  // namespace

TEST_CASE("tensor shape and data invariants") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.shape_str() == "[2x3]");
    CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(t.reshaped({5}), std::invalid_argument);
    Tensor r = Tensor({2, 2}, {1, 2, 3, 4}).reshaped({4});
    CHECK(r.data == std::vector<double>{1, 2, 3, 4});
    CHECK(Tensor::full({2}, 3.5).data == std::vector<double>{3.5, 3.5});
    Tensor nf({1}, {std::sqrt(-1.0)});
    CHECK_FALSE(nf.all_finite());
}

TEST_CASE("conv2d matches hand-computed all-ones case") {
    // 3x3 all-ones input and kernel, pad 1: each output counts overlap area
    ConvParams p;
    p.weights = Tensor::full({1, 1, 3, 3}, 1.0);
    p.bias = Tensor({1});
    p.padding = 1;
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(x, p);
    const std::vector<double> want{4, 6, 4, 6, 9, 6, 4, 6, 4};
    CHECK(y.data == want);
}

TEST_CASE("dilated conv selects one tap on a one-hot input") {
    ConvParams p;
    p.weights = Tensor({1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) p.weights.data[static_cast<size_t>(i)] = i + 1.0;
    p.bias = Tensor({1});
    p.dilation = 2;
    Tensor x({1, 1, 5, 5});
    x.at(0, 0, 2, 2) = 1.0;
    Tensor y = conv2d(x, p);
    REQUIRE(y.shape == std::vector<int>{1, 1, 1, 1});
    CHECK(y.data[0] == 5.0);  // center tap
}

TEST_CASE("conv2d matches the naive oracle on random cases") {
    Rng rng(11);
    struct Case {
        int n, ic, h, w, oc, k, stride, pad, dil;
    };
    const Case cases[] = {
        {1, 1, 5, 5, 1, 3, 1, 0, 1}, {2, 3, 7, 6, 4, 3, 1, 1, 1}, {1, 2, 9, 9, 3, 3, 2, 1, 1},
        {1, 2, 9, 8, 2, 3, 1, 2, 2}, {1, 4, 6, 6, 2, 1, 1, 0, 1}, {2, 2, 8, 5, 3, 4, 2, 2, 1},
        {1, 3, 11, 7, 2, 3, 3, 1, 2},
    };
    for (const auto& c : cases) {
        ConvParams p = random_conv(c.oc, c.ic, c.k, c.stride, c.pad, c.dil, rng);
        Tensor x = random_tensor({c.n, c.ic, c.h, c.w}, rng);
        CHECK(max_abs_diff(conv2d(x, p), conv_oracle(x, p)) < 1e-12);
    }
}

TEST_CASE("conv2d rejects bad shapes with diagnostics") {
    Rng rng(3);
    ConvParams p = random_conv(2, 3, 3, 1, 0, 1, rng);
    CHECK_THROWS_WITH(conv2d(random_tensor({1, 2, 5, 5}, rng), p),
                      Catch::Matchers::ContainsSubstring("channel count"));
    CHECK_THROWS_AS(conv2d(random_tensor({1, 3, 2, 2}, rng), p), std::invalid_argument);
    p.bias = Tensor({3});
    CHECK_THROWS_WITH(conv2d(random_tensor({1, 3, 5, 5}, rng), p),
                      Catch::Matchers::ContainsSubstring("bias"));
}

TEST_CASE("conv2d backward gradients pass finite differences below 1e-6") {
    Rng rng(21);
    ConvParams p = random_conv(3, 2, 3, 2, 1, 2, rng);
    Tensor x = random_tensor({1, 2, 8, 7}, rng);
    const double err = layer_fd_error(
        {&x, &p.weights, &p.bias}, [&] { return conv2d(x, p); },
        [&](const Tensor& cot) {
            auto [gx, gw, gb] = conv2d_backward(x, p, cot);
            return std::vector<Tensor>{gx, gw, gb};
        });
    CHECK(err < 1e-6);
}

TEST_CASE("deconv2d is the exact adjoint of conv2d") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        ConvParams p = random_conv(3, 2, 3, trial % 2 + 1, 1, 1, rng);
        p.bias.fill(0.0);
        ConvParams q = p;
        q.bias = Tensor({p.cin()});  // deconv bias has Cin entries
        // odd extents so the stride-2 case tiles exactly and the transpose
        // reproduces the input shape
        Tensor x = random_tensor({1, 2, 7, 7}, rng);
        Tensor cx = conv2d(x, p);
        Tensor y = random_tensor(cx.shape, rng);
        const double lhs = dot(cx, y);
        const double rhs = dot(x, deconv2d(y, q));
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("deconv2d output extent and stride-2 upsampling shape") {
    ConvParams p;
    p.weights = Tensor::full({5, 2, 4, 4}, 0.1);
    p.bias = Tensor({2});
    p.stride = 2;
    p.padding = 1;
    Tensor x({1, 5, 8, 8});
    Tensor y = deconv2d(x, p);
    // (8-1)*2 - 2 + 3 + 1 = 16
    CHECK(y.shape == std::vector<int>{1, 2, 16, 16});
    CHECK_THROWS_WITH(deconv2d(Tensor({1, 3, 8, 8}), p),
                      Catch::Matchers::ContainsSubstring("channel count"));
}

TEST_CASE("deconv2d backward gradients pass finite differences below 1e-6") {
    Rng rng(41);
    ConvParams p;
    p.weights = random_tensor({3, 2, 4, 4}, rng);
    p.bias = random_tensor({2}, rng);
    p.stride = 2;
    p.padding = 1;
    Tensor x = random_tensor({1, 3, 5, 6}, rng);
    const double err = layer_fd_error(
        {&x, &p.weights, &p.bias}, [&] { return deconv2d(x, p); },
        [&](const Tensor& cot) {
            auto [gx, gw, gb] = deconv2d_backward(x, p, cot);
            return std::vector<Tensor>{gx, gw, gb};
        });
    CHECK(err < 1e-6);
}

TEST_CASE("maxpool2d matches a sliding-window oracle and routes gradients") {
    Rng rng(51);
    Tensor x = random_tensor({2, 3, 7, 6}, rng);
    const int window = 2, stride = 2;
    PoolResult r = maxpool2d(x, window, stride);
    REQUIRE(r.output.shape == std::vector<int>{2, 3, 3, 3});
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int oh = 0; oh < 3; ++oh)
                for (int ow = 0; ow < 3; ++ow) {
                    double best = -1e300;
                    for (int kh = 0; kh < window; ++kh)
                        for (int kw = 0; kw < window; ++kw)
                            best = std::max(best, x.at(n, c, oh * stride + kh, ow * stride + kw));
                    CHECK(r.output.at(n, c, oh, ow) == best);
                }
    Tensor g = random_tensor(r.output.shape, rng);
    Tensor gx = maxpool2d_backward(x.shape, r, g);
    double sg = 0, sgx = 0;
    for (double v : g.data) sg += v;
    for (double v : gx.data) sgx += v;
    CHECK(std::abs(sg - sgx) < 1e-12);  // every window routes exactly one unit
}

TEST_CASE("stride-1 end-padded maxpool preserves spatial size") {
    Rng rng(52);
    Tensor x = random_tensor({1, 2, 8, 8}, rng);
    PoolResult r = maxpool2d_padded(x, 2, 1, 0, 1);
    CHECK(r.output.shape == x.shape);
    // bottom-right corner has only itself in its window
    CHECK(r.output.at(0, 0, 7, 7) == x.at(0, 0, 7, 7));
}

TEST_CASE("maxpool ties pick the smallest flat index") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 1.0);
    PoolResult r = maxpool2d(x, 2, 2);
    CHECK(r.argmax[0] == 0);
}

TEST_CASE("fully connected forward and backward") {
    Tensor w({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2}, {0.5, -0.5});
    Tensor x({3}, {1, 0, -1});
    Tensor y = fully_connected(x, w, b);
    CHECK(y.data == std::vector<double>{1 - 3 + 0.5, 4 - 6 - 0.5});
    CHECK_THROWS_AS(fully_connected(Tensor({2}), w, b), std::invalid_argument);

    Rng rng(61);
    Tensor wr = random_tensor({4, 6}, rng), br = random_tensor({4}, rng);
    Tensor xr = random_tensor({6}, rng);
    const double err = layer_fd_error(
        {&xr, &wr, &br}, [&] { return fully_connected(xr, wr, br); },
        [&](const Tensor& cot) {
            auto [gx, gw, gb] = fully_connected_backward(xr, wr, cot);
            return std::vector<Tensor>{gx, gw, gb};
        });
    CHECK(err < 1e-6);
}

TEST_CASE("relu and its gate") {
    Tensor x({4}, {-1.0, 0.0, 0.5, 2.0});
    CHECK(relu(x).data == std::vector<double>{0, 0, 0.5, 2});
    Tensor g({4}, {1, 1, 1, 1});
    CHECK(relu_backward(x, g).data == std::vector<double>{0, 0, 1, 1});
}

TEST_CASE("concat_channels stacks in order and splits gradients back") {
    Rng rng(71);
    Tensor a = random_tensor({1, 2, 3, 3}, rng), b = random_tensor({1, 3, 3, 3}, rng);
    Tensor cat = concat_channels({&a, &b});
    REQUIRE(cat.shape == std::vector<int>{1, 5, 3, 3});
    CHECK(cat.at(0, 0, 1, 1) == a.at(0, 0, 1, 1));
    CHECK(cat.at(0, 2, 1, 1) == b.at(0, 0, 1, 1));
    Tensor g = random_tensor(cat.shape, rng);
    auto parts = concat_channels_backward({&a, &b}, g);
    CHECK(parts[0].at(0, 1, 2, 2) == g.at(0, 1, 2, 2));
    CHECK(parts[1].at(0, 2, 0, 0) == g.at(0, 4, 0, 0));
    Tensor bad({1, 3, 4, 4});
    CHECK_THROWS_AS(concat_channels({&a, &bad}), std::invalid_argument);
}

TEST_CASE("bilinear resize reproduces the hand-computed 2x case") {
    Tensor x({1, 2}, {0.0, 1.0});
    Tensor y = bilinear_resize(x, 1, 4);
    const std::vector<double> want{0.0, 0.25, 0.75, 1.0};
    for (int i = 0; i < 4; ++i) CHECK(y.data[static_cast<size_t>(i)] == Catch::Approx(want[static_cast<size_t>(i)]).margin(1e-15));
    // identity at equal size, constant maps stay constant
    Rng rng(81);
    Tensor z = random_tensor({2, 3, 4, 5}, rng);
    CHECK(max_abs_diff(bilinear_resize(z, 4, 5), z) == 0.0);
    Tensor c = Tensor::full({3, 3}, 2.5);
    Tensor cu = bilinear_resize(c, 7, 9);
    for (double v : cu.data) CHECK(v == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("gradcheck flags non-finite losses and reports per-tensor errors") {
    Tensor w({2}, {1.0, 2.0});
    Tensor g({2}, {2.0, 4.0});  // analytic gradient of sum(w^2)
    Tensor m({2});
    std::vector<ParamRef> refs{{"w", &w, &g, &m, false}};
    auto loss = [&] { return w.data[0] * w.data[0] + w.data[1] * w.data[1]; };
    auto rep = gradcheck(refs, loss, loss, 2, 1e-5);
    CHECK(rep.ok(1e-6));
    REQUIRE(rep.per_parameter_errors.size() == 1);
    CHECK(rep.per_parameter_errors[0].first == "w");

    auto bad = [&]() -> double { return std::numeric_limits<double>::quiet_NaN(); };
    auto rep2 = gradcheck(refs, bad, bad, 2, 1e-5);
    CHECK(rep2.failed);
}

TEST_CASE("rng is deterministic and substreams are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng s0 = Rng::substream(1, 0), s1 = Rng::substream(1, 1);
    CHECK(s0.uniform() != s1.uniform());
    Rng u(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform(2.0, 3.0);
        CHECK(v >= 2.0);
        CHECK(v < 3.0);
        CHECK(u.uniform_int(5) < 5);
    }
}
