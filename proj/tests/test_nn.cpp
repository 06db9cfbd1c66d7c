#include "lgcoamix/gradcheck.hpp"
#include "lgcoamix/nn.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace lgcoamix;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.normal(0.0, 1.0);
    return m;
}

Tensor random_tensor(int n, int h, int w, int c, Rng& rng) {
    return {n, h, w, random_matrix(static_cast<Eigen::Index>(n) * h * w, c, rng)};
}

SuperpixelMap random_partition(int h, int w, int count, Rng& rng) {
    SuperpixelMap m{h, w, count, std::vector<std::int32_t>(static_cast<std::size_t>(h) * w)};
    for (std::size_t p = 0; p < m.labels.size(); ++p)
        m.labels[p] = p < static_cast<std::size_t>(count) ? static_cast<std::int32_t>(p)
                                                          : static_cast<std::int32_t>(rng.uniform_int(0, count - 1));
    return m;
}

// Weighted sum of the outputs makes every map a scalar function for the checker.
double dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

template <typename Fn>
double check(ParameterSet& set, Fn&& fn) {
    const std::vector<double> theta = set.gather();
    const DifferentiableFn f = [&](std::span<const double> t, std::span<double> g) {
        set.scatter(t);
        return fn(g);
    };
    const auto r = finite_diff_check(f, theta, 1e-5);
    set.scatter(theta);
    EXPECT_TRUE(r.finite);
    return r.max_relative_error;
}

template <typename M>
std::span<double> span_of(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

TEST(Conv, MatchesDirectLoops) {
    Rng rng(1);
    for (int stride : {1, 2}) {
        const Conv2d conv = Conv2d::initialize(3, 4, 3, stride, 1, rng);
        const Tensor in = random_tensor(2, 7, 6, 3, rng);
        const Tensor out = conv_forward(conv, in);
        ASSERT_EQ(out.height, conv.out_size(7));
        ASSERT_EQ(out.width, conv.out_size(6));
        for (int b = 0; b < 2; ++b)
            for (int oy = 0; oy < out.height; ++oy)
                for (int ox = 0; ox < out.width; ++ox)
                    for (int co = 0; co < 4; ++co) {
                        double s = conv.bias(co);
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx)
                                for (int ci = 0; ci < 3; ++ci) {
                                    const int iy = oy * stride - 1 + ky, ix = ox * stride - 1 + kx;
                                    if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6)
                                        continue;
                                    s += in.values((b * 7 + iy) * 6 + ix, ci) * conv.weight((ky * 3 + kx) * 3 + ci, co);
                                }
                        EXPECT_NEAR(out.values((b * out.height + oy) * out.width + ox, co), s, 1e-12);
                    }
    }
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
    Rng rng(2);
    Conv2d conv = Conv2d::initialize(2, 3, 3, 2, 1, rng);
    Tensor in = random_tensor(2, 6, 5, 2, rng);
    const Tensor probe0 = conv_forward(conv, in);
    const Matrix probe = random_matrix(probe0.values.rows(), probe0.values.cols(), rng);
    ParameterSet set;
    set.add(span_of(conv.weight));
    set.add(span_of(conv.bias));
    set.add(span_of(in.values));
    const double err = check(set, [&](std::span<double> g) {
        ConvCache cache;
        const Tensor out = conv_forward(conv, in, &cache);
        if (!g.empty()) {
            Matrix dw = Matrix::Zero(conv.weight.rows(), conv.weight.cols());
            RowVector db = RowVector::Zero(conv.bias.size());
            const Tensor din = conv_backward(conv, cache, {out.n, out.height, out.width, probe}, dw, db);
            auto it = std::copy(dw.data(), dw.data() + dw.size(), g.begin());
            it = std::copy(db.data(), db.data() + db.size(), it);
            std::copy(din.values.data(), din.values.data() + din.values.size(), it);
        }
        return dot(out.values, probe);
    });
    EXPECT_LT(err, 1e-7);
}

TEST(Upsample, BackwardMatchesFiniteDifferences) {
    Rng rng(3);
    Upsample2x up = Upsample2x::initialize(3, 2, 1.0, rng);
    up.bias = random_matrix(1, 2, rng);
    Tensor in = random_tensor(2, 3, 4, 3, rng);
    const Matrix probe = random_matrix(2 * 6 * 8, 2, rng);
    ParameterSet set;
    set.add(span_of(up.weight));
    set.add(span_of(up.bias));
    set.add(span_of(in.values));
    const double err = check(set, [&](std::span<double> g) {
        const Tensor out = upsample_forward(up, in);
        if (!g.empty()) {
            Matrix dw = Matrix::Zero(up.weight.rows(), up.weight.cols());
            RowVector db = RowVector::Zero(up.bias.size());
            const Tensor din = upsample_backward(up, in, {out.n, out.height, out.width, probe}, dw, db);
            auto it = std::copy(dw.data(), dw.data() + dw.size(), g.begin());
            it = std::copy(db.data(), db.data() + db.size(), it);
            std::copy(din.values.data(), din.values.data() + din.values.size(), it);
        }
        return dot(out.values, probe);
    });
    EXPECT_LT(err, 1e-7);
}

TEST(FusedPool, EqualsUpsampleThenPool) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const int h = 2 * static_cast<int>(rng.uniform_int(1, 8)), w = 2 * static_cast<int>(rng.uniform_int(1, 8));
        const int cin = static_cast<int>(rng.uniform_int(1, 6)), cout = static_cast<int>(rng.uniform_int(1, 6));
        Upsample2x up = Upsample2x::initialize(cin, cout, 1.0, rng);
        up.bias = random_matrix(1, cout, rng);
        const Tensor in = random_tensor(1, h / 2, w / 2, cin, rng);
        const SuperpixelMap s = random_partition(h, w, static_cast<int>(rng.uniform_int(1, std::min(h * w, 12))), rng);
        const Tensor full = upsample_forward(up, in);
        const Matrix expected = superpixel_pool(FeatureMap{h, w, full.values}, s);
        const Matrix fused = upsample_pool_forward(up, in.values, s);
        EXPECT_LT((fused - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(FusedPool, BackwardMatchesFiniteDifferences) {
    Rng rng(5);
    Upsample2x up = Upsample2x::initialize(3, 4, 1.0, rng);
    Matrix in = random_matrix(4 * 3, 3, rng);
    const SuperpixelMap s = random_partition(8, 6, 5, rng);
    const Matrix probe = random_matrix(5, 4, rng);
    ParameterSet set;
    set.add(span_of(up.weight));
    set.add(span_of(up.bias));
    set.add(span_of(in));
    const double err = check(set, [&](std::span<double> g) {
        FusedPoolCache cache;
        const Matrix f = upsample_pool_forward(up, in, s, &cache);
        if (!g.empty()) {
            Matrix dw = Matrix::Zero(up.weight.rows(), up.weight.cols());
            RowVector db = RowVector::Zero(up.bias.size());
            const Matrix din = upsample_pool_backward(up, cache, s, probe, dw, db);
            auto it = std::copy(dw.data(), dw.data() + dw.size(), g.begin());
            it = std::copy(db.data(), db.data() + db.size(), it);
            std::copy(din.data(), din.data() + din.size(), it);
        }
        return dot(f, probe);
    });
    EXPECT_LT(err, 1e-7);
}

TEST(Relu, ForwardAndMask) {
    Matrix m(1, 3);
    m << -1.0, 0.0, 2.0;
    relu_inplace(m);
    EXPECT_EQ(m, (Matrix(1, 3) << 0.0, 0.0, 2.0).finished());
    Matrix d = Matrix::Ones(1, 3);
    relu_backward_inplace(d, m);
    EXPECT_EQ(d, (Matrix(1, 3) << 0.0, 0.0, 1.0).finished());
}
