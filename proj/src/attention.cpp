#include "lgcoamix/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lgcoamix {

Matrix superpixel_pool(const FeatureMap& zhat, const SuperpixelMap& smap) {
    if (zhat.height != smap.height || zhat.width != smap.width ||
        static_cast<std::size_t>(zhat.values.rows()) != smap.labels.size())
        throw InvalidInput("feature map and superpixel map must share H x W");
    Matrix pooled = Matrix::Zero(smap.count, zhat.values.cols());
    std::vector<int> counts(static_cast<std::size_t>(smap.count), 0);
    for (std::size_t p = 0; p < smap.labels.size(); ++p) {
        const auto l = smap.labels[p];
        pooled.row(l) += zhat.values.row(static_cast<Eigen::Index>(p));
        ++counts[static_cast<std::size_t>(l)];
    }
    for (int i = 0; i < smap.count; ++i) {
        if (counts[static_cast<std::size_t>(i)] == 0)
            throw InvalidInput("superpixel map contains an empty superpixel");
        pooled.row(i) /= counts[static_cast<std::size_t>(i)];
    }
    return pooled;
}

Matrix superpixel_pool_backward(const Matrix& d_pooled, const SuperpixelMap& smap) {
    if (d_pooled.rows() != smap.count)
        throw InvalidInput("gradient rows must match superpixel count");
    const auto sizes = smap.region_sizes();
    Matrix scaled = d_pooled;
    for (int i = 0; i < smap.count; ++i)
        scaled.row(i) /= sizes[static_cast<std::size_t>(i)];
    Matrix d_map(static_cast<Eigen::Index>(smap.labels.size()), d_pooled.cols());
    for (std::size_t p = 0; p < smap.labels.size(); ++p)
        d_map.row(static_cast<Eigen::Index>(p)) = scaled.row(smap.labels[p]);
    return d_map;
}

void AttentionParams::validate() const {
    const auto d = wq.rows();
    if (wq.cols() != d || wk.rows() != d || wk.cols() != d || wv.rows() != d || wv.cols() != d ||
        gain.size() != d || bias.size() != d)
        throw InvalidInput("attention parameters must be D x D with length-D gain/bias");
    if (!(epsilon > 0.0))
        throw InvalidInput("layer norm epsilon must be positive");
}

AttentionParams AttentionParams::initialize(int depth, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(depth));
    auto draw = [&] {
        Matrix m(depth, depth);
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = rng.normal(0.0, scale);
        return m;
    };
    AttentionParams p;
    p.wq = draw();
    p.wk = draw();
    p.wv = draw();
    p.gain = RowVector::Ones(depth);
    p.bias = RowVector::Zero(depth);
    return p;
}

AttentionGrads AttentionGrads::zeros(int depth) {
    return {Matrix::Zero(depth, depth), Matrix::Zero(depth, depth), Matrix::Zero(depth, depth),
            RowVector::Zero(depth), RowVector::Zero(depth)};
}

void AttentionGrads::set_zero() {
    wq.setZero();
    wk.setZero();
    wv.setZero();
    gain.setZero();
    bias.setZero();
}

AttentionGrads& AttentionGrads::operator+=(const AttentionGrads& other) {
    wq += other.wq;
    wk += other.wk;
    wv += other.wv;
    gain += other.gain;
    bias += other.bias;
    return *this;
}

AttentionOutput self_attention(const Matrix& f, const AttentionParams& params, AttentionCache* cache) {
    params.validate();
    if (f.cols() != params.depth())
        throw InvalidInput("feature depth does not match attention parameters");
    if (f.rows() < 1)
        throw InvalidInput("attention needs at least one superpixel");
    if (!f.allFinite())
        throw InvalidInput("attention inputs must be finite");

    const double scale = 1.0 / std::sqrt(static_cast<double>(params.depth()));
    Matrix q = f * params.wq;
    Matrix k = f * params.wk;
    Matrix v = f * params.wv;
    Matrix a = (q * k.transpose()) * scale;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        auto row = a.row(i);
        row = (row.array() - row.maxCoeff()).exp().matrix();
        row /= row.sum();
    }
    Matrix x = f + a * v;

    const auto d = static_cast<double>(x.cols());
    Matrix normalized(x.rows(), x.cols());
    Eigen::VectorXd inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const auto centered = (x.row(i).array() - mean).eval();
        const double var = centered.square().sum() / d;
        inv_std(i) = 1.0 / std::sqrt(var + params.epsilon);
        normalized.row(i) = (centered * inv_std(i)).matrix();
    }

    AttentionOutput out;
    out.c = (normalized.array().rowwise() * params.gain.array()).rowwise() + params.bias.array();
    out.w = attention_weights(out.c);
    if (cache) {
        cache->f = f;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->a = std::move(a);
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

Matrix self_attention_backward(const Matrix& d_c, const AttentionParams& params,
                               const AttentionCache& cache, AttentionGrads& grads) {
    const auto& xhat = cache.normalized;
    if (d_c.rows() != xhat.rows() || d_c.cols() != xhat.cols())
        throw InvalidInput("gradient shape does not match attention output");

    grads.gain += (d_c.array() * xhat.array()).colwise().sum().matrix();
    grads.bias += d_c.colwise().sum();

    // LayerNorm: dx = inv_std * (g - mean(g) - xhat * mean(g . xhat)), g = dC * gain.
    const Matrix g = d_c.array().rowwise() * params.gain.array();
    const auto d = static_cast<double>(xhat.cols());
    Matrix d_x(xhat.rows(), xhat.cols());
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        const double mean_g = g.row(i).sum() / d;
        const double mean_gx = g.row(i).dot(xhat.row(i)) / d;
        d_x.row(i) = cache.inv_std(i) *
                     ((g.row(i).array() - mean_g) - xhat.row(i).array() * mean_gx).matrix();
    }

    // Residual branch passes d_x straight to F; the attention branch follows.
    const Matrix d_a = d_x * cache.v.transpose();
    const Matrix d_v = cache.a.transpose() * d_x;
    Matrix d_s(d_a.rows(), d_a.cols());
    for (Eigen::Index i = 0; i < d_a.rows(); ++i) {
        const double inner = d_a.row(i).dot(cache.a.row(i));
        d_s.row(i) = (cache.a.row(i).array() * (d_a.row(i).array() - inner)).matrix();
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(params.depth()));
    const Matrix d_q = (d_s * cache.k) * scale;
    const Matrix d_k = (d_s.transpose() * cache.q) * scale;

    grads.wq.noalias() += cache.f.transpose() * d_q;
    grads.wk.noalias() += cache.f.transpose() * d_k;
    grads.wv.noalias() += cache.f.transpose() * d_v;

    Matrix d_f = d_x;
    d_f.noalias() += d_q * params.wq.transpose();
    d_f.noalias() += d_k * params.wk.transpose();
    d_f.noalias() += d_v * params.wv.transpose();
    return d_f;
}

std::vector<double> attention_weights(const Matrix& c) {
    std::vector<double> w(static_cast<std::size_t>(c.rows()));
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        const double s = c.row(i).sum();
        // Split by sign so exp never overflows.
        w[static_cast<std::size_t>(i)] =
            s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
    }
    return w;
}

std::vector<int> select_top(std::span<const double> weights, double t) {
    if (!(t > 0.0 && t <= 1.0))
        throw InvalidInput("top fraction must lie in (0, 1]");
    if (weights.empty())
        throw InvalidInput("cannot select from an empty weight vector");
    const auto total = static_cast<int>(weights.size());
    const int n = std::max(1, static_cast<int>(std::floor(total * t)));
    std::vector<int> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return weights[static_cast<std::size_t>(a)] > weights[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(n));
    return order;
}

std::vector<int> select_top(const AttentionOutput& attended, double t) {
    return select_top(attended.w, t);
}

}  // namespace lgcoamix
