#pragma once

#include "lgcoamix/core_types.hpp"
#include "lgcoamix/rng.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace lgcoamix {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Decoded feature map stored as (H*W) x D, one row per pixel in raster order.
struct FeatureMap {
    int height = 0;
    int width = 0;
    Matrix values;

    [[nodiscard]] int depth() const { return static_cast<int>(values.cols()); }
};

/// Mean feature vector of every superpixel: row i of the result is the
/// average of zhat over the pixels labelled i. Result is L x D.
Matrix superpixel_pool(const FeatureMap& zhat, const SuperpixelMap& smap);

/// Gradient of superpixel_pool with respect to the feature map, (H*W) x D.
Matrix superpixel_pool_backward(const Matrix& d_pooled, const SuperpixelMap& smap);

struct AttentionParams {
    Matrix wq;
    Matrix wk;
    Matrix wv;
    RowVector gain;
    RowVector bias;
    double epsilon = 1e-5;

    [[nodiscard]] int depth() const { return static_cast<int>(wq.rows()); }
    void validate() const;

    /// Projections drawn from N(0, 1/D); gain 1, bias 0.
    static AttentionParams initialize(int depth, Rng& rng);
};

struct AttentionGrads {
    Matrix wq;
    Matrix wk;
    Matrix wv;
    RowVector gain;
    RowVector bias;

    static AttentionGrads zeros(int depth);
    void set_zero();
    AttentionGrads& operator+=(const AttentionGrads& other);
};

struct AttentionOutput {
    Matrix c;              // L x d attended vectors
    std::vector<double> w; // sigmoid of each row sum of c
};

/// Intermediate values kept for the backward pass.
struct AttentionCache {
    Matrix f;
    Matrix q;
    Matrix k;
    Matrix v;
    Matrix a;
    Matrix normalized;          // pre-gain LayerNorm output
    Eigen::VectorXd inv_std;    // per row
};

/// C = LayerNorm(F + softmax(Q K^T / sqrt(d)) V) with Q = F Wq, K = F Wk,
/// V = F Wv, followed by w_i = sigmoid(sum_k C_ik).
AttentionOutput self_attention(const Matrix& f, const AttentionParams& params,
                               AttentionCache* cache = nullptr);

/// Backpropagates dL/dC. Parameter gradients are accumulated into `grads`;
/// the return value is dL/dF. The weights w are not differentiated.
Matrix self_attention_backward(const Matrix& d_c, const AttentionParams& params,
                               const AttentionCache& cache, AttentionGrads& grads);

std::vector<double> attention_weights(const Matrix& c);

/// Indices of the max(1, floor(L * t)) largest weights, in descending weight
/// order; equal weights keep ascending index order.
std::vector<int> select_top(std::span<const double> weights, double t);
std::vector<int> select_top(const AttentionOutput& attended, double t);

}  // namespace lgcoamix
