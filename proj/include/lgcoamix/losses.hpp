#pragma once

#include "lgcoamix/attention.hpp"
#include "lgcoamix/core_types.hpp"
#include "lgcoamix/mixer.hpp"
#include "lgcoamix/rng.hpp"

#include <span>
#include <vector>

namespace lgcoamix {

enum class HeadRole { local, global };

/// Fully connected classifier: logits = x W + b, with W of shape in x K.
struct LinearHead {
    Matrix weight;
    RowVector bias;
    HeadRole role = HeadRole::global;

    [[nodiscard]] int inputs() const { return static_cast<int>(weight.rows()); }
    [[nodiscard]] int classes() const { return static_cast<int>(weight.cols()); }
    /// Applies the head to every row of x.
    [[nodiscard]] Matrix forward(const Matrix& x) const;

    static LinearHead initialize(int inputs, int classes, HeadRole role, Rng& rng);
};

struct LinearHeadGrads {
    Matrix weight;
    RowVector bias;

    static LinearHeadGrads zeros(const LinearHead& head);
    void set_zero();
    LinearHeadGrads& operator+=(const LinearHeadGrads& other);
};

/// -sum_k target_k * log softmax(logits)_k, evaluated through a shifted
/// log-sum-exp. When d_logits is non-empty it receives the gradient.
double cross_entropy_soft(std::span<const double> logits, const LabelVector& target,
                          std::span<double> d_logits = {});

/// Batch mean of cross_entropy_soft(logits_j, (1 - lambda_j) y1_j + lambda_j y2_j).
/// The lambdas are constants; d_logits (B x K) receives dL/dlogits.
double global_loss(const Matrix& logits, std::span<const LabelVector> y1,
                   std::span<const LabelVector> y2, std::span<const double> lambdas,
                   Matrix* d_logits = nullptr);

/// Selected superpixel vectors of one mixed image with their origins.
struct LocalLossItem {
    Matrix vectors;
    std::vector<Source> provenance;
    LabelVector y1;
    LabelVector y2;
};

struct LocalLossGrads {
    std::vector<Matrix> d_vectors;
    LinearHeadGrads head;
};

/// Per image, the sum over its selected superpixels of
/// CE(f_local(c_i), y1 or y2 by provenance); averaged over images.
double local_loss(std::span<const LocalLossItem> items, const LinearHead& head,
                  LocalLossGrads* grads = nullptr);

/// Unit-normalised superpixel embeddings pooled across a batch.
struct ContrastBatch {
    Matrix vectors;
    std::vector<int> classes;

    void validate() const;
};

/// Superpixel-wise supervised contrastive loss over the whole batch.
/// Anchors without a positive contribute zero but still count in N_B.
double contrastive_loss(const ContrastBatch& batch, double tau,
                        ContrastForm form = ContrastForm::pair_vs_negatives,
                        Matrix* d_vectors = nullptr);

double total_loss(double global, double local, double contrast, const LossConfig& config);

/// Row-wise L2 normalisation and its backward pass.
Matrix normalize_rows(const Matrix& x);
Matrix normalize_rows_backward(const Matrix& x, const Matrix& d_unit);

}  // namespace lgcoamix
