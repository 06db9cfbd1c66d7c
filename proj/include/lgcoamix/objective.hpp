#pragma once

#include "lgcoamix/attention.hpp"
#include "lgcoamix/losses.hpp"
#include "lgcoamix/mixer.hpp"

#include <span>
#include <vector>

namespace lgcoamix {

/// Forward state of the superpixel branch for one mixed image:
/// pooling -> self-attention -> weights -> top-t selection.
struct BranchState {
    Matrix pooled;
    AttentionCache cache;
    AttentionOutput attended;
    std::vector<int> selected;
};

/// Runs the branch. A non-empty `frozen_selection` replaces the top-t
/// ranking, which lets finite differences see a fixed selection.
BranchState branch_forward(const FeatureMap& zhat, const SuperpixelMap& smap,
                           const AttentionParams& params, double top_fraction,
                           std::span<const int> frozen_selection = {});

/// Same branch starting from already pooled superpixel features (L x D).
BranchState branch_from_pooled(Matrix pooled, const AttentionParams& params, double top_fraction,
                               std::span<const int> frozen_selection = {});

/// Per-superpixel ground truth of one mixed image.
struct SuperpixelTargets {
    std::vector<Source> provenance;
    LabelVector y1;
    LabelVector y2;
};

struct LocalObjective {
    double local = 0.0;
    double contrast = 0.0;
    /// d(local_weight * local + contrast_weight * contrast) / dC, per image.
    std::vector<Matrix> d_attended;
    LinearHeadGrads local_head;
};

/// Local classification and superpixel contrastive losses over a batch of
/// branch states. Contrast vectors are the unit-normalised selected rows of
/// C; their classes come from provenance.
LocalObjective local_objective(std::span<const BranchState> states,
                               std::span<const SuperpixelTargets> targets,
                               const LinearHead& local_head, const LossConfig& config,
                               double local_weight, double contrast_weight, bool with_grads = true);

/// Backpropagates dL/dC through attention and pooling; returns dL/dZhat.
Matrix branch_backward(const BranchState& state, const Matrix& d_attended,
                       const AttentionParams& params, const SuperpixelMap& smap,
                       AttentionGrads& grads);

/// Backpropagates dL/dC through attention only; returns dL/dF (L x D).
Matrix branch_backward_pooled(const BranchState& state, const Matrix& d_attended,
                              const AttentionParams& params, AttentionGrads& grads);

}  // namespace lgcoamix
