#pragma once

#include "lgcoamix/core_types.hpp"
#include "lgcoamix/rng.hpp"
#include "lgcoamix/slic.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lgcoamix {

enum class Source : std::uint8_t { x1 = 0, x2 = 1 };

/// Binary paste mask plus the S2 superpixels that produced it.
struct MixPlan {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> mask;       // 1 where the pixel comes from x2
    std::vector<int> selected_from_x2;    // ascending S2 ids
    int q1 = 0;
    int q2 = 0;

    [[nodiscard]] std::size_t mask_sum() const;
};

/// The augmented image with its own superpixel map. Superpixel ids of S_mix
/// list the surviving (possibly truncated) x1 regions first, in S1 order,
/// followed by the pasted x2 regions in S2 order.
struct MixedSample {
    Image mixed;
    SuperpixelMap smap;
    std::vector<Source> provenance;
    std::vector<int> pixel_counts;
    LabelVector y1;
    LabelVector y2;
};

MixPlan bernoulli_select(const SuperpixelMap& s2, double p, Rng& rng);

/// Builds a plan from an explicit set of S2 ids (duplicates are ignored).
MixPlan plan_from_selection(const SuperpixelMap& s2, std::span<const int> selected);

MixedSample compose_mix(const Image& x1, const Image& x2, const SuperpixelMap& s1,
                        const SuperpixelMap& s2, const MixPlan& plan);

/// Fraction of pixels taken from x2.
double lambda_area(const MixPlan& plan, int height, int width);

/// Attention-weighted share of the pasted superpixels:
/// sum_{i from x2} w_i |S_i| / sum_j w_j |S_j|.
double lambda_attention(std::span<const double> weights, const MixedSample& sample);

/// Per-pixel weight variant: sum of weights under the mask over the total.
double lambda_pixel_attention(std::span<const double> pixel_weights, const MixPlan& plan);

/// Broadcasts one weight per superpixel to every pixel of that superpixel.
std::vector<double> broadcast_weights(std::span<const double> weights, const SuperpixelMap& map);

LabelVector mix_labels(const LabelVector& y1, const LabelVector& y2, double lambda);

/// Label-mixing coefficient for the configured mode. `weights` are the
/// per-superpixel attention weights (ignored in area mode).
double mixing_lambda(LabelMixingMode mode, std::span<const double> weights,
                     const MixedSample& sample, const MixPlan& plan);

struct MixResult {
    MixedSample sample;
    MixPlan plan;
};

/// Seconds spent in each stage, accumulated across calls.
struct MixTimings {
    double segment = 0.0;
    double mix = 0.0;
};

/// Draws q1 then q2 from U(q_min, q_max), segments both images, selects S2
/// superpixels with probability p and composes the mixed sample. Labels are
/// carried through; the mixed label itself needs attention weights and is
/// produced later by mixing_lambda + mix_labels.
MixResult lgcoamix(const Image& x1, const LabelVector& y1, const Image& x2, const LabelVector& y2,
                   const MixConfig& config, Rng& rng, const SlicParams& slic = {},
                   MixTimings* timings = nullptr);

}  // namespace lgcoamix
