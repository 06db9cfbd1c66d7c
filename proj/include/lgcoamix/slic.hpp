#pragma once

#include "lgcoamix/core_types.hpp"
#include "lgcoamix/rng.hpp"

#include <cstdint>
#include <span>

namespace lgcoamix {

struct SlicParams {
    int superpixels = 30;
    double compactness = 10.0;
    int iterations = 10;
    /// Connected fragments smaller than this fraction of the mean region size
    /// are merged into their largest neighbour.
    double min_region_fraction = 0.25;

    void validate() const;
};

/// sRGB (D65) to CIE L*a*b*. Requires a 3-channel image; values are not
/// clamped to [0, 1] in the result (L spans [0, 100], a/b are signed).
Image rgb_to_lab(const Image& image);

/// SLIC superpixels: grid-initialised centres, localized k-means over
/// d = d_lab + (compactness / S) * d_xy inside a 2S x 2S window, followed
/// by connectivity enforcement. Grayscale input clusters on lightness only.
///
/// The result is a pure function of (image, params); `rng` is accepted so
/// that seeded centre perturbation can be added without an API change.
SuperpixelMap slic_segment(const Image& image, const SlicParams& params, Rng& rng);

/// Splits every label into its 4-connected components, merges components
/// smaller than min_region_fraction * (H*W / L) into the largest adjacent
/// region and renumbers to 0..L'-1 (ordered by original id, then raster
/// position of the first pixel, so a valid labelling is a fixed point).
SuperpixelMap enforce_connectivity(int height, int width, std::span<const std::int32_t> labels,
                                   double min_region_fraction);

}  // namespace lgcoamix
