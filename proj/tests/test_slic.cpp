#include "lgcoamix/slic.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace lgcoamix;

namespace {

Image solid(int h, int w, double r, double g, double b) {
    Image img(h, w, 3);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        img.pixels[3 * p] = r;
        img.pixels[3 * p + 1] = g;
        img.pixels[3 * p + 2] = b;
    }
    return img;
}

Image random_blobs(int h, int w, Rng& rng) {
    Image img(h, w, 3);
    const int blobs = 6;
    std::vector<double> cy(blobs), cx(blobs), col(3 * blobs);
    for (int i = 0; i < blobs; ++i) {
        cy[i] = rng.uniform(0, h);
        cx[i] = rng.uniform(0, w);
        for (int c = 0; c < 3; ++c)
            col[3 * i + c] = rng.uniform();
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            double bd = 1e9;
            for (int i = 0; i < blobs; ++i) {
                const double d = std::hypot(y - cy[i], x - cx[i]);
                if (d < bd) { bd = d; best = i; }
            }
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = std::clamp(col[3 * best + c] + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        }
    return img;
}

double size_cv(const SuperpixelMap& map) {
    const auto sizes = map.region_sizes();
    const double mean = static_cast<double>(map.labels.size()) / sizes.size();
    double var = 0;
    for (int s : sizes)
        var += (s - mean) * (s - mean);
    return std::sqrt(var / sizes.size()) / mean;
}

}  // namespace

TEST(RgbToLab, BlackIsOrigin) {
    const Image lab = rgb_to_lab(solid(1, 1, 0, 0, 0));
    EXPECT_NEAR(lab.pixels[0], 0.0, 1e-12);
    EXPECT_NEAR(lab.pixels[1], 0.0, 1e-12);
    EXPECT_NEAR(lab.pixels[2], 0.0, 1e-12);
}

TEST(RgbToLab, WhiteIsReferenceWhite) {
    const Image lab = rgb_to_lab(solid(1, 1, 1, 1, 1));
    EXPECT_NEAR(lab.pixels[0], 100.0, 1e-3);
    EXPECT_NEAR(lab.pixels[1], 0.0, 1e-3);
    EXPECT_NEAR(lab.pixels[2], 0.0, 1e-3);
}

TEST(RgbToLab, PureRedMatchesReferenceEvaluation) {
    // 40-digit evaluation of the sRGB -> XYZ -> Lab chain with the same
    // matrix and D65 white: (53.2407941413, 80.0924595964, 67.2031965159).
    const Image lab = rgb_to_lab(solid(1, 1, 1, 0, 0));
    EXPECT_NEAR(lab.pixels[0], 53.2407941413, 1e-8);
    EXPECT_NEAR(lab.pixels[1], 80.0924595964, 1e-8);
    EXPECT_NEAR(lab.pixels[2], 67.2031965159, 1e-8);
}

TEST(RgbToLab, RejectsGrayscale) {
    EXPECT_THROW(rgb_to_lab(Image(2, 2, 1)), InvalidInput);
}

TEST(Slic, UniformImageFourQuadrants) {
    Rng rng(0);
    const Image img = solid(32, 32, 0.5, 0.5, 0.5);
    const SuperpixelMap map = slic_segment(img, {.superpixels = 4}, rng);
    ASSERT_EQ(map.count, 4);
    for (int s : map.region_sizes())
        EXPECT_EQ(s, 256);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            EXPECT_EQ(map.at(y, x), (y / 16) * 2 + x / 16);

    // Zero colour variance reduces SLIC to spatial k-means from the grid.
    const auto expected = oracle::spatial_kmeans(32, 32, {7.5, 7.5, 23.5, 23.5},
                                                 {7.5, 23.5, 7.5, 23.5}, 10);
    EXPECT_EQ(map.labels, expected);
}

TEST(Slic, SingleSuperpixelCoversImage) {
    Rng rng(0);
    Rng data(11);
    const SuperpixelMap map = slic_segment(random_blobs(20, 24, data), {.superpixels = 1}, rng);
    EXPECT_EQ(map.count, 1);
    EXPECT_TRUE(std::all_of(map.labels.begin(), map.labels.end(), [](auto l) { return l == 0; }));
}

TEST(Slic, TwoColourImageSplitsAtTheEdge) {
    for (int edge : {13, 16, 19}) {
        Image img = solid(32, 32, 0.9, 0.1, 0.1);
        for (int y = 0; y < 32; ++y)
            for (int x = edge; x < 32; ++x) {
                img.at(y, x, 0) = 0.1;
                img.at(y, x, 1) = 0.2;
                img.at(y, x, 2) = 0.8;
            }
        Rng rng(0);
        const SuperpixelMap map = slic_segment(img, {.superpixels = 2}, rng);
        ASSERT_EQ(map.count, 2);
        // Two-cluster oracle: the assignment minimising colour distortion
        // puts each colour in its own cluster, so each row switches once at the edge.
        for (int y = 0; y < 32; ++y) {
            int switch_at = -1;
            for (int x = 1; x < 32; ++x)
                if (map.at(y, x) != map.at(y, x - 1)) {
                    EXPECT_EQ(switch_at, -1) << "row " << y << " switches twice";
                    switch_at = x;
                }
            EXPECT_LE(std::abs(switch_at - edge), 1) << "row " << y;
        }
    }
}

TEST(Slic, RejectsTooManySuperpixels) {
    Rng rng(0);
    EXPECT_THROW(slic_segment(solid(4, 4, 0, 0, 0), {.superpixels = 17}, rng), InvalidInput);
    EXPECT_THROW(slic_segment(solid(4, 4, 0, 0, 0), {.superpixels = 0}, rng), InvalidInput);
}

TEST(Slic, OnePixelPerSuperpixelDegeneratesSafely) {
    Rng rng(0), data(3);
    const Image img = random_blobs(8, 8, data);
    const SuperpixelMap map = slic_segment(img, {.superpixels = 64}, rng);
    EXPECT_LE(map.count, 64);
    EXPECT_FALSE(check_invariants(map));
}

TEST(Slic, UniformImagesHaveEvenRegions) {
    for (int q : {4, 9, 16, 25, 27, 30, 36}) {
        Rng rng(0);
        const SuperpixelMap map = slic_segment(solid(32, 32, 0.3, 0.6, 0.2), {.superpixels = q}, rng);
        EXPECT_LT(size_cv(map), 0.2) << "q = " << q;
        EXPECT_NEAR(map.count, q, 0.2 * q) << "q = " << q;
    }
}

TEST(Slic, DeterministicAndValidOnRandomImages) {
    Rng data(42);
    for (int trial = 0; trial < 20; ++trial) {
        const Image img = random_blobs(32, 32, data);
        SlicParams params{.superpixels = static_cast<int>(data.uniform_int(5, 40))};
        Rng a(trial), b(trial + 1000);
        const SuperpixelMap m1 = slic_segment(img, params, a);
        const SuperpixelMap m2 = slic_segment(img, params, b);
        EXPECT_EQ(m1, m2);
        ASSERT_FALSE(check_invariants(m1)) << *check_invariants(m1);
        for (int c : oracle::components_per_label(32, 32, m1.labels, m1.count))
            EXPECT_EQ(c, 1);
    }
}

TEST(Slic, GrayscaleUsesLightness) {
    Image img(16, 16, 1, 0.2);
    for (int y = 0; y < 16; ++y)
        for (int x = 8; x < 16; ++x)
            img.at(y, x) = 0.9;
    Rng rng(0);
    const SuperpixelMap map = slic_segment(img, {.superpixels = 2}, rng);
    ASSERT_EQ(map.count, 2);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            EXPECT_EQ(map.at(y, x), x < 8 ? 0 : 1);
}

TEST(EnforceConnectivity, ValidLabellingIsAFixedPoint) {
    std::vector<std::int32_t> labels(8 * 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            labels[y * 8 + x] = (y < 4 ? 0 : 2) + (x < 4 ? 0 : 1);
    const SuperpixelMap map = enforce_connectivity(8, 8, labels, 0.25);
    EXPECT_EQ(map.count, 4);
    EXPECT_EQ(map.labels, labels);
}

TEST(EnforceConnectivity, SmallIslandIsAbsorbed) {
    // Label 0 on the left half plus a 2x2 island inside the right half (label 1).
    std::vector<std::int32_t> labels(8 * 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            labels[y * 8 + x] = x < 4 ? 0 : 1;
    for (int y = 3; y < 5; ++y)
        for (int x = 5; x < 7; ++x)
            labels[y * 8 + x] = 0;
    const SuperpixelMap map = enforce_connectivity(8, 8, labels, 0.25);
    EXPECT_EQ(map.count, 2);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            EXPECT_EQ(map.at(y, x), x < 4 ? 0 : 1);
}

TEST(EnforceConnectivity, LargeFragmentsBecomeTheirOwnRegion) {
    // Label 0 split into two big halves by a full-height band of label 1.
    std::vector<std::int32_t> labels(6 * 9);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 9; ++x)
            labels[y * 9 + x] = (x >= 3 && x < 6) ? 1 : 0;
    const SuperpixelMap map = enforce_connectivity(6, 9, labels, 0.25);
    EXPECT_EQ(map.count, 3);
    EXPECT_FALSE(check_invariants(map));
    EXPECT_EQ(map.at(0, 0), 0);
    EXPECT_EQ(map.at(0, 8), 1);
    EXPECT_EQ(map.at(0, 4), 2);
}

TEST(EnforceConnectivity, RandomNoiseYieldsValidMaps) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(1, 20));
        const int w = static_cast<int>(rng.uniform_int(1, 20));
        const int k = static_cast<int>(rng.uniform_int(1, 10));
        std::vector<std::int32_t> labels(static_cast<std::size_t>(h) * w);
        for (auto& l : labels)
            l = static_cast<std::int32_t>(rng.uniform_int(0, k - 1)) * 3;  // sparse ids
        const SuperpixelMap map = enforce_connectivity(h, w, labels, rng.uniform(0.0, 1.0));
        ASSERT_FALSE(check_invariants(map)) << *check_invariants(map);
        for (int c : oracle::components_per_label(h, w, map.labels, map.count))
            EXPECT_EQ(c, 1);
        EXPECT_EQ(map.region_sizes().size(), static_cast<std::size_t>(map.count));
    }
}
