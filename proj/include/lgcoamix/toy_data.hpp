#pragma once

#include "lgcoamix/core_types.hpp"
#include "lgcoamix/rng.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace lgcoamix {

enum class Shape { disk, square, triangle, cross, ring, diamond };

inline constexpr int max_shape_classes = 6;

std::string_view to_string(Shape shape);

struct SyntheticSample {
    Image image;
    int label = 0;
    std::vector<std::uint8_t> mask;  // 1 on shape pixels
};

struct SyntheticDataset {
    std::vector<SyntheticSample> samples;
    int classes = 0;
    int size = 32;
    std::uint64_t seed = 0;
};

/// n/K samples of each of the first K shapes at random positions and scales
/// on textured noise, in a seeded random order.
SyntheticDataset make_synthetic_dataset(int n, int classes, std::uint64_t seed, int size = 32);

/// Shape mask with the given centre and radius on a size x size grid.
std::vector<std::uint8_t> render_shape(Shape shape, double cy, double cx, double radius, int size);

}  // namespace lgcoamix
