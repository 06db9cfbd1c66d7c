#include "lgcoamix/toy_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace lgcoamix {

std::string_view to_string(Shape shape) {
    static constexpr std::array<std::string_view, max_shape_classes> names{
        "disk", "square", "triangle", "cross", "ring", "diamond"};
    return names[static_cast<std::size_t>(shape)];
}

std::vector<std::uint8_t> render_shape(Shape shape, double cy, double cx, double r, int size) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
            const double ay = std::abs(dy), ax = std::abs(dx);
            bool in = false;
            switch (shape) {
            case Shape::disk: in = dy * dy + dx * dx <= r * r; break;
            case Shape::square: in = ay <= 0.85 * r && ax <= 0.85 * r; break;
            case Shape::triangle: in = dy >= -r && dy <= r && ax <= (dy + r) / 2; break;
            case Shape::cross: in = (ax <= r / 3 && ay <= r) || (ay <= r / 3 && ax <= r); break;
            case Shape::ring: {
                const double d2 = dy * dy + dx * dx;
                in = d2 <= r * r && d2 >= 0.3 * r * r;
                break;
            }
            case Shape::diamond: in = ax + ay <= r; break;
            }
            mask[static_cast<std::size_t>(y) * size + x] = in ? 1 : 0;
        }
    return mask;
}

namespace {

SyntheticSample draw(int label, int size, Rng& rng) {
    SyntheticSample s;
    s.label = label;
    const double r = rng.uniform(0.2, 0.34) * size;
    const double cy = rng.uniform(r + 1, size - r - 1);
    const double cx = rng.uniform(r + 1, size - r - 1);
    s.mask = render_shape(static_cast<Shape>(label), cy, cx, r, size);

    std::array<double, 3> bg{}, fg{};
    for (int c = 0; c < 3; ++c) {
        bg[c] = rng.uniform(0.05, 0.4);
        fg[c] = rng.uniform(0.55, 0.95);
    }
    // Low-frequency stripes plus per-pixel grain.
    const double fy = rng.uniform(0.1, 0.6), fx = rng.uniform(0.1, 0.6);
    const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
    s.image = Image(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool on = s.mask[static_cast<std::size_t>(y) * size + x] != 0;
            const double texture = 0.08 * std::sin(fy * y + fx * x + phase);
            for (int c = 0; c < 3; ++c) {
                const double base = on ? fg[c] : bg[c] + texture;
                s.image.at(y, x, c) = std::clamp(base + rng.uniform(-0.06, 0.06), 0.0, 1.0);
            }
        }
    return s;
}

}  // namespace

SyntheticDataset make_synthetic_dataset(int n, int classes, std::uint64_t seed, int size) {
    if (classes < 2 || classes > max_shape_classes)
        throw InvalidInput("the toy generator supports 2 to 6 classes");
    if (n <= 0 || n % classes != 0)
        throw InvalidInput("sample count must be a positive multiple of the class count");
    if (size < 8 || size % 4 != 0)
        throw InvalidInput("image size must be a multiple of 4, at least 8");
    Rng rng(seed);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        labels[static_cast<std::size_t>(i)] = i % classes;
    for (std::size_t i = labels.size() - 1; i > 0; --i)
        std::swap(labels[i], labels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    SyntheticDataset ds;
    ds.classes = classes;
    ds.size = size;
    ds.seed = seed;
    ds.samples.reserve(labels.size());
    for (int label : labels)
        ds.samples.push_back(draw(label, size, rng));
    return ds;
}

}  // namespace lgcoamix
