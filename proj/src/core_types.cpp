#include "lgcoamix/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lgcoamix {

Image::Image(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      pixels(static_cast<std::size_t>(std::max(h, 0)) * std::max(w, 0) * std::max(c, 0), fill) {}

Image Image::from_bytes(int h, int w, int c, const std::vector<std::uint8_t>& bytes) {
    Image img(h, w, c);
    if (bytes.size() != img.pixels.size())
        throw InvalidInput("byte buffer does not match image shape");
    std::transform(bytes.begin(), bytes.end(), img.pixels.begin(),
                   [](std::uint8_t b) { return b / 255.0; });
    return img;
}

std::vector<std::uint8_t> Image::to_bytes() const {
    std::vector<std::uint8_t> out(pixels.size());
    std::transform(pixels.begin(), pixels.end(), out.begin(), [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    return out;
}

void validate(const Image& image) {
    if (image.height < 1 || image.width < 1)
        throw InvalidInput("image must be at least 1x1");
    if (image.channels != 1 && image.channels != 3)
        throw InvalidInput("image must have 1 or 3 channels");
    if (image.pixels.size() != image.pixel_count() * image.channels)
        throw InvalidInput("pixel buffer size does not match H*W*C");
    for (double v : image.pixels)
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidInput("pixel values must lie in [0, 1]");
}

int LabelVector::argmax() const {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void validate(const LabelVector& label) {
    if (label.probs.empty())
        throw InvalidInput("label vector is empty");
    double sum = 0.0;
    for (double v : label.probs) {
        if (!(v >= 0.0))
            throw InvalidInput("label entries must be non-negative");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidInput("label entries must sum to 1");
}

LabelVector one_hot(int class_index, int classes) {
    if (classes < 1)
        throw InvalidInput("class count must be positive");
    if (class_index < 0 || class_index >= classes)
        throw InvalidInput("class index out of range");
    LabelVector y{std::vector<double>(static_cast<std::size_t>(classes), 0.0)};
    y.probs[static_cast<std::size_t>(class_index)] = 1.0;
    return y;
}

std::vector<int> SuperpixelMap::region_sizes() const {
    std::vector<int> sizes(static_cast<std::size_t>(std::max(count, 0)), 0);
    for (auto l : labels)
        if (l >= 0 && l < count)
            ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

std::optional<std::string> check_invariants(const SuperpixelMap& map, bool require_connected) {
    if (map.height < 1 || map.width < 1)
        return "map must be at least 1x1";
    const std::size_t n = static_cast<std::size_t>(map.height) * map.width;
    if (map.labels.size() != n)
        return "label buffer size does not match H*W";
    if (map.count < 1)
        return "superpixel count must be positive";
    for (auto l : map.labels)
        if (l < 0 || l >= map.count)
            return "label outside [0, L)";

    // Flood fill per id; a second component of the same id breaks connectivity.
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::uint8_t> id_started(static_cast<std::size_t>(map.count), 0);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (seen[start])
            continue;
        const auto id = map.labels[start];
        if (id_started[static_cast<std::size_t>(id)] && require_connected)
            return "superpixel " + std::to_string(id) + " is not 4-connected";
        id_started[static_cast<std::size_t>(id)] = 1;
        seen[start] = 1;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const int y = static_cast<int>(p / map.width);
            const int x = static_cast<int>(p % map.width);
            auto visit = [&](int yy, int xx) {
                if (yy < 0 || yy >= map.height || xx < 0 || xx >= map.width)
                    return;
                const std::size_t q = static_cast<std::size_t>(yy) * map.width + xx;
                if (!seen[q] && map.labels[q] == id) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            };
            visit(y - 1, x);
            visit(y + 1, x);
            visit(y, x - 1);
            visit(y, x + 1);
        }
    }
    for (int id = 0; id < map.count; ++id)
        if (!id_started[static_cast<std::size_t>(id)])
            return "superpixel " + std::to_string(id) + " is empty";
    return std::nullopt;
}

std::string_view to_string(LabelMixingMode mode) {
    switch (mode) {
    case LabelMixingMode::area: return "area";
    case LabelMixingMode::pixel_attention: return "pixel_attention";
    case LabelMixingMode::superpixel_attention: return "superpixel_attention";
    }
    return "unknown";
}

LabelMixingMode parse_label_mixing_mode(std::string_view name) {
    if (name == "area") return LabelMixingMode::area;
    if (name == "pixel_attention") return LabelMixingMode::pixel_attention;
    if (name == "superpixel_attention") return LabelMixingMode::superpixel_attention;
    throw InvalidInput("unknown label mixing mode: " + std::string(name));
}

void MixConfig::validate() const {
    if (q_min < 1 || q_min > q_max)
        throw InvalidInput("superpixel bounds must satisfy 1 <= q_min <= q_max");
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidInput("Bernoulli probability must lie in [0, 1]");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0))
        throw InvalidInput("top fraction must lie in (0, 1]");
}

void LossConfig::validate() const {
    if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0))
        throw InvalidInput("loss weights must be non-negative");
    if (!(tau > 0.0))
        throw InvalidInput("temperature must be positive");
}

}  // namespace lgcoamix
