#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lgcoamix {

/// Raised whenever an operation receives arguments that violate its preconditions.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major H x W x C image with values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0);

    [[nodiscard]] std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    [[nodiscard]] std::size_t index(int y, int x, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c = 0) { return pixels[index(y, x, c)]; }
    [[nodiscard]] double at(int y, int x, int c = 0) const { return pixels[index(y, x, c)]; }

    /// 8-bit samples divided by 255.
    static Image from_bytes(int h, int w, int c, const std::vector<std::uint8_t>& bytes);
    /// Rounds each value to the nearest 8-bit level.
    [[nodiscard]] std::vector<std::uint8_t> to_bytes() const;

    bool operator==(const Image&) const = default;
};

void validate(const Image& image);

/// Probability distribution over K classes.
struct LabelVector {
    std::vector<double> probs;

    [[nodiscard]] std::size_t classes() const { return probs.size(); }
    /// Index of the largest entry (lowest index on ties).
    [[nodiscard]] int argmax() const;

    bool operator==(const LabelVector&) const = default;
};

void validate(const LabelVector& label);

LabelVector one_hot(int class_index, int classes);

/// H x W grid of superpixel ids in [0, count).
struct SuperpixelMap {
    int height = 0;
    int width = 0;
    int count = 0;
    std::vector<std::int32_t> labels;

    [[nodiscard]] std::int32_t at(int y, int x) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
    [[nodiscard]] std::vector<int> region_sizes() const;

    bool operator==(const SuperpixelMap&) const = default;
};

/// Returns a description of the first violated invariant (dense, contiguous,
/// non-empty and, when `require_connected`, 4-connected regions), or nullopt.
/// Mixed maps keep truncated x1 fragments under one id, so they are checked
/// with require_connected = false.
std::optional<std::string> check_invariants(const SuperpixelMap& map, bool require_connected = true);

enum class LabelMixingMode { area, pixel_attention, superpixel_attention };

std::string_view to_string(LabelMixingMode mode);
LabelMixingMode parse_label_mixing_mode(std::string_view name);

struct MixConfig {
    int q_min = 25;
    int q_max = 30;
    double p = 0.5;
    double top_fraction = 0.7;
    LabelMixingMode label_mixing = LabelMixingMode::superpixel_attention;

    void validate() const;
};

/// Denominator of the superpixel contrastive loss.
enum class ContrastForm {
    /// Anchor-positive term plus negatives only.
    pair_vs_negatives,
    /// All other samples in the batch (the usual supervised-contrastive form).
    all_others,
};

struct LossConfig {
    double gamma1 = 0.1;
    double gamma2 = 0.05;
    double tau = 0.7;
    ContrastForm contrast_form = ContrastForm::pair_vs_negatives;

    void validate() const;
};

}  // namespace lgcoamix
