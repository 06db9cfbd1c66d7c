#include "lgcoamix/mixer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace lgcoamix {

std::size_t MixPlan::mask_sum() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

MixPlan plan_from_selection(const SuperpixelMap& s2, std::span<const int> selected) {
    std::vector<std::uint8_t> chosen(static_cast<std::size_t>(s2.count), 0);
    for (int id : selected) {
        if (id < 0 || id >= s2.count)
            throw InvalidInput("selected superpixel id out of range");
        chosen[static_cast<std::size_t>(id)] = 1;
    }
    MixPlan plan;
    plan.height = s2.height;
    plan.width = s2.width;
    for (int id = 0; id < s2.count; ++id)
        if (chosen[static_cast<std::size_t>(id)])
            plan.selected_from_x2.push_back(id);
    plan.mask.resize(s2.labels.size());
    std::transform(s2.labels.begin(), s2.labels.end(), plan.mask.begin(),
                   [&](std::int32_t l) { return chosen[static_cast<std::size_t>(l)]; });
    return plan;
}

MixPlan bernoulli_select(const SuperpixelMap& s2, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidInput("Bernoulli probability must lie in [0, 1]");
    std::vector<int> selected;
    for (int id = 0; id < s2.count; ++id)
        if (rng.bernoulli(p))
            selected.push_back(id);
    return plan_from_selection(s2, selected);
}

MixedSample compose_mix(const Image& x1, const Image& x2, const SuperpixelMap& s1,
                        const SuperpixelMap& s2, const MixPlan& plan) {
    const int h = x1.height;
    const int w = x1.width;
    if (x2.height != h || x2.width != w || s1.height != h || s1.width != w || s2.height != h ||
        s2.width != w || plan.height != h || plan.width != w)
        throw InvalidInput("images, superpixel maps and mask must share one H x W");
    if (x1.channels != x2.channels)
        throw InvalidInput("images must have the same channel count");
    const std::size_t n = x1.pixel_count();
    if (plan.mask.size() != n || s1.labels.size() != n || s2.labels.size() != n)
        throw InvalidInput("buffer sizes do not match H x W");

    MixedSample out;
    out.mixed = Image(h, w, x1.channels);
    const int c = x1.channels;
    for (std::size_t p = 0; p < n; ++p) {
        const auto& src = plan.mask[p] ? x2.pixels : x1.pixels;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(p * c), c,
                    out.mixed.pixels.begin() + static_cast<std::ptrdiff_t>(p * c));
    }

    // Offset S2 ids past S1, then compact away ids that lost all pixels.
    const int offset = s1.count;
    std::vector<std::int32_t> raw(n);
    std::vector<int> counts(static_cast<std::size_t>(s1.count + s2.count), 0);
    for (std::size_t p = 0; p < n; ++p) {
        raw[p] = plan.mask[p] ? s2.labels[p] + offset : s1.labels[p];
        ++counts[static_cast<std::size_t>(raw[p])];
    }
    std::vector<std::int32_t> remap(counts.size(), -1);
    for (std::size_t id = 0; id < counts.size(); ++id) {
        if (counts[id] == 0)
            continue;
        remap[id] = static_cast<std::int32_t>(out.provenance.size());
        out.provenance.push_back(static_cast<int>(id) < offset ? Source::x1 : Source::x2);
        out.pixel_counts.push_back(counts[id]);
    }
    out.smap.height = h;
    out.smap.width = w;
    out.smap.count = static_cast<int>(out.provenance.size());
    out.smap.labels.resize(n);
    std::transform(raw.begin(), raw.end(), out.smap.labels.begin(),
                   [&](std::int32_t id) { return remap[static_cast<std::size_t>(id)]; });
    return out;
}

double lambda_area(const MixPlan& plan, int height, int width) {
    const auto n = static_cast<std::size_t>(height) * width;
    if (plan.mask.size() != n)
        throw InvalidInput("mask does not match H x W");
    return static_cast<double>(plan.mask_sum()) / static_cast<double>(n);
}

double lambda_attention(std::span<const double> weights, const MixedSample& sample) {
    if (weights.size() != sample.provenance.size() ||
        sample.pixel_counts.size() != sample.provenance.size())
        throw InvalidInput("need exactly one weight per mixed superpixel");
    double pasted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double semantics = weights[i] * sample.pixel_counts[i];
        total += semantics;
        if (sample.provenance[i] == Source::x2)
            pasted += semantics;
    }
    return total > 0.0 ? pasted / total : 0.0;
}

double lambda_pixel_attention(std::span<const double> pixel_weights, const MixPlan& plan) {
    if (pixel_weights.size() != plan.mask.size())
        throw InvalidInput("need exactly one weight per pixel");
    double pasted = 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < pixel_weights.size(); ++p) {
        total += pixel_weights[p];
        if (plan.mask[p])
            pasted += pixel_weights[p];
    }
    return total > 0.0 ? pasted / total : 0.0;
}

std::vector<double> broadcast_weights(std::span<const double> weights, const SuperpixelMap& map) {
    if (weights.size() != static_cast<std::size_t>(map.count))
        throw InvalidInput("need exactly one weight per superpixel");
    std::vector<double> out(map.labels.size());
    std::transform(map.labels.begin(), map.labels.end(), out.begin(),
                   [&](std::int32_t l) { return weights[static_cast<std::size_t>(l)]; });
    return out;
}

LabelVector mix_labels(const LabelVector& y1, const LabelVector& y2, double lambda) {
    if (y1.classes() != y2.classes())
        throw InvalidInput("labels must have the same class count");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw InvalidInput("lambda must lie in [0, 1]");
    LabelVector out{std::vector<double>(y1.classes())};
    for (std::size_t k = 0; k < out.probs.size(); ++k)
        out.probs[k] = (1.0 - lambda) * y1.probs[k] + lambda * y2.probs[k];
    return out;
}

double mixing_lambda(LabelMixingMode mode, std::span<const double> weights,
                     const MixedSample& sample, const MixPlan& plan) {
    switch (mode) {
    case LabelMixingMode::area:
        return lambda_area(plan, plan.height, plan.width);
    case LabelMixingMode::pixel_attention:
        return lambda_pixel_attention(broadcast_weights(weights, sample.smap), plan);
    case LabelMixingMode::superpixel_attention:
        return lambda_attention(weights, sample);
    }
    throw InvalidInput("unknown label mixing mode");
}

MixResult lgcoamix(const Image& x1, const LabelVector& y1, const Image& x2, const LabelVector& y2,
                   const MixConfig& config, Rng& rng, const SlicParams& slic, MixTimings* timings) {
    using clock = std::chrono::steady_clock;
    auto elapsed = [](clock::time_point from) { return std::chrono::duration<double>(clock::now() - from).count(); };
    config.validate();
    validate(x1);
    validate(x2);
    if (x1.height != x2.height || x1.width != x2.width || x1.channels != x2.channels)
        throw InvalidInput("source images must have the same shape");

    const auto max_q = static_cast<std::int64_t>(x1.pixel_count());
    const int q1 = static_cast<int>(std::min<std::int64_t>(rng.uniform_int(config.q_min, config.q_max), max_q));
    const int q2 = static_cast<int>(std::min<std::int64_t>(rng.uniform_int(config.q_min, config.q_max), max_q));

    auto start = clock::now();
    SlicParams p1 = slic;
    p1.superpixels = q1;
    SlicParams p2 = slic;
    p2.superpixels = q2;
    const SuperpixelMap s1 = slic_segment(x1, p1, rng);
    const SuperpixelMap s2 = slic_segment(x2, p2, rng);
    if (timings) {
        timings->segment += elapsed(start);
        start = clock::now();
    }

    MixResult result;
    result.plan = bernoulli_select(s2, config.p, rng);
    result.plan.q1 = q1;
    result.plan.q2 = q2;
    result.sample = compose_mix(x1, x2, s1, s2, result.plan);
    result.sample.y1 = y1;
    result.sample.y2 = y2;
    if (timings)
        timings->mix += elapsed(start);
    return result;
}

}  // namespace lgcoamix
