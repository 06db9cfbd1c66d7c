#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace lgcoamix {

/// f(theta) with its analytic gradient written to `grad` when grad is non-empty.
using DifferentiableFn = std::function<double(std::span<const double> theta, std::span<double> grad)>;

/// Optional per-coordinate veto, e.g. when a perturbation crosses a ReLU kink.
using CoordinateFilter = std::function<bool(std::size_t coordinate)>;

struct FiniteDiffResult {
    double max_relative_error = 0.0;
    bool finite = true;
    std::size_t checked = 0;
    std::size_t skipped = 0;

    [[nodiscard]] bool passed(double tolerance) const {
        return finite && max_relative_error < tolerance;
    }
};

/// Central differences (f(t + eps e_i) - f(t - eps e_i)) / 2 eps against the
/// analytic gradient at t. Error per coordinate is
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|); the maximum is
/// reported. A non-finite loss or gradient marks the result as failed.
FiniteDiffResult finite_diff_check(const DifferentiableFn& fn, std::span<const double> params,
                                   double epsilon, const CoordinateFilter& keep = {});

/// Flattened view over several parameter blocks, used to drive
/// finite_diff_check over structured models.
class ParameterSet {
public:
    void add(std::span<double> block) { blocks_.push_back(block); }
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::vector<double> gather() const;
    void gather_into(std::span<double> out) const;
    void scatter(std::span<const double> values) const;

private:
    std::vector<std::span<double>> blocks_;
};

/// Per-loss maxima of the relative gradient error over random small instances
/// of the superpixel pipeline (pooling -> attention -> selection -> losses).
struct PipelineGradcheckReport {
    double global = 0.0;
    double local = 0.0;
    double contrast = 0.0;
    double total = 0.0;
    bool finite = true;
    int trials = 0;

    [[nodiscard]] bool passed(double tolerance) const {
        return finite && global < tolerance && local < tolerance && contrast < tolerance &&
               total < tolerance;
    }
};

/// Each trial draws a two-image batch with L <= 8 superpixels per image,
/// feature depth d <= 8 and K <= 4 classes. Attention-based lambdas and the
/// top-t selection are computed once at the base point and held fixed.
PipelineGradcheckReport pipeline_gradcheck(std::uint64_t seed, int trials, double epsilon);

}  // namespace lgcoamix
