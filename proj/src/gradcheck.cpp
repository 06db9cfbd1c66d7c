#include "lgcoamix/gradcheck.hpp"

#include "lgcoamix/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lgcoamix {

FiniteDiffResult finite_diff_check(const DifferentiableFn& fn, std::span<const double> params,
                                   double epsilon, const CoordinateFilter& keep) {
    if (!(epsilon > 0.0))
        throw InvalidInput("finite difference step must be positive");
    FiniteDiffResult result;
    std::vector<double> theta(params.begin(), params.end());
    std::vector<double> analytic(theta.size());
    const double base = fn(theta, analytic);
    if (!std::isfinite(base) ||
        !std::all_of(analytic.begin(), analytic.end(), [](double g) { return std::isfinite(g); })) {
        result.finite = false;
        result.max_relative_error = std::numeric_limits<double>::infinity();
        return result;
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (keep && !keep(i)) {
            ++result.skipped;
            continue;
        }
        const double original = theta[i];
        theta[i] = original + epsilon;
        const double plus = fn(theta, {});
        theta[i] = original - epsilon;
        const double minus = fn(theta, {});
        theta[i] = original;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            result.finite = false;
            result.max_relative_error = std::numeric_limits<double>::infinity();
            return result;
        }
        const double numeric = (plus - minus) / (2.0 * epsilon);
        const double err =
            std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        result.max_relative_error = std::max(result.max_relative_error, err);
        ++result.checked;
    }
    return result;
}

std::size_t ParameterSet::size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_)
        n += b.size();
    return n;
}

std::vector<double> ParameterSet::gather() const {
    std::vector<double> out(size());
    gather_into(out);
    return out;
}

void ParameterSet::gather_into(std::span<double> out) const {
    if (out.size() != size())
        throw InvalidInput("parameter buffer has the wrong size");
    auto it = out.begin();
    for (const auto& b : blocks_)
        it = std::copy(b.begin(), b.end(), it);
}

void ParameterSet::scatter(std::span<const double> values) const {
    if (values.size() != size())
        throw InvalidInput("parameter buffer has the wrong size");
    auto it = values.begin();
    for (const auto& b : blocks_) {
        std::copy_n(it, b.size(), b.begin());
        it += static_cast<std::ptrdiff_t>(b.size());
    }
}

namespace {

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void fill_normal(Matrix& m, Rng& rng, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.normal(0.0, stddev);
}

struct Weights {
    double global;
    double local;
    double contrast;
};

struct Instance {
    std::vector<FeatureMap> zhat;
    std::vector<SuperpixelMap> maps;
    std::vector<SuperpixelTargets> targets;
    std::vector<std::vector<int>> selection;
    std::vector<double> lambdas;
    std::vector<LabelVector> y1;
    std::vector<LabelVector> y2;
    AttentionParams attention;
    LinearHead local_head;
    LinearHead global_head;
    Matrix encoded;
    LossConfig loss;
    double top_fraction = 0.7;
};

struct Gradients {
    std::vector<Matrix> zhat;
    AttentionGrads attention;
    LinearHeadGrads local_head;
    LinearHeadGrads global_head;
    Matrix encoded;
};

Instance make_instance(Rng& rng) {
    Instance inst;
    const int images = 2;
    const int depth = static_cast<int>(rng.uniform_int(3, 8));
    const int classes = static_cast<int>(rng.uniform_int(2, 4));
    const int encoded_depth = static_cast<int>(rng.uniform_int(3, 8));

    for (int b = 0; b < images; ++b) {
        const int h = static_cast<int>(rng.uniform_int(3, 5));
        const int w = static_cast<int>(rng.uniform_int(3, 5));
        const int n = h * w;
        const int count = static_cast<int>(rng.uniform_int(3, std::min(8, n)));

        // Every id gets one pixel from a random permutation, the rest are random.
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = n - 1; i > 0; --i)
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
        SuperpixelMap map{h, w, count, std::vector<std::int32_t>(static_cast<std::size_t>(n))};
        for (int i = 0; i < n; ++i)
            map.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
                i < count ? i : static_cast<std::int32_t>(rng.uniform_int(0, count - 1));

        FeatureMap zhat{h, w, Matrix(n, depth)};
        fill_normal(zhat.values, rng, 1.0);

        SuperpixelTargets tgt;
        for (int i = 0; i < count; ++i)
            tgt.provenance.push_back(rng.bernoulli(0.5) ? Source::x2 : Source::x1);
        tgt.y1 = one_hot(static_cast<int>(rng.uniform_int(0, classes - 1)), classes);
        tgt.y2 = one_hot(static_cast<int>(rng.uniform_int(0, classes - 1)), classes);

        inst.y1.push_back(tgt.y1);
        inst.y2.push_back(tgt.y2);
        inst.maps.push_back(std::move(map));
        inst.zhat.push_back(std::move(zhat));
        inst.targets.push_back(std::move(tgt));
    }

    inst.attention = AttentionParams::initialize(depth, rng);
    fill_normal(inst.attention.wq, rng, 0.6);
    fill_normal(inst.attention.wk, rng, 0.6);
    for (Eigen::Index i = 0; i < depth; ++i) {
        inst.attention.gain(i) = rng.uniform(0.5, 1.5);
        inst.attention.bias(i) = rng.normal(0.0, 0.2);
    }
    inst.local_head = LinearHead::initialize(depth, classes, HeadRole::local, rng);
    inst.global_head = LinearHead::initialize(encoded_depth, classes, HeadRole::global, rng);
    for (Eigen::Index k = 0; k < classes; ++k) {
        inst.local_head.bias(k) = rng.normal(0.0, 0.3);
        inst.global_head.bias(k) = rng.normal(0.0, 0.3);
    }
    inst.encoded.resize(images, encoded_depth);
    fill_normal(inst.encoded, rng, 1.0);

    // Freeze the selection and the attention-based lambdas at the base point.
    for (int b = 0; b < images; ++b) {
        const auto state = branch_forward(inst.zhat[static_cast<std::size_t>(b)],
                                          inst.maps[static_cast<std::size_t>(b)], inst.attention,
                                          inst.top_fraction);
        inst.selection.push_back(state.selected);
        MixedSample sample;
        sample.smap = inst.maps[static_cast<std::size_t>(b)];
        sample.provenance = inst.targets[static_cast<std::size_t>(b)].provenance;
        sample.pixel_counts = sample.smap.region_sizes();
        inst.lambdas.push_back(lambda_attention(state.attended.w, sample));
    }
    return inst;
}

Gradients make_gradients(const Instance& inst) {
    Gradients g;
    for (const auto& z : inst.zhat)
        g.zhat.push_back(Matrix::Zero(z.values.rows(), z.values.cols()));
    g.attention = AttentionGrads::zeros(inst.attention.depth());
    g.local_head = LinearHeadGrads::zeros(inst.local_head);
    g.global_head = LinearHeadGrads::zeros(inst.global_head);
    g.encoded = Matrix::Zero(inst.encoded.rows(), inst.encoded.cols());
    return g;
}

ParameterSet parameters_of(Instance& inst) {
    ParameterSet set;
    for (auto& z : inst.zhat)
        set.add(view(z.values));
    set.add(view(inst.attention.wq));
    set.add(view(inst.attention.wk));
    set.add(view(inst.attention.wv));
    set.add(view(inst.attention.gain));
    set.add(view(inst.attention.bias));
    set.add(view(inst.local_head.weight));
    set.add(view(inst.local_head.bias));
    set.add(view(inst.global_head.weight));
    set.add(view(inst.global_head.bias));
    set.add(view(inst.encoded));
    return set;
}

ParameterSet parameters_of(Gradients& g) {
    ParameterSet set;
    for (auto& z : g.zhat)
        set.add(view(z));
    set.add(view(g.attention.wq));
    set.add(view(g.attention.wk));
    set.add(view(g.attention.wv));
    set.add(view(g.attention.gain));
    set.add(view(g.attention.bias));
    set.add(view(g.local_head.weight));
    set.add(view(g.local_head.bias));
    set.add(view(g.global_head.weight));
    set.add(view(g.global_head.bias));
    set.add(view(g.encoded));
    return set;
}

double evaluate(const Instance& inst, const Weights& weights, Gradients* grads) {
    const Matrix logits = inst.global_head.forward(inst.encoded);
    Matrix d_logits;
    const double global = global_loss(logits, inst.y1, inst.y2, inst.lambdas, grads ? &d_logits : nullptr);

    std::vector<BranchState> states;
    for (std::size_t b = 0; b < inst.zhat.size(); ++b)
        states.push_back(branch_forward(inst.zhat[b], inst.maps[b], inst.attention, inst.top_fraction,
                                        inst.selection[b]));
    const LocalObjective local = local_objective(states, inst.targets, inst.local_head, inst.loss,
                                                 weights.local, weights.contrast, grads != nullptr);

    if (grads) {
        d_logits *= weights.global;
        grads->global_head.weight.noalias() = inst.encoded.transpose() * d_logits;
        grads->global_head.bias = d_logits.colwise().sum();
        grads->encoded.noalias() = d_logits * inst.global_head.weight.transpose();
        grads->local_head.weight = local.local_head.weight;
        grads->local_head.bias = local.local_head.bias;
        grads->attention.set_zero();
        // Copy from lvalues: a move-assignment would swap out the buffers
        // that the ParameterSet views point at.
        for (std::size_t b = 0; b < states.size(); ++b) {
            const Matrix d_zhat = branch_backward(states[b], local.d_attended[b], inst.attention,
                                                  inst.maps[b], grads->attention);
            grads->zhat[b] = d_zhat;
        }
    }
    return weights.global * global + weights.local * local.local + weights.contrast * local.contrast;
}

double check_one(Instance inst, const Weights& weights, double epsilon, bool& finite) {
    Gradients grads = make_gradients(inst);
    const ParameterSet params = parameters_of(inst);
    const ParameterSet grad_view = parameters_of(grads);
    const std::vector<double> base = params.gather();
    DifferentiableFn fn = [&](std::span<const double> theta, std::span<double> grad) {
        params.scatter(theta);
        const double loss = evaluate(inst, weights, grad.empty() ? nullptr : &grads);
        if (!grad.empty())
            grad_view.gather_into(grad);
        return loss;
    };
    const auto result = finite_diff_check(fn, base, epsilon);
    finite = finite && result.finite;
    return result.max_relative_error;
}

}  // namespace

PipelineGradcheckReport pipeline_gradcheck(std::uint64_t seed, int trials, double epsilon) {
    PipelineGradcheckReport report;
    Rng master(seed);
    for (int t = 0; t < trials; ++t) {
        Rng rng = master.child(static_cast<std::uint64_t>(t));
        const Instance inst = make_instance(rng);
        const LossConfig& cfg = inst.loss;
        report.global = std::max(report.global, check_one(inst, {1.0, 0.0, 0.0}, epsilon, report.finite));
        report.local = std::max(report.local, check_one(inst, {0.0, 1.0, 0.0}, epsilon, report.finite));
        report.contrast =
            std::max(report.contrast, check_one(inst, {0.0, 0.0, 1.0}, epsilon, report.finite));
        report.total =
            std::max(report.total, check_one(inst, {1.0, cfg.gamma1, cfg.gamma2}, epsilon, report.finite));
        ++report.trials;
    }
    return report;
}

}  // namespace lgcoamix
