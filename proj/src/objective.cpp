#include "lgcoamix/objective.hpp"

namespace lgcoamix {

BranchState branch_from_pooled(Matrix pooled, const AttentionParams& params, double top_fraction,
                               std::span<const int> frozen_selection) {
    BranchState state;
    state.pooled = std::move(pooled);
    state.attended = self_attention(state.pooled, params, &state.cache);
    if (frozen_selection.empty()) {
        state.selected = select_top(state.attended, top_fraction);
    } else {
        for (int i : frozen_selection)
            if (i < 0 || i >= state.pooled.rows())
                throw InvalidInput("frozen selection index out of range");
        state.selected.assign(frozen_selection.begin(), frozen_selection.end());
    }
    return state;
}

BranchState branch_forward(const FeatureMap& zhat, const SuperpixelMap& smap,
                           const AttentionParams& params, double top_fraction,
                           std::span<const int> frozen_selection) {
    return branch_from_pooled(superpixel_pool(zhat, smap), params, top_fraction, frozen_selection);
}

LocalObjective local_objective(std::span<const BranchState> states,
                               std::span<const SuperpixelTargets> targets,
                               const LinearHead& local_head, const LossConfig& config,
                               double local_weight, double contrast_weight, bool with_grads) {
    if (states.size() != targets.size())
        throw InvalidInput("one target set per branch state is required");
    LocalObjective out;
    if (states.empty())
        return out;

    std::vector<LocalLossItem> items(states.size());
    Eigen::Index total_selected = 0;
    for (std::size_t b = 0; b < states.size(); ++b) {
        const auto& state = states[b];
        const auto& tgt = targets[b];
        if (tgt.provenance.size() != static_cast<std::size_t>(state.attended.c.rows()))
            throw InvalidInput("provenance must cover every superpixel");
        auto& item = items[b];
        item.vectors.resize(static_cast<Eigen::Index>(state.selected.size()), state.attended.c.cols());
        for (std::size_t r = 0; r < state.selected.size(); ++r) {
            item.vectors.row(static_cast<Eigen::Index>(r)) = state.attended.c.row(state.selected[r]);
            item.provenance.push_back(tgt.provenance[static_cast<std::size_t>(state.selected[r])]);
        }
        item.y1 = tgt.y1;
        item.y2 = tgt.y2;
        total_selected += item.vectors.rows();
    }

    LocalLossGrads local_grads;
    out.local = local_loss(items, local_head, with_grads ? &local_grads : nullptr);

    const Eigen::Index depth = states.front().attended.c.cols();
    Matrix raw(total_selected, depth);
    ContrastBatch batch;
    Eigen::Index row = 0;
    for (const auto& item : items) {
        raw.middleRows(row, item.vectors.rows()) = item.vectors;
        row += item.vectors.rows();
        for (Source s : item.provenance)
            batch.classes.push_back(s == Source::x1 ? item.y1.argmax() : item.y2.argmax());
    }
    batch.vectors = normalize_rows(raw);
    Matrix d_unit;
    out.contrast = contrastive_loss(batch, config.tau, config.contrast_form, with_grads ? &d_unit : nullptr);

    if (!with_grads)
        return out;
    const Matrix d_raw = normalize_rows_backward(raw, d_unit);
    out.local_head = local_grads.head;
    out.local_head.weight *= local_weight;
    out.local_head.bias *= local_weight;
    out.d_attended.resize(states.size());
    row = 0;
    for (std::size_t b = 0; b < states.size(); ++b) {
        const auto& state = states[b];
        Matrix d_c = Matrix::Zero(state.attended.c.rows(), depth);
        for (std::size_t r = 0; r < state.selected.size(); ++r) {
            d_c.row(state.selected[r]) += local_weight * local_grads.d_vectors[b].row(static_cast<Eigen::Index>(r)) +
                                          contrast_weight * d_raw.row(row + static_cast<Eigen::Index>(r));
        }
        row += static_cast<Eigen::Index>(state.selected.size());
        out.d_attended[b] = std::move(d_c);
    }
    return out;
}

Matrix branch_backward(const BranchState& state, const Matrix& d_attended,
                       const AttentionParams& params, const SuperpixelMap& smap,
                       AttentionGrads& grads) {
    return superpixel_pool_backward(branch_backward_pooled(state, d_attended, params, grads), smap);
}

Matrix branch_backward_pooled(const BranchState& state, const Matrix& d_attended,
                              const AttentionParams& params, AttentionGrads& grads) {
    return self_attention_backward(d_attended, params, state.cache, grads);
}

}  // namespace lgcoamix
