#include "lgcoamix/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lgcoamix {

Matrix LinearHead::forward(const Matrix& x) const {
    if (x.cols() != weight.rows())
        throw InvalidInput("head input width mismatch");
    Matrix out = x * weight;
    out.rowwise() += bias;
    return out;
}

LinearHead LinearHead::initialize(int inputs, int classes, HeadRole role, Rng& rng) {
    LinearHead head;
    head.role = role;
    head.weight.resize(inputs, classes);
    const double scale = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (Eigen::Index i = 0; i < head.weight.size(); ++i)
        head.weight.data()[i] = rng.normal(0.0, scale);
    head.bias = RowVector::Zero(classes);
    return head;
}

LinearHeadGrads LinearHeadGrads::zeros(const LinearHead& head) {
    return {Matrix::Zero(head.weight.rows(), head.weight.cols()), RowVector::Zero(head.bias.size())};
}

void LinearHeadGrads::set_zero() {
    weight.setZero();
    bias.setZero();
}

LinearHeadGrads& LinearHeadGrads::operator+=(const LinearHeadGrads& other) {
    weight += other.weight;
    bias += other.bias;
    return *this;
}

double cross_entropy_soft(std::span<const double> logits, const LabelVector& target,
                          std::span<double> d_logits) {
    if (logits.size() != target.classes())
        throw InvalidInput("logits and target must have the same class count");
    const double shift = *std::max_element(logits.begin(), logits.end());
    double sum_exp = 0.0;
    for (double z : logits)
        sum_exp += std::exp(z - shift);
    const double lse = shift + std::log(sum_exp);
    double loss = 0.0;
    double mass = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (target.probs[k] != 0.0)
            loss -= target.probs[k] * (logits[k] - lse);
        mass += target.probs[k];
    }
    if (!d_logits.empty()) {
        if (d_logits.size() != logits.size())
            throw InvalidInput("gradient buffer has the wrong size");
        for (std::size_t k = 0; k < logits.size(); ++k)
            d_logits[k] = mass * std::exp(logits[k] - lse) - target.probs[k];
    }
    return loss;
}

double global_loss(const Matrix& logits, std::span<const LabelVector> y1,
                   std::span<const LabelVector> y2, std::span<const double> lambdas,
                   Matrix* d_logits) {
    const auto batch = static_cast<std::size_t>(logits.rows());
    if (batch == 0 || y1.size() != batch || y2.size() != batch || lambdas.size() != batch)
        throw InvalidInput("global loss needs one (y1, y2, lambda) per logit row");
    if (d_logits)
        d_logits->resize(logits.rows(), logits.cols());
    double total = 0.0;
    std::vector<double> row(static_cast<std::size_t>(logits.cols()));
    std::vector<double> grad(row.size());
    for (std::size_t j = 0; j < batch; ++j) {
        const LabelVector target = mix_labels(y1[j], y2[j], lambdas[j]);
        Eigen::Map<RowVector>(row.data(), logits.cols()) = logits.row(static_cast<Eigen::Index>(j));
        total += cross_entropy_soft(row, target, d_logits ? std::span<double>(grad) : std::span<double>());
        if (d_logits)
            d_logits->row(static_cast<Eigen::Index>(j)) =
                Eigen::Map<const RowVector>(grad.data(), logits.cols()) / static_cast<double>(batch);
    }
    return total / static_cast<double>(batch);
}

double local_loss(std::span<const LocalLossItem> items, const LinearHead& head,
                  LocalLossGrads* grads) {
    if (head.role != HeadRole::local)
        throw InvalidInput("local loss requires the local head");
    if (items.empty())
        throw InvalidInput("local loss needs at least one image");
    if (grads) {
        grads->d_vectors.assign(items.size(), Matrix());
        grads->head = LinearHeadGrads::zeros(head);
    }
    const double inv_batch = 1.0 / static_cast<double>(items.size());
    double total = 0.0;
    std::vector<double> row(static_cast<std::size_t>(head.classes()));
    std::vector<double> grad(row.size());
    for (std::size_t b = 0; b < items.size(); ++b) {
        const auto& item = items[b];
        if (item.vectors.rows() == 0)
            throw InvalidInput("local loss needs at least one selected superpixel per image");
        if (item.provenance.size() != static_cast<std::size_t>(item.vectors.rows()))
            throw InvalidInput("one provenance tag per selected vector is required");
        const Matrix logits = head.forward(item.vectors);
        Matrix d_logits(logits.rows(), logits.cols());
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const LabelVector& target =
                item.provenance[static_cast<std::size_t>(i)] == Source::x1 ? item.y1 : item.y2;
            Eigen::Map<RowVector>(row.data(), logits.cols()) = logits.row(i);
            total += inv_batch * cross_entropy_soft(row, target, grads ? std::span<double>(grad)
                                                                       : std::span<double>());
            if (grads)
                d_logits.row(i) = Eigen::Map<const RowVector>(grad.data(), logits.cols()) * inv_batch;
        }
        if (grads) {
            grads->head.weight.noalias() += item.vectors.transpose() * d_logits;
            grads->head.bias += d_logits.colwise().sum();
            grads->d_vectors[b] = d_logits * head.weight.transpose();
        }
    }
    return total;
}

void ContrastBatch::validate() const {
    if (static_cast<std::size_t>(vectors.rows()) != classes.size())
        throw InvalidInput("one class label per contrast vector is required");
    for (Eigen::Index i = 0; i < vectors.rows(); ++i)
        if (std::abs(vectors.row(i).norm() - 1.0) > 1e-9)
            throw InvalidInput("contrast vectors must be unit-normalised");
}

double contrastive_loss(const ContrastBatch& batch, double tau, ContrastForm form, Matrix* d_vectors) {
    if (!(tau > 0.0))
        throw InvalidInput("temperature must be positive");
    batch.validate();
    const Eigen::Index n = batch.vectors.rows();
    if (d_vectors)
        *d_vectors = Matrix::Zero(n, batch.vectors.cols());
    if (n == 0)
        return 0.0;

    const Matrix sim = (batch.vectors * batch.vectors.transpose()) / tau;
    // d_sim(i, j) = dL / d sim(i, j) with i the anchor.
    Matrix d_sim = Matrix::Zero(n, n);
    const double inv_nb = 1.0 / static_cast<double>(n);
    const double neg_inf = -std::numeric_limits<double>::infinity();
    Eigen::ArrayXi cls(n);
    for (Eigen::Index j = 0; j < n; ++j)
        cls[j] = batch.classes[static_cast<std::size_t>(j)];
    double total = 0.0;
    // 0/1 masks as doubles keep every expression below vectorisable.
    Eigen::ArrayXd pos(n), neg(n), other(n), s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s = sim.row(i).transpose().array();
        neg = (cls != cls[i]).cast<double>();
        pos = 1.0 - neg;
        pos[i] = 0.0;
        const double n_pos = pos.sum();
        if (n_pos == 0.0)
            continue;
        const double scale = inv_nb / n_pos;
        auto d_row = d_sim.row(i).transpose().array();

        if (form == ContrastForm::all_others) {
            other = pos + neg;
            const double shift = (other > 0.0).select(s, neg_inf).maxCoeff();
            const Eigen::ArrayXd e = (s - shift).min(0.0).exp() * other;
            const double denom = e.sum();
            const double log_denom = shift + std::log(denom);
            total -= scale * ((s - log_denom) * pos).sum();
            d_row += scale * (n_pos * e / denom - pos);
            continue;
        }

        // The negative sum is shared by every positive of this anchor. With
        // log_neg = log sum_k exp(sim(i, k)) and d = sim(i, j) - log_neg, each
        // positive contributes -log sigmoid(d) = softplus(-d).
        if (neg.sum() == 0.0) {
            // exp(s) / exp(s) = 1 for every positive: zero loss and gradient.
            continue;
        }
        const double neg_shift = (neg > 0.0).select(s, neg_inf).maxCoeff();
        const Eigen::ArrayXd e = (s - neg_shift).min(0.0).exp() * neg;
        const double neg_sum = e.sum();
        const double log_neg = neg_shift + std::log(neg_sum);
        const Eigen::ArrayXd d = (s - log_neg) * pos;
        const Eigen::ArrayXd t = (-d.abs()).exp();
        const Eigen::ArrayXd softplus_neg = (-d).max(0.0) + (1.0 + t).log();
        // sigmoid(-d): t / (1 + t) for d >= 0, 1 / (1 + t) otherwise.
        const Eigen::ArrayXd sig_neg = ((d >= 0.0).cast<double>() * (t - 1.0) + 1.0) / (1.0 + t) * pos;
        total += scale * (softplus_neg * pos).sum();
        // d/dsim(i, j) of softplus(-d_j) = -sigmoid(-d_j); through log_neg each
        // positive adds sigmoid(-d_j) * exp(sim(i, k) - log_neg) to negative k.
        d_row += scale * (sig_neg.sum() * e / neg_sum - sig_neg);
    }
    if (d_vectors)
        *d_vectors = ((d_sim + d_sim.transpose()) * batch.vectors) / tau;
    return total;
}

double total_loss(double global, double local, double contrast, const LossConfig& config) {
    return global + config.gamma1 * local + config.gamma2 * contrast;
}

Matrix normalize_rows(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double norm = x.row(i).norm();
        if (!(norm > 0.0))
            throw InvalidInput("cannot normalise a zero vector");
        out.row(i) = x.row(i) / norm;
    }
    return out;
}

Matrix normalize_rows_backward(const Matrix& x, const Matrix& d_unit) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double norm = x.row(i).norm();
        const RowVector u = x.row(i) / norm;
        out.row(i) = (d_unit.row(i) - u * u.dot(d_unit.row(i))) / norm;
    }
    return out;
}

}  // namespace lgcoamix
