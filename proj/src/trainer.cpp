#include "lgcoamix/trainer.hpp"

#include "lgcoamix/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lgcoamix {

namespace {

template <typename M>
std::span<double> span_of(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& samples, Eigen::Index per) {
    Matrix out(static_cast<Eigen::Index>(samples.size()) * per, m.cols());
    for (std::size_t k = 0; k < samples.size(); ++k)
        out.middleRows(static_cast<Eigen::Index>(k) * per, per) = m.middleRows(samples[k] * per, per);
    return out;
}

void scatter_add_rows(Matrix& dst, const Matrix& src, const std::vector<int>& samples, Eigen::Index per) {
    for (std::size_t k = 0; k < samples.size(); ++k)
        dst.middleRows(samples[k] * per, per) += src.middleRows(static_cast<Eigen::Index>(k) * per, per);
}

void append_pattern(std::vector<std::uint8_t>& out, const Matrix& pre) {
    for (Eigen::Index i = 0; i < pre.size(); ++i)
        out.push_back(pre.data()[i] > 0.0 ? 1 : 0);
}

struct Encoded {
    ConvCache c1, c2, c2b;
    Tensor e1;  // stage-1 output after ReLU
    Tensor h2;  // conv2 output after ReLU
    Tensor z;   // stage-2 output after ReLU
    Matrix pooled_z;
};

Encoded encode(ToyModel& model, const Tensor& x, bool keep_caches) {
    model.counters.encoder += static_cast<std::uint64_t>(x.n);
    Encoded enc;
    Tensor centred = x;
    centred.values.array() -= 0.5;
    const ModelParams& p = model.params;
    auto layer = [&](const Conv2d& conv, const Tensor& in, ConvCache& cache) {
        Tensor out = conv_forward(conv, in, keep_caches ? &cache : nullptr);
        relu_inplace(out.values);
        return out;
    };
    enc.e1 = layer(p.conv1, centred, enc.c1);
    enc.h2 = layer(p.conv2, enc.e1, enc.c2);
    enc.z = layer(p.conv2b, enc.h2, enc.c2b);
    const Eigen::Index per = enc.z.rows_per_sample();
    enc.pooled_z.resize(enc.z.n, enc.z.channels());
    for (int b = 0; b < enc.z.n; ++b)
        enc.pooled_z.row(b) = enc.z.values.middleRows(b * per, per).colwise().mean();
    return enc;
}

}  // namespace

std::vector<std::span<double>> ModelParams::blocks() {
    return {span_of(conv1.weight),       span_of(conv1.bias),       span_of(conv2.weight),     span_of(conv2.bias),
            span_of(conv2b.weight),      span_of(conv2b.bias),      span_of(up1.weight),       span_of(up1.bias),
            span_of(up2.weight),         span_of(up2.bias),         span_of(global_head.weight),
            span_of(global_head.bias),   span_of(local_head.weight), span_of(local_head.bias),
            span_of(attention.wq),       span_of(attention.wk),     span_of(attention.wv),
            span_of(attention.gain),     span_of(attention.bias)};
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto block : z.blocks())
        std::fill(block.begin(), block.end(), 0.0);
    return z;
}

ToyModel ToyModel::initialize(const ModelConfig& config, Rng& rng) {
    if (config.classes < 2 || config.encoder_width < 1 || config.feature_depth < 1)
        throw InvalidInput("model needs at least 2 classes and positive widths");
    ToyModel m;
    const int de = config.encoder_width, d = config.feature_depth;
    m.params.conv1 = Conv2d::initialize(3, de, 3, 2, 1, rng);
    m.params.conv2 = Conv2d::initialize(de, de, 3, 2, 1, rng);
    m.params.conv2b = Conv2d::initialize(de, de, 3, 1, 1, rng);
    m.params.up1 = Upsample2x::initialize(de, de, std::sqrt(2.0), rng);
    m.params.up2 = Upsample2x::initialize(de, d, 1.0, rng);
    m.params.global_head = LinearHead::initialize(de, config.classes, HeadRole::global, rng);
    m.params.local_head = LinearHead::initialize(d, config.classes, HeadRole::local, rng);
    m.params.attention = AttentionParams::initialize(d, rng);
    return m;
}

PreparedSample plain_sample(Image x, LabelVector y) {
    PreparedSample s;
    s.input = std::move(x);
    s.y2 = y;
    s.y1 = std::move(y);
    return s;
}

PreparedSample mixed_sample(const Image& x1, const LabelVector& y1, const Image& x2,
                            const LabelVector& y2, const MixConfig& config, Rng& rng) {
    MixResult r = lgcoamix(x1, y1, x2, y2, config, rng);
    PreparedSample s;
    s.input = r.sample.mixed;
    s.y1 = y1;
    s.y2 = y2;
    s.augmented = true;
    s.mix = std::move(r.sample);
    s.plan = std::move(r.plan);
    return s;
}

StepResult forward_backward(ToyModel& model, std::span<const PreparedSample> batch,
                            const MixConfig& mix, const LossConfig& loss, ModelParams* grads,
                            const FrozenChoices* frozen, bool record_pattern) {
    if (batch.empty())
        throw InvalidInput("empty batch");
    const int b_total = static_cast<int>(batch.size());
    if (frozen && (frozen->lambdas.size() != batch.size() || frozen->selections.size() != batch.size()))
        throw InvalidInput("frozen choices must cover the batch");
    ModelParams& p = model.params;
    const bool with_grads = grads != nullptr;

    std::vector<const Image*> inputs;
    std::vector<int> aug;
    for (int j = 0; j < b_total; ++j) {
        inputs.push_back(&batch[static_cast<std::size_t>(j)].input);
        if (batch[static_cast<std::size_t>(j)].augmented)
            aug.push_back(j);
    }
    const Tensor x = stack_images(inputs);
    const Encoded enc = encode(model, x, with_grads);
    const Matrix logits = p.global_head.forward(enc.pooled_z);

    StepResult out;
    out.lambdas.assign(batch.size(), 0.0);
    out.selections.assign(batch.size(), {});
    out.weights.assign(batch.size(), {});
    if (record_pattern)
        for (const Tensor* t : {&enc.e1, &enc.h2, &enc.z})
            append_pattern(out.relu_pattern, t->values);

    // Superpixel branch on the augmented samples, fed by the same encoding.
    const Eigen::Index z_per = enc.z.rows_per_sample();
    const Eigen::Index e1_per = enc.e1.rows_per_sample();
    Tensor zs, u1;
    std::vector<FusedPoolCache> fused(aug.size());
    std::vector<BranchState> states;
    std::vector<SuperpixelTargets> targets;
    if (!aug.empty()) {
        const int na = static_cast<int>(aug.size());
        model.counters.decoder += static_cast<std::uint64_t>(na);
        model.counters.attention += static_cast<std::uint64_t>(na);
        model.counters.local_head += static_cast<std::uint64_t>(na);
        zs = {na, enc.z.height, enc.z.width, gather_rows(enc.z.values, aug, z_per)};
        u1 = upsample_forward(p.up1, zs);
        u1.values += gather_rows(enc.e1.values, aug, e1_per);
        if (record_pattern)
            append_pattern(out.relu_pattern, u1.values);
        relu_inplace(u1.values);
        states.reserve(aug.size());
        for (std::size_t k = 0; k < aug.size(); ++k) {
            const auto j = static_cast<std::size_t>(aug[k]);
            const PreparedSample& s = batch[j];
            const Matrix rows = u1.values.middleRows(static_cast<Eigen::Index>(k) * e1_per, e1_per);
            Matrix pooled = upsample_pool_forward(p.up2, rows, s.mix.smap, &fused[k]);
            std::span<const int> sel;
            if (frozen)
                sel = frozen->selections[j];
            states.push_back(branch_from_pooled(std::move(pooled), p.attention, mix.top_fraction, sel));
            out.selections[j] = states.back().selected;
            out.weights[j] = states.back().attended.w;
            out.lambdas[j] = frozen ? frozen->lambdas[j]
                                    : mixing_lambda(mix.label_mixing, out.weights[j], s.mix, s.plan);
            targets.push_back({s.mix.provenance, s.y1, s.y2});
        }
    }

    std::vector<LabelVector> y1, y2;
    for (const auto& s : batch) {
        y1.push_back(s.y1);
        y2.push_back(s.y2);
    }
    for (std::size_t j = 0; j < batch.size(); ++j)
        out.targets.push_back(mix_labels(y1[j], y2[j], out.lambdas[j]));
    Matrix d_logits;
    out.global = global_loss(logits, y1, y2, out.lambdas, with_grads ? &d_logits : nullptr);
    LocalObjective local;
    if (!states.empty()) {
        local = local_objective(states, targets, p.local_head, loss, loss.gamma1, loss.gamma2, with_grads);
        out.local = local.local;
        out.contrast = local.contrast;
    }
    out.total = total_loss(out.global, out.local, out.contrast, loss);
    if (!with_grads)
        return out;

    ModelParams& g = *grads;
    g = p.zeros_like();
    g.global_head.weight.noalias() = enc.pooled_z.transpose() * d_logits;
    g.global_head.bias = d_logits.colwise().sum();
    const Matrix d_pooled_z = d_logits * p.global_head.weight.transpose();
    Tensor d_z{enc.z.n, enc.z.height, enc.z.width, Matrix(enc.z.values.rows(), enc.z.values.cols())};
    for (int b = 0; b < b_total; ++b)
        d_z.values.middleRows(b * z_per, z_per).rowwise() = d_pooled_z.row(b) / static_cast<double>(z_per);
    Matrix d_e1_skip = Matrix::Zero(enc.e1.values.rows(), enc.e1.values.cols());

    if (!states.empty() && (loss.gamma1 != 0.0 || loss.gamma2 != 0.0)) {
        g.local_head.weight = local.local_head.weight;
        g.local_head.bias = local.local_head.bias;
        AttentionGrads ag = AttentionGrads::zeros(p.attention.depth());
        Tensor d_u1{u1.n, u1.height, u1.width, Matrix(u1.values.rows(), u1.values.cols())};
        for (std::size_t k = 0; k < states.size(); ++k) {
            const auto j = static_cast<std::size_t>(aug[k]);
            const Matrix d_f = branch_backward_pooled(states[k], local.d_attended[k], p.attention, ag);
            d_u1.values.middleRows(static_cast<Eigen::Index>(k) * e1_per, e1_per) = upsample_pool_backward(
                p.up2, fused[k], batch[j].mix.smap, d_f, g.up2.weight, g.up2.bias);
        }
        g.attention.wq = ag.wq;
        g.attention.wk = ag.wk;
        g.attention.wv = ag.wv;
        g.attention.gain = ag.gain;
        g.attention.bias = ag.bias;
        relu_backward_inplace(d_u1.values, u1.values);
        const Tensor d_zs = upsample_backward(p.up1, zs, d_u1, g.up1.weight, g.up1.bias);
        scatter_add_rows(d_z.values, d_zs.values, aug, z_per);
        scatter_add_rows(d_e1_skip, d_u1.values, aug, e1_per);
    }

    relu_backward_inplace(d_z.values, enc.z.values);
    Tensor d_h2 = conv_backward(p.conv2b, enc.c2b, d_z, g.conv2b.weight, g.conv2b.bias);
    relu_backward_inplace(d_h2.values, enc.h2.values);
    Tensor d_e1 = conv_backward(p.conv2, enc.c2, d_h2, g.conv2.weight, g.conv2.bias);
    d_e1.values += d_e1_skip;
    relu_backward_inplace(d_e1.values, enc.e1.values);
    conv_backward(p.conv1, enc.c1, d_e1, g.conv1.weight, g.conv1.bias, false);
    return out;
}

StepResult forward_lgcoamix(ToyModel& model, const Image& x1, const LabelVector& y1, const Image& x2,
                            const LabelVector& y2, const MixConfig& mix, const LossConfig& loss,
                            Rng& rng) {
    const PreparedSample s = mixed_sample(x1, y1, x2, y2, mix, rng);
    return forward_backward(model, std::span<const PreparedSample>(&s, 1), mix, loss, nullptr);
}

double evaluate(ToyModel& model, const SyntheticDataset& data) {
    if (data.samples.empty())
        return 0.0;
    constexpr std::size_t chunk = 100;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.samples.size(); start += chunk) {
        const std::size_t end = std::min(data.samples.size(), start + chunk);
        std::vector<const Image*> images;
        for (std::size_t i = start; i < end; ++i)
            images.push_back(&data.samples[i].image);
        const Encoded enc = encode(model, stack_images(images), false);
        const Matrix logits = model.params.global_head.forward(enc.pooled_z);
        for (std::size_t i = start; i < end; ++i) {
            Eigen::Index best = 0;
            logits.row(static_cast<Eigen::Index>(i - start)).maxCoeff(&best);
            if (best == data.samples[i].label)
                ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

Image base_augment(const Image& image, Rng& rng, int pad) {
    const bool flip = rng.bernoulli(0.5);
    const auto oy = static_cast<int>(rng.uniform_int(0, 2 * pad));
    const auto ox = static_cast<int>(rng.uniform_int(0, 2 * pad));
    Image out(image.height, image.width, image.channels);
    for (int y = 0; y < image.height; ++y) {
        const int sy = y + oy - pad;
        if (sy < 0 || sy >= image.height)
            continue;
        for (int x = 0; x < image.width; ++x) {
            int sx = x + ox - pad;
            if (sx < 0 || sx >= image.width)
                continue;
            if (flip)
                sx = image.width - 1 - sx;
            for (int c = 0; c < image.channels; ++c)
                out.at(y, x, c) = image.at(sy, sx, c);
        }
    }
    return out;
}

void TrainConfig::validate() const {
    if (classes < 2 || classes > max_shape_classes)
        throw InvalidInput("classes must lie in [2, 6]");
    if (train_size < 2 || train_size % classes != 0 || test_size < classes || test_size % classes != 0)
        throw InvalidInput("split sizes must be positive multiples of the class count");
    if (epochs < 0 || batch_size < 1)
        throw InvalidInput("epochs must be >= 0 and batch_size >= 1");
    if (!(learning_rate > 0.0) || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0)
        throw InvalidInput("invalid optimiser settings");
    if (!(augment_probability >= 0.0 && augment_probability <= 1.0))
        throw InvalidInput("augment_probability must lie in [0, 1]");
    if (image_size < 8 || image_size % 4 != 0)
        throw InvalidInput("image_size must be a multiple of 4, at least 8");
    if (encoder_width < 1 || feature_depth < 1)
        throw InvalidInput("layer widths must be positive");
    mix.validate();
    loss.validate();
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& value) {
    if (j.contains(key))
        value = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
    for (const auto& item : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; }))
            throw InvalidInput(std::string("unknown key '") + item.key() + "' in " + where);
    }
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw InvalidInput("training config must be a JSON object");
    TrainConfig c;
    try {
        reject_unknown(j,
                       {"classes", "train_size", "test_size", "image_size", "epochs", "batch_size",
                        "learning_rate", "momentum", "weight_decay", "augment_probability",
                        "encoder_width", "feature_depth", "mix", "loss", "seed"},
                       "config");
        read_field(j, "classes", c.classes);
        read_field(j, "train_size", c.train_size);
        read_field(j, "test_size", c.test_size);
        read_field(j, "image_size", c.image_size);
        read_field(j, "epochs", c.epochs);
        read_field(j, "batch_size", c.batch_size);
        read_field(j, "learning_rate", c.learning_rate);
        read_field(j, "momentum", c.momentum);
        read_field(j, "weight_decay", c.weight_decay);
        read_field(j, "augment_probability", c.augment_probability);
        read_field(j, "encoder_width", c.encoder_width);
        read_field(j, "feature_depth", c.feature_depth);
        read_field(j, "seed", c.seed);
        if (j.contains("mix")) {
            const auto& m = j.at("mix");
            reject_unknown(m, {"q_min", "q_max", "p", "top_fraction", "label_mixing"}, "mix");
            read_field(m, "q_min", c.mix.q_min);
            read_field(m, "q_max", c.mix.q_max);
            read_field(m, "p", c.mix.p);
            read_field(m, "top_fraction", c.mix.top_fraction);
            if (m.contains("label_mixing"))
                c.mix.label_mixing = parse_label_mixing_mode(m.at("label_mixing").get<std::string>());
        }
        if (j.contains("loss")) {
            const auto& l = j.at("loss");
            reject_unknown(l, {"gamma1", "gamma2", "tau", "contrast_form"}, "loss");
            read_field(l, "gamma1", c.loss.gamma1);
            read_field(l, "gamma2", c.loss.gamma2);
            read_field(l, "tau", c.loss.tau);
            if (l.contains("contrast_form")) {
                const auto form = l.at("contrast_form").get<std::string>();
                if (form == "pair_vs_negatives")
                    c.loss.contrast_form = ContrastForm::pair_vs_negatives;
                else if (form == "all_others")
                    c.loss.contrast_form = ContrastForm::all_others;
                else
                    throw InvalidInput("contrast_form must be pair_vs_negatives or all_others");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed training config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"classes", c.classes},
            {"train_size", c.train_size},
            {"test_size", c.test_size},
            {"image_size", c.image_size},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"augment_probability", c.augment_probability},
            {"encoder_width", c.encoder_width},
            {"feature_depth", c.feature_depth},
            {"seed", c.seed},
            {"mix",
             {{"q_min", c.mix.q_min},
              {"q_max", c.mix.q_max},
              {"p", c.mix.p},
              {"top_fraction", c.mix.top_fraction},
              {"label_mixing", std::string(to_string(c.mix.label_mixing))}}},
            {"loss",
             {{"gamma1", c.loss.gamma1},
              {"gamma2", c.loss.gamma2},
              {"tau", c.loss.tau},
              {"contrast_form", c.loss.contrast_form == ContrastForm::all_others ? "all_others"
                                                                                 : "pair_vs_negatives"}}}};
}

nlohmann::json to_json(const EpochLog& log) {
    return {{"epoch", log.epoch},
            {"loss_global", log.loss_global},
            {"loss_local", log.loss_local},
            {"loss_contrast", log.loss_contrast},
            {"loss_total", log.loss_total},
            {"eval_acc", log.eval_acc}};
}

TrainResult train(const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    const SyntheticDataset train_set =
        make_synthetic_dataset(config.train_size, config.classes, derive_seed(config.seed, 1), config.image_size);
    const SyntheticDataset test_set =
        make_synthetic_dataset(config.test_size, config.classes, derive_seed(config.seed, 2), config.image_size);
    Rng init_rng(derive_seed(config.seed, 3));
    TrainResult result;
    result.model = ToyModel::initialize({config.classes, config.encoder_width, config.feature_depth}, init_rng);
    ToyModel& model = result.model;
    Rng rng(derive_seed(config.seed, 4));

    ModelParams velocity = model.params.zeros_like();
    ModelParams grads = model.params.zeros_like();
    std::vector<std::size_t> order(train_set.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::uint64_t encoded = 0, fed = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        EpochLog log;
        log.epoch = epoch;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::size_t nb = end - start;
            std::vector<Image> base;
            std::vector<LabelVector> labels;
            for (std::size_t i = start; i < end; ++i) {
                const auto& s = train_set.samples[order[i]];
                base.push_back(base_augment(s.image, rng));
                labels.push_back(one_hot(s.label, config.classes));
            }
            std::vector<std::size_t> partner(nb);
            std::iota(partner.begin(), partner.end(), std::size_t{0});
            for (std::size_t i = nb - 1; i > 0; --i)
                std::swap(partner[i], partner[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
            std::vector<PreparedSample> batch;
            batch.reserve(nb);
            for (std::size_t j = 0; j < nb; ++j) {
                if (rng.bernoulli(config.augment_probability))
                    batch.push_back(mixed_sample(base[j], labels[j], base[partner[j]], labels[partner[j]],
                                                 config.mix, rng));
                else
                    batch.push_back(plain_sample(base[j], labels[j]));
            }

            const std::uint64_t before = model.counters.encoder;
            const StepResult r = forward_backward(model, batch, config.mix, config.loss, &grads);
            encoded += model.counters.encoder - before;
            fed += nb;
            if (!std::isfinite(r.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " step " << steps << " (global " << r.global
                    << ", local " << r.local << ", contrast " << r.contrast << ")";
                throw TrainingDiverged(msg.str());
            }

            auto theta = model.params.blocks();
            auto v = velocity.blocks();
            auto g = grads.blocks();
            for (std::size_t b = 0; b < theta.size(); ++b)
                for (std::size_t i = 0; i < theta[b].size(); ++i) {
                    v[b][i] = config.momentum * v[b][i] + g[b][i] + config.weight_decay * theta[b][i];
                    theta[b][i] -= config.learning_rate * v[b][i];
                }

            log.loss_global += r.global;
            log.loss_local += r.local;
            log.loss_contrast += r.contrast;
            log.loss_total += r.total;
            ++steps;
        }
        log.loss_global /= steps;
        log.loss_local /= steps;
        log.loss_contrast /= steps;
        log.loss_total /= steps;
        log.eval_acc = evaluate(model, test_set);
        result.log.push_back(log);
        if (on_epoch)
            on_epoch(log);
    }
    result.test_accuracy = result.log.empty() ? evaluate(model, test_set) : result.log.back().eval_acc;
    result.encoder_calls_per_sample = fed ? static_cast<double>(encoded) / static_cast<double>(fed) : 0.0;
    return result;
}

FiniteDiffResult model_gradcheck(std::uint64_t seed, int size, double epsilon) {
    if (size < 8 || size % 4 != 0)
        throw InvalidInput("gradcheck size must be a multiple of 4, at least 8");
    Rng rng(seed);
    ToyModel model = ToyModel::initialize({3, 4, 4}, rng);
    // Non-trivial biases and gains so no parameter sits at a symmetric point.
    for (auto block : model.params.blocks())
        for (double& v : block)
            v += rng.normal(0.0, 0.1);

    auto noise = [&] {
        Image img(size, size, 3);
        for (auto& v : img.pixels)
            v = rng.uniform();
        return img;
    };
    const Image a = noise(), b = noise(), c = noise();
    MixConfig mix;
    mix.q_min = 4;
    mix.q_max = 8;
    const LossConfig loss;
    std::vector<PreparedSample> batch;
    batch.push_back(mixed_sample(a, one_hot(0, 3), b, one_hot(1, 3), mix, rng));
    batch.push_back(mixed_sample(c, one_hot(2, 3), a, one_hot(0, 3), mix, rng));
    batch.push_back(plain_sample(b, one_hot(1, 3)));

    ModelParams grads;
    const StepResult base = forward_backward(model, batch, mix, loss, nullptr, nullptr, true);
    const FrozenChoices frozen{base.lambdas, base.selections};

    ParameterSet set;
    for (auto block : model.params.blocks())
        set.add(block);
    const std::vector<double> theta0 = set.gather();

    const DifferentiableFn fn = [&](std::span<const double> theta, std::span<double> g) {
        set.scatter(theta);
        const StepResult r = forward_backward(model, batch, mix, loss, g.empty() ? nullptr : &grads, &frozen);
        if (!g.empty()) {
            auto it = g.begin();
            for (auto block : grads.blocks())
                it = std::copy(block.begin(), block.end(), it);
        }
        return r.total;
    };
    // Skip coordinates where either probe point changes a ReLU's sign.
    const CoordinateFilter smooth = [&](std::size_t i) {
        std::vector<double> probe = theta0;
        bool same = true;
        for (double step : {epsilon, -epsilon}) {
            probe[i] = theta0[i] + step;
            set.scatter(probe);
            same = same && forward_backward(model, batch, mix, loss, nullptr, &frozen, true).relu_pattern ==
                               base.relu_pattern;
        }
        set.scatter(theta0);
        return same;
    };
    const FiniteDiffResult r = finite_diff_check(fn, theta0, epsilon, smooth);
    set.scatter(theta0);
    return r;
}

}  // namespace lgcoamix
