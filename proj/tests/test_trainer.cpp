#include "lgcoamix/trainer.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace lgcoamix;

namespace {

bool same_image(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.channels == b.channels && a.pixels == b.pixels;
}

// Hand-made features from a binary mask: occupancy of a 3x3 grid laid over the
// bounding box, plus how much of the box the shape fills.
Eigen::VectorXd mask_features(const std::vector<std::uint8_t>& mask, int size) {
    int y0 = size, y1 = -1, x0 = size, x1 = -1, area = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (mask[static_cast<std::size_t>(y * size + x)]) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                ++area;
            }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(11);
    if (area == 0)
        return f;
    const double bh = y1 - y0 + 1, bw = x1 - x0 + 1;
    Eigen::VectorXd cells = Eigen::VectorXd::Zero(9), totals = Eigen::VectorXd::Zero(9);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const int cy = std::min(2, static_cast<int>(3.0 * (y - y0) / bh));
            const int cx = std::min(2, static_cast<int>(3.0 * (x - x0) / bw));
            totals[cy * 3 + cx] += 1.0;
            cells[cy * 3 + cx] += mask[static_cast<std::size_t>(y * size + x)];
        }
    for (int i = 0; i < 9; ++i)
        f[i] = totals[i] > 0 ? cells[i] / totals[i] : 0.0;
    f[9] = area / (bh * bw);
    f[10] = 1.0;
    return f;
}

// Multinomial logistic regression by plain gradient descent.
double linear_probe_accuracy(const SyntheticDataset& train, const SyntheticDataset& test) {
    const int k = train.classes;
    auto features = [&](const SyntheticDataset& d) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(d.samples.size()), 11);
        for (std::size_t i = 0; i < d.samples.size(); ++i)
            x.row(static_cast<Eigen::Index>(i)) = mask_features(d.samples[i].mask, d.size).transpose();
        return x;
    };
    const Eigen::MatrixXd xtr = features(train), xte = features(test);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(xtr.rows(), k);
    for (Eigen::Index i = 0; i < xtr.rows(); ++i)
        y(i, train.samples[static_cast<std::size_t>(i)].label) = 1.0;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(11, k);
    for (int it = 0; it < 3000; ++it) {
        Eigen::MatrixXd z = xtr * w;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            z.row(i).array() -= z.row(i).maxCoeff();
            z.row(i) = z.row(i).array().exp();
            z.row(i) /= z.row(i).sum();
        }
        w -= 2.0 * xtr.transpose() * (z - y) / static_cast<double>(xtr.rows());
    }
    const Eigen::MatrixXd scores = xte * w;
    int correct = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best;
        scores.row(i).maxCoeff(&best);
        correct += static_cast<int>(best) == test.samples[static_cast<std::size_t>(i)].label;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

std::vector<PreparedSample> small_batch(int size, Rng& rng, const MixConfig& mix) {
    const SyntheticDataset d = make_synthetic_dataset(4, 4, 11, size);
    std::vector<PreparedSample> batch;
    for (int i = 0; i < 3; ++i) {
        const auto& a = d.samples[static_cast<std::size_t>(i)];
        const auto& b = d.samples[static_cast<std::size_t>(i + 1)];
        batch.push_back(mixed_sample(a.image, one_hot(a.label, 4), b.image, one_hot(b.label, 4), mix, rng));
    }
    const auto& s = d.samples[3];
    batch.push_back(plain_sample(s.image, one_hot(s.label, 4)));
    return batch;
}

double abs_sum(ModelParams& p, std::initializer_list<std::size_t> blocks) {
    auto all = p.blocks();
    double s = 0.0;
    for (std::size_t b : blocks)
        for (double v : all[b])
            s += std::abs(v);
    return s;
}

}  // namespace

TEST(SyntheticData, BalancedPerClass) {
    const SyntheticDataset d = make_synthetic_dataset(100, 4, 3);
    std::map<int, int> counts;
    for (const auto& s : d.samples)
        ++counts[s.label];
    ASSERT_EQ(counts.size(), 4u);
    for (const auto& [label, n] : counts)
        EXPECT_EQ(n, 25) << "class " << label;
}

TEST(SyntheticData, SeedDeterminesDataset) {
    const SyntheticDataset a = make_synthetic_dataset(40, 4, 9);
    const SyntheticDataset b = make_synthetic_dataset(40, 4, 9);
    const SyntheticDataset c = make_synthetic_dataset(40, 4, 10);
    ASSERT_EQ(a.samples.size(), b.samples.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        EXPECT_TRUE(same_image(a.samples[i].image, b.samples[i].image));
        EXPECT_EQ(a.samples[i].label, b.samples[i].label);
        differs = differs || !same_image(a.samples[i].image, c.samples[i].image);
    }
    EXPECT_TRUE(differs);
}

TEST(SyntheticData, RejectsBadArguments) {
    EXPECT_THROW(make_synthetic_dataset(10, 4, 1), InvalidInput);
    EXPECT_THROW(make_synthetic_dataset(8, 1, 1), InvalidInput);
    EXPECT_THROW(make_synthetic_dataset(8, 7, 1), InvalidInput);
    EXPECT_THROW(make_synthetic_dataset(8, 4, 1, 30), InvalidInput);
}

TEST(SyntheticData, PixelsInRangeAndShapesVisible) {
    const SyntheticDataset d = make_synthetic_dataset(60, 6, 5);
    for (const auto& s : d.samples) {
        for (double v : s.image.pixels)
            ASSERT_TRUE(v >= 0.0 && v <= 1.0);
        const auto area = std::accumulate(s.mask.begin(), s.mask.end(), 0);
        EXPECT_GT(area, 20);
        EXPECT_LT(area, 32 * 32 / 2);
    }
}

TEST(SyntheticData, MasksSeparableByLinearProbe) {
    const SyntheticDataset train = make_synthetic_dataset(800, 4, 21);
    const SyntheticDataset test = make_synthetic_dataset(400, 4, 22);
    EXPECT_GT(linear_probe_accuracy(train, test), 0.9);
}

TEST(Model, BlocksCoverEveryParameter) {
    Rng rng(1);
    ToyModel m = ToyModel::initialize({4, 8, 6}, rng);
    std::size_t total = 0;
    for (auto b : m.params.blocks())
        total += b.size();
    const std::size_t expected = (27 * 8 + 8) + 2 * (72 * 8 + 8) + (8 * 32 + 8) + (8 * 24 + 6) + (8 * 4 + 4) +
                                 (6 * 4 + 4) + 3 * 36 + 2 * 6;
    EXPECT_EQ(total, expected);
    ModelParams z = m.params.zeros_like();
    for (auto b : z.blocks())
        for (double v : b)
            ASSERT_EQ(v, 0.0);
}

TEST(Forward, EncoderRunsOncePerSample) {
    Rng rng(2);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    MixConfig mix;
    mix.q_min = 8;
    mix.q_max = 12;
    const auto batch = small_batch(16, rng, mix);
    ModelParams g;
    forward_backward(m, batch, mix, {}, &g);
    EXPECT_EQ(m.counters.encoder, batch.size());
    EXPECT_EQ(m.counters.decoder, 3u);
    EXPECT_EQ(m.counters.attention, 3u);
    EXPECT_EQ(m.counters.local_head, 3u);
}

TEST(Forward, EvaluateUsesEncoderAndGlobalHeadOnly) {
    Rng rng(3);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    const SyntheticDataset d = make_synthetic_dataset(40, 4, 4);
    evaluate(m, d);
    EXPECT_EQ(m.counters.encoder, 40u);
    EXPECT_EQ(m.counters.decoder, 0u);
    EXPECT_EQ(m.counters.attention, 0u);
    EXPECT_EQ(m.counters.local_head, 0u);
}

TEST(Forward, NoPasteGivesZeroLambdaAndFirstLabel) {
    Rng rng(4);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    const SyntheticDataset d = make_synthetic_dataset(4, 4, 5);
    MixConfig mix;
    mix.p = 0.0;
    const auto& a = d.samples[0];
    const auto& b = d.samples[1];
    const StepResult r =
        forward_lgcoamix(m, a.image, one_hot(a.label, 4), b.image, one_hot(b.label, 4), mix, {}, rng);
    ASSERT_EQ(r.lambdas.size(), 1u);
    EXPECT_EQ(r.lambdas[0], 0.0);
    EXPECT_EQ(r.targets[0].probs, one_hot(a.label, 4).probs);
}

TEST(Forward, IdenticalPairKeepsLabel) {
    Rng rng(5);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    const SyntheticDataset d = make_synthetic_dataset(4, 4, 6);
    const auto& a = d.samples[2];
    for (int t = 0; t < 5; ++t) {
        const StepResult r =
            forward_lgcoamix(m, a.image, one_hot(a.label, 4), a.image, one_hot(a.label, 4), {}, {}, rng);
        EXPECT_GT(r.lambdas[0], 0.0);
        EXPECT_EQ(r.targets[0].probs, one_hot(a.label, 4).probs);
        EXPECT_TRUE(std::isfinite(r.total));
    }
}

TEST(Forward, LossesFiniteAndTotalMatchesWeights) {
    Rng rng(6);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    MixConfig mix;
    mix.q_min = 8;
    mix.q_max = 12;
    const auto batch = small_batch(16, rng, mix);
    LossConfig loss;
    const StepResult r = forward_backward(m, batch, mix, loss, nullptr);
    EXPECT_TRUE(std::isfinite(r.global) && std::isfinite(r.local) && std::isfinite(r.contrast));
    EXPECT_GT(r.local, 0.0);
    EXPECT_NEAR(r.total, r.global + loss.gamma1 * r.local + loss.gamma2 * r.contrast, 1e-12);
    ASSERT_EQ(r.weights.size(), batch.size());
    for (std::size_t i = 0; i < 3; ++i)
        for (double w : r.weights[i])
            EXPECT_TRUE(w > 0.0 && w < 1.0);
}

TEST(Forward, ZeroLossWeightsReduceToGlobalObjective) {
    Rng rng(7);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    MixConfig mix;
    mix.q_min = 8;
    mix.q_max = 12;
    const auto batch = small_batch(16, rng, mix);
    LossConfig loss;
    loss.gamma1 = 0.0;
    loss.gamma2 = 0.0;
    ModelParams g;
    const StepResult r = forward_backward(m, batch, mix, loss, &g);
    EXPECT_EQ(r.total, r.global);
    // Blocks 0-5 encoder, 6-9 decoder, 10-11 global head, 12-13 local head, 14-18 attention.
    EXPECT_EQ(abs_sum(g, {6, 7, 8, 9, 12, 13, 14, 15, 16, 17, 18}), 0.0);
    EXPECT_GT(abs_sum(g, {0, 1, 2, 3, 4, 5, 10, 11}), 0.0);
    // Lambda still comes from the attention weights.
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_GT(r.lambdas[i], 0.0);
}

TEST(Forward, FrozenChoicesAreHonoured) {
    Rng rng(8);
    ToyModel m = ToyModel::initialize({4, 8, 8}, rng);
    MixConfig mix;
    mix.q_min = 8;
    mix.q_max = 12;
    const auto batch = small_batch(16, rng, mix);
    const StepResult base = forward_backward(m, batch, mix, {}, nullptr);
    FrozenChoices frozen{std::vector<double>(batch.size(), 0.25), base.selections};
    const StepResult r = forward_backward(m, batch, mix, {}, nullptr, &frozen);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_EQ(r.lambdas[i], 0.25);
    EXPECT_EQ(r.selections, base.selections);
}

TEST(Forward, ModelGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const FiniteDiffResult r = model_gradcheck(seed, 16, 1e-5);
        EXPECT_TRUE(r.passed(1e-4)) << "seed " << seed << " error " << r.max_relative_error;
        EXPECT_GT(r.checked, 9 * r.skipped);
    }
}

TEST(BaseAugment, PadZeroWithoutFlipIsIdentityOrMirror) {
    const SyntheticDataset d = make_synthetic_dataset(4, 4, 7);
    const Image& img = d.samples[0].image;
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const Image out = base_augment(img, rng, 0);
        Image mirror = img;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < img.channels; ++c)
                    mirror.at(y, x, c) = img.at(y, img.width - 1 - x, c);
        EXPECT_TRUE(same_image(out, img) || same_image(out, mirror));
    }
}

TEST(BaseAugment, CropKeepsShapeAndRange) {
    const SyntheticDataset d = make_synthetic_dataset(4, 4, 8);
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const Image out = base_augment(d.samples[1].image, rng);
        EXPECT_EQ(out.height, 32);
        EXPECT_EQ(out.width, 32);
        for (double v : out.pixels)
            ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    }
}

TEST(Train, ZeroEpochsIsChance) {
    TrainConfig c;
    c.epochs = 0;
    c.seed = 3;
    const TrainResult r = train(c);
    EXPECT_TRUE(r.log.empty());
    EXPECT_NEAR(r.test_accuracy, 1.0 / c.classes, 0.10);
}

TEST(Train, LogIsDeterministic) {
    TrainConfig c;
    c.train_size = 128;
    c.test_size = 64;
    c.epochs = 2;
    c.encoder_width = 8;
    c.feature_depth = 8;
    c.seed = 5;
    const TrainResult a = train(c);
    const TrainResult b = train(c);
    ASSERT_EQ(a.log.size(), 2u);
    for (std::size_t i = 0; i < a.log.size(); ++i)
        EXPECT_EQ(to_json(a.log[i]).dump(), to_json(b.log[i]).dump());
    EXPECT_GT(a.log[0].loss_local, 0.0);
    EXPECT_EQ(a.encoder_calls_per_sample, 1.0);
}

TEST(Train, CanMemoriseASmallSet) {
    const SyntheticDataset d = make_synthetic_dataset(32, 4, 12);
    Rng rng(9);
    ToyModel m = ToyModel::initialize({4, 16, 8}, rng);
    std::vector<PreparedSample> batch;
    for (const auto& s : d.samples)
        batch.push_back(plain_sample(s.image, one_hot(s.label, 4)));
    ModelParams g;
    ModelParams v = m.params.zeros_like();
    double acc = 0.0;
    for (int step = 0; step < 400 && acc < 1.0; ++step) {
        forward_backward(m, batch, {}, {}, &g);
        auto theta = m.params.blocks();
        auto vb = v.blocks();
        auto gb = g.blocks();
        for (std::size_t b = 0; b < theta.size(); ++b)
            for (std::size_t i = 0; i < theta[b].size(); ++i) {
                vb[b][i] = 0.9 * vb[b][i] + gb[b][i];
                theta[b][i] -= 0.05 * vb[b][i];
            }
        if (step % 20 == 19)
            acc = evaluate(m, d);
    }
    EXPECT_EQ(acc, 1.0);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
    TrainConfig c;
    c.epochs = 7;
    c.mix.p = 0.3;
    c.loss.tau = 0.2;
    c.loss.contrast_form = ContrastForm::all_others;
    c.seed = 42;
    const TrainConfig back = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());

    EXPECT_THROW(train_config_from_json(nlohmann::json{{"epochs", 3}, {"bogus", 1}}), InvalidInput);
    EXPECT_THROW(train_config_from_json(nlohmann::json{{"train_size", 10}}), InvalidInput);
    EXPECT_THROW(train_config_from_json(nlohmann::json{{"learning_rate", -1.0}}), InvalidInput);
    EXPECT_EQ(train_config_from_json(nlohmann::json::object()).epochs, 30);
}
