#pragma once

#include "lgcoamix/attention.hpp"
#include "lgcoamix/gradcheck.hpp"
#include "lgcoamix/losses.hpp"
#include "lgcoamix/mixer.hpp"
#include "lgcoamix/nn.hpp"
#include "lgcoamix/toy_data.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace lgcoamix {

struct ModelConfig {
    int classes = 4;
    int encoder_width = 32;  // D_enc
    int feature_depth = 32;  // D of the decoded map
};

/// All learnable tensors. The same layout doubles as the gradient buffer.
struct ModelParams {
    // Two stride-2 stages; the second adds a stride-1 convolution to widen
    // the receptive field. ReLU after every convolution.
    Conv2d conv1;        // 3x3 s2, input -> D_enc at H/2; feeds the skip
    Conv2d conv2;        // 3x3 s2, D_enc -> D_enc at H/4
    Conv2d conv2b;       // 3x3 s1, D_enc -> D_enc; output is Z
    Upsample2x up1;      // H/4 -> H/2, skip-added to the conv1 output
    Upsample2x up2;      // H/2 -> H, D_enc -> D; output is the decoded map
    LinearHead global_head;
    LinearHead local_head;
    AttentionParams attention;

    /// Every parameter block, in a fixed order.
    std::vector<std::span<double>> blocks();
    [[nodiscard]] ModelParams zeros_like() const;
};

/// Instrumented invocation counts, in samples processed.
struct CallCounters {
    std::uint64_t encoder = 0;
    std::uint64_t decoder = 0;
    std::uint64_t attention = 0;
    std::uint64_t local_head = 0;
};

struct ToyModel {
    ModelParams params;
    CallCounters counters;

    [[nodiscard]] int classes() const { return params.global_head.classes(); }
    static ToyModel initialize(const ModelConfig& config, Rng& rng);
};

/// One training input. Augmented samples carry the mixed image with its
/// superpixel map and plan; the others are fed as-is with y2 = y1.
struct PreparedSample {
    Image input;
    LabelVector y1;
    LabelVector y2;
    bool augmented = false;
    MixedSample mix;
    MixPlan plan;
};

PreparedSample plain_sample(Image x, LabelVector y);
PreparedSample mixed_sample(const Image& x1, const LabelVector& y1, const Image& x2,
                            const LabelVector& y2, const MixConfig& config, Rng& rng);

/// Optional constants replacing the data-dependent parts of the forward pass
/// (per sample lambda and, for augmented samples, the top-t selection).
struct FrozenChoices {
    std::vector<double> lambdas;
    std::vector<std::vector<int>> selections;
};

struct StepResult {
    double global = 0.0;
    double local = 0.0;
    double contrast = 0.0;
    double total = 0.0;
    std::vector<double> lambdas;                // per sample; 0 for plain samples
    std::vector<std::vector<int>> selections;   // per sample; empty for plain samples
    std::vector<std::vector<double>> weights;   // attention weights, per sample
    std::vector<LabelVector> targets;           // global targets y_mix
    /// Sign pattern of every ReLU input, for kink detection in gradient checks.
    std::vector<std::uint8_t> relu_pattern;
};

/// Single forward propagation over the batch: one encoder pass per sample,
/// global logits from the pooled encoding, and for augmented samples the
/// decoder -> superpixel pooling -> attention branch that yields lambda and
/// the local/contrastive losses. When `grads` is given it receives
/// d(total)/d(params) (it is overwritten, not accumulated).
StepResult forward_backward(ToyModel& model, std::span<const PreparedSample> batch,
                            const MixConfig& mix, const LossConfig& loss, ModelParams* grads,
                            const FrozenChoices* frozen = nullptr, bool record_pattern = false);

/// Mixes (x1, y1) with (x2, y2) and runs one forward pass without updates.
StepResult forward_lgcoamix(ToyModel& model, const Image& x1, const LabelVector& y1, const Image& x2,
                            const LabelVector& y2, const MixConfig& mix, const LossConfig& loss,
                            Rng& rng);

/// Top-1 accuracy with the encoder and global head only.
double evaluate(ToyModel& model, const SyntheticDataset& data);

/// Horizontal flip with probability 1/2, then a random crop of the image
/// zero-padded by `pad` pixels.
Image base_augment(const Image& image, Rng& rng, int pad = 4);

struct TrainConfig {
    int classes = 4;
    int train_size = 2000;
    int test_size = 400;
    int image_size = 32;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double augment_probability = 0.5;
    int encoder_width = 32;
    int feature_depth = 32;
    MixConfig mix;
    LossConfig loss;
    std::uint64_t seed = 0;

    void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);

struct EpochLog {
    int epoch = 0;
    double loss_global = 0.0;
    double loss_local = 0.0;
    double loss_contrast = 0.0;
    double loss_total = 0.0;
    double eval_acc = 0.0;
};

nlohmann::json to_json(const EpochLog& log);

/// Raised when a loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    ToyModel model;
    std::vector<EpochLog> log;
    double test_accuracy = 0.0;
    /// Encoder invocations per optimisation step divided by the batch size.
    double encoder_calls_per_sample = 0.0;
};

/// SGD with momentum and weight decay on the synthetic shapes task. The
/// training split uses `seed`, the test split a seed derived from it.
TrainResult train(const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Finite-difference check of the full model gradient on a small random
/// instance (size x size images, narrow layers). Lambda and selection are
/// frozen at the base point; coordinates whose perturbation flips a ReLU are
/// skipped.
FiniteDiffResult model_gradcheck(std::uint64_t seed, int size, double epsilon);

}  // namespace lgcoamix
