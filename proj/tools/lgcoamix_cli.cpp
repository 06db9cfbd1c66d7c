#include "lgcoamix/batch.hpp"
#include "lgcoamix/gradcheck.hpp"
#include "lgcoamix/io.hpp"
#include "lgcoamix/mixer.hpp"
#include "lgcoamix/slic.hpp"
#include "lgcoamix/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace lgcoamix;
namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_failure = 2;

struct MixOptions {
    int q_min = MixConfig{}.q_min;
    int q_max = MixConfig{}.q_max;
    double p = MixConfig{}.p;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--qmin", q_min, "Fewest superpixels per image")->capture_default_str();
        cmd->add_option("--qmax", q_max, "Most superpixels per image")->capture_default_str();
        cmd->add_option("--p", p, "Probability of pasting each superpixel of the second image")
            ->capture_default_str();
    }
    [[nodiscard]] MixConfig config() const {
        MixConfig c;
        c.q_min = q_min;
        c.q_max = q_max;
        c.p = p;
        c.validate();
        return c;
    }
};

// A file the user pointed us at that cannot be read is bad input, not a
// runtime failure.
template <typename F>
auto user_input(F&& read) {
    try {
        return read();
    } catch (const IoError& e) {
        throw InvalidInput(e.what());
    }
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
}

int run_segment(const fs::path& input, const SlicParams& params, std::uint64_t seed, const fs::path& out) {
    const Image image = user_input([&] { return read_png_rgb(input); });
    Rng rng(seed);
    const SuperpixelMap map = slic_segment(image, params, rng);
    ensure_parent(out);
    write_label_map(out, map);
    std::printf("%d superpixels -> %s\n", map.count, out.string().c_str());
    return exit_ok;
}

int run_mix(const fs::path& a, const fs::path& b, const MixConfig& config, std::uint64_t seed,
            const std::string& prefix) {
    const Image x1 = user_input([&] { return read_png_rgb(a); });
    const Image x2 = user_input([&] { return read_png_rgb(b); });
    Rng rng(seed);
    const MixResult r = lgcoamix::lgcoamix(x1, one_hot(0, 2), x2, one_hot(1, 2), config, rng);
    ensure_parent(prefix + "x_mix.png");
    write_png(prefix + "x_mix.png", r.sample.mixed);
    write_label_map(prefix + "s_mix.png", r.sample.smap);
    write_text(prefix + "plan.json", plan_to_json(r.plan, r.sample.provenance).dump(2) + "\n");
    std::printf("q1 %d q2 %d pasted %zu of %d superpixels, lambda_area %.6f\n", r.plan.q1, r.plan.q2,
                r.plan.selected_from_x2.size(), r.plan.q2, lambda_area(r.plan, x1.height, x1.width));
    return exit_ok;
}

int run_gradcheck(std::uint64_t seed, int trials, double eps, bool model, double model_eps) {
    constexpr double tolerance = 1e-4;
    const PipelineGradcheckReport r = pipeline_gradcheck(seed, trials, eps);
    auto line = [&](const char* name, double err) {
        std::printf("%-8s max_rel_error %.3e %s\n", name, err, r.finite && err < tolerance ? "PASS" : "FAIL");
    };
    line("global", r.global);
    line("local", r.local);
    line("contrast", r.contrast);
    line("total", r.total);
    bool ok = r.passed(tolerance);
    if (model) {
        const FiniteDiffResult m = model_gradcheck(seed, 16, model_eps);
        const bool pass = m.passed(tolerance);
        std::printf("model    max_rel_error %.3e %s (%zu checked, %zu skipped at ReLU kinks)\n",
                    m.max_relative_error, pass ? "PASS" : "FAIL", m.checked, m.skipped);
        ok = ok && pass;
    }
    return ok ? exit_ok : exit_failure;
}

int run_augment_batch(const fs::path& manifest_path, const MixConfig& config, std::uint64_t seed,
                      const fs::path& out_dir, int workers) {
    const Manifest manifest = user_input([&] { return read_manifest(manifest_path); });
    const AugmentReport r = augment_batch(manifest, config, seed, out_dir, worker_count(workers));
    for (const auto& s : r.skipped)
        std::fprintf(stderr, "skipped pair %zu: %s: %s\n", s.pair_index, s.path.string().c_str(),
                     s.reason.c_str());
    std::printf("%zu mixed, %zu skipped -> %s\n", r.records.size(), r.skipped.size(),
                r.manifest_path.string().c_str());
    return exit_ok;
}

int run_bench(const fs::path& manifest_path, const MixConfig& config, std::uint64_t seed, int workers,
              int repeats, const std::string& out) {
    const Manifest manifest = user_input([&] { return read_manifest(manifest_path); });
    const BenchReport r = bench(manifest, config, seed, worker_count(workers), repeats);
    const std::string text = to_json(r).dump(2) + "\n";
    if (out.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        ensure_parent(out);
        write_text(out, text);
        std::printf("%.1f images/s on %d workers -> %s\n", r.images_per_second, r.workers, out.c_str());
    }
    return exit_ok;
}

int run_train(const std::string& config_path, const std::string& log_path) {
    TrainConfig config;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in)
            throw InvalidInput("cannot open " + config_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw InvalidInput(config_path + ": " + e.what());
        }
        config = train_config_from_json(j);
    }
    config.validate();
    std::ofstream log;
    if (!log_path.empty()) {
        ensure_parent(log_path);
        log.open(log_path);
        if (!log)
            throw IoError("cannot write " + log_path);
    }
    const TrainResult r = train(config, [&](const EpochLog& e) {
        const std::string line = to_json(e).dump();
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        if (log.is_open())
            log << line << '\n' << std::flush;
    });
    std::printf("test accuracy %.4f, encoder calls per sample %.3f\n", r.test_accuracy,
                r.encoder_calls_per_sample);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Superpixel cut-and-paste augmentation with attention-based label mixing"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;

    auto* seg = app.add_subcommand("segment", "SLIC superpixels of one image");
    fs::path seg_in, seg_out;
    SlicParams slic;
    seg->add_option("--input", seg_in, "RGB PNG")->required();
    seg->add_option("--superpixels", slic.superpixels, "Target superpixel count")->capture_default_str();
    seg->add_option("--compactness", slic.compactness, "Colour/space trade-off")->capture_default_str();
    seg->add_option("--iters", slic.iterations, "Assignment/update rounds")->capture_default_str();
    seg->add_option("--seed", seed, "Random seed")->capture_default_str();
    seg->add_option("--out", seg_out, "16-bit label PNG; a .json sidecar is written next to it")->required();

    auto* mix = app.add_subcommand("mix", "Mix one image pair");
    fs::path image_a, image_b;
    std::string prefix;
    MixOptions mix_opts;
    mix->add_option("--image-a", image_a, "Destination image x1")->required();
    mix->add_option("--image-b", image_b, "Source image x2")->required();
    mix_opts.add_to(mix);
    mix->add_option("--seed", seed, "Random seed")->capture_default_str();
    mix->add_option("--out-prefix", prefix, "Prefix for x_mix.png, s_mix.png and plan.json")->required();

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
    std::uint64_t gc_seed = 7;
    int trials = 20;
    double eps = 1e-4, model_eps = 1e-5;
    bool model = false;
    gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
    gc->add_option("--trials", trials, "Random instances")->capture_default_str()->check(CLI::PositiveNumber);
    gc->add_option("--eps", eps, "Central-difference step")->capture_default_str()->check(CLI::PositiveNumber);
    gc->add_flag("--model", model, "Also check the full toy model on a 16x16 instance");
    gc->add_option("--model-eps", model_eps, "Step for the model check")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    auto* ab = app.add_subcommand("augment-batch", "Mix every manifest image with a random partner");
    fs::path manifest, out_dir;
    int workers = 0;
    MixOptions batch_opts;
    ab->add_option("--manifest", manifest, "JSONL manifest")->required();
    ab->add_option("--out-dir", out_dir, "Output directory")->required();
    batch_opts.add_to(ab);
    ab->add_option("--seed", seed, "Random seed")->capture_default_str();
    ab->add_option("--workers", workers, "Worker threads (0: all cores)")->capture_default_str();

    auto* bn = app.add_subcommand("bench", "Augmentation throughput");
    int repeats = 1;
    std::string bench_out;
    MixOptions bench_opts;
    bn->add_option("--manifest", manifest, "JSONL manifest")->required();
    bench_opts.add_to(bn);
    bn->add_option("--seed", seed, "Random seed")->capture_default_str();
    bn->add_option("--workers", workers, "Worker threads (0: all cores)")->capture_default_str();
    bn->add_option("--repeats", repeats, "Passes over the manifest")->capture_default_str();
    bn->add_option("--out", bench_out, "JSON report (default: stdout)");

    auto* tt = app.add_subcommand("train-toy", "Train the toy model on synthetic shapes");
    std::string config_path, log_path;
    tt->add_option("--config", config_path, "JSON training config (defaults when omitted)");
    tt->add_option("--log", log_path, "JSONL log, one record per epoch");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_invalid;
    }

    try {
        if (*seg)
            return run_segment(seg_in, slic, seed, seg_out);
        if (*mix)
            return run_mix(image_a, image_b, mix_opts.config(), seed, prefix);
        if (*gc)
            return run_gradcheck(gc_seed, trials, eps, model, model_eps);
        if (*ab)
            return run_augment_batch(manifest, batch_opts.config(), seed, out_dir, workers);
        if (*bn)
            return run_bench(manifest, bench_opts.config(), seed, workers, repeats, bench_out);
        if (*tt)
            return run_train(config_path, log_path);
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return exit_invalid;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_failure;
    }
    return exit_invalid;
}
