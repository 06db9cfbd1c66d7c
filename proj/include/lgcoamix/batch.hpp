#pragma once

#include "lgcoamix/io.hpp"
#include "lgcoamix/mixer.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace lgcoamix {

/// Number of worker threads: `requested` if positive, otherwise the hardware
/// concurrency; capped by LGCOAMIX_THREADS when that is set to a positive integer.
int worker_count(int requested = 0);

/// Calls fn(index, worker) for every index in [0, n) on `workers` threads.
/// Indices are handed out dynamically; the first exception is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, int)>& fn);

/// Pair i mixes image i (as x1) with a partner drawn uniformly from the others.
std::vector<std::size_t> draw_partners(std::size_t n, std::uint64_t seed);

/// Seed of the generator used for pair `index`.
std::uint64_t pair_seed(std::uint64_t seed, std::size_t index);

struct AugmentedRecord {
    std::size_t pair_index = 0;
    std::filesystem::path image_path;      // mixed image
    std::filesystem::path label_map_path;  // S_mix as 16-bit PNG (+ .json sidecar)
    std::filesystem::path plan_path;
    std::filesystem::path x1_path;        // source images, relative to out_dir like the rest
    std::filesystem::path x2_path;
    LabelVector label;                     // mixed with lambda_area
    double lambda_area = 0.0;
};

nlohmann::json to_json(const AugmentedRecord& record);
AugmentedRecord augmented_record_from_json(const nlohmann::json& j);

struct SkippedPair {
    std::size_t pair_index = 0;
    std::filesystem::path path;
    std::string reason;
};

struct AugmentReport {
    std::vector<AugmentedRecord> records;  // in pair order
    std::vector<SkippedPair> skipped;
    std::filesystem::path manifest_path;
};

/// Mixes every manifest image with a random partner and writes, per pair,
/// mix_NNNNNN.png, smap_NNNNNN.png (+ .json) and plan_NNNNNN.json into
/// `out_dir`, plus manifest.jsonl listing the records with paths relative to
/// `out_dir`. Pairs whose images cannot be read or mixed are skipped and
/// reported. Outputs do not depend on the worker count.
AugmentReport augment_batch(const Manifest& manifest, const MixConfig& config, std::uint64_t seed,
                            const std::filesystem::path& out_dir, int workers = 1);

/// Reads a manifest.jsonl written by augment_batch; paths come back absolute.
std::vector<AugmentedRecord> read_augmented_manifest(const std::filesystem::path& path);

struct StageTimes {
    double segment = 0.0;
    double mix = 0.0;
    double pool = 0.0;
};

struct BenchReport {
    std::size_t pairs = 0;
    int workers = 1;
    double wall_seconds = 0.0;
    double images_per_second = 0.0;
    /// Busy time per stage, averaged over workers, so each stays within the wall time.
    StageTimes stages;
    /// Fingerprint of every mixed output, combined in pair order.
    std::string digest;
};

nlohmann::json to_json(const BenchReport& report);

/// Runs the augmentation of augment_batch `repeats` times over the manifest
/// (decoding excluded, nothing written) and measures wall time plus the
/// segment, mix and pool stages. Pool averages the mixed pixels per superpixel.
BenchReport bench(const Manifest& manifest, const MixConfig& config, std::uint64_t seed, int workers,
                  int repeats = 1);

}  // namespace lgcoamix
