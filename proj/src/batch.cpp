#include "lgcoamix/batch.hpp"

#include "lgcoamix/attention.hpp"
#include "lgcoamix/rng.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

namespace lgcoamix {

namespace fs = std::filesystem;

int worker_count(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    n = std::max(n, 1);
    if (const char* env = std::getenv("LGCOAMIX_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap > 0)
            n = std::min<long>(n, cap);
    }
    return n;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, int)>& fn) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&](int worker) {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i, worker);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        threads.emplace_back(body, w);
    for (auto& t : threads)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

std::vector<std::size_t> draw_partners(std::size_t n, std::uint64_t seed) {
    if (n < 2)
        throw InvalidInput("pairing needs at least two images");
    Rng rng(derive_seed(seed, 0));
    std::vector<std::size_t> partner(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 2));
        partner[i] = j >= i ? j + 1 : j;
    }
    return partner;
}

std::uint64_t pair_seed(std::uint64_t seed, std::size_t index) {
    // Stream 0 is taken by the pairing.
    return derive_seed(seed, static_cast<std::uint64_t>(index) + 1);
}

nlohmann::json to_json(const AugmentedRecord& r) {
    return {{"pair_index", r.pair_index},
            {"image_path", r.image_path.generic_string()},
            {"label_map_path", r.label_map_path.generic_string()},
            {"plan_path", r.plan_path.generic_string()},
            {"x1_path", r.x1_path.generic_string()},
            {"x2_path", r.x2_path.generic_string()},
            {"label", to_json(r.label)},
            {"lambda_area", r.lambda_area}};
}

AugmentedRecord augmented_record_from_json(const nlohmann::json& j) {
    try {
        AugmentedRecord r;
        r.pair_index = j.at("pair_index").get<std::size_t>();
        r.image_path = j.at("image_path").get<std::string>();
        r.label_map_path = j.at("label_map_path").get<std::string>();
        r.plan_path = j.at("plan_path").get<std::string>();
        r.x1_path = j.at("x1_path").get<std::string>();
        r.x2_path = j.at("x2_path").get<std::string>();
        r.label = label_from_json(j.at("label"));
        r.lambda_area = j.at("lambda_area").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed augmented record: ") + e.what());
    }
}

namespace {

struct Loaded {
    std::optional<Image> image;
    std::string error;
};

std::vector<Loaded> load_all(const Manifest& manifest, int workers) {
    std::vector<Loaded> images(manifest.records.size());
    parallel_for(images.size(), workers, [&](std::size_t i, int) {
        try {
            images[i].image = read_png_rgb(manifest.records[i].image_path);
        } catch (const std::exception& e) {
            images[i].error = e.what();
        }
    });
    return images;
}

void check_manifest(const Manifest& manifest) {
    if (manifest.records.empty())
        throw InvalidInput("manifest is empty");
    if (manifest.records.size() < 2)
        throw InvalidInput("manifest needs at least two images");
    if (manifest.classes < 1)
        throw InvalidInput("manifest has no classes");
}

std::string numbered(const char* prefix, std::size_t index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%06zu%s", prefix, index, ext);
    return buf;
}

// FNV-1a over raw bytes.
void fnv(std::uint64_t& h, const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

AugmentReport augment_batch(const Manifest& manifest, const MixConfig& config, std::uint64_t seed,
                            const fs::path& out_dir, int workers) {
    check_manifest(manifest);
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    const std::size_t n = manifest.records.size();
    const std::vector<Loaded> images = load_all(manifest, workers);
    const std::vector<std::size_t> partner = draw_partners(n, seed);

    std::vector<std::optional<AugmentedRecord>> done(n);
    std::vector<std::optional<SkippedPair>> failed(n);
    // Source images are recorded relative to out_dir, like the outputs.
    const fs::path out_abs = fs::absolute(out_dir).lexically_normal();
    auto source_path = [&](const fs::path& p) {
        const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(out_abs);
        return rel.empty() ? fs::absolute(p) : rel;
    };
    std::mutex write_mutex;
    parallel_for(n, workers, [&](std::size_t i, int) {
        const std::size_t j = partner[i];
        for (std::size_t k : {i, j})
            if (!images[k].image) {
                failed[i] = SkippedPair{i, manifest.records[k].image_path, images[k].error};
                return;
            }
        const auto& r1 = manifest.records[i];
        const auto& r2 = manifest.records[j];
        Rng rng(pair_seed(seed, i));
        MixResult mixed;
        try {
            mixed = lgcoamix(*images[i].image, one_hot(r1.class_index, manifest.classes), *images[j].image,
                             one_hot(r2.class_index, manifest.classes), config, rng);
        } catch (const InvalidInput& e) {
            failed[i] = SkippedPair{i, r2.image_path, e.what()};
            return;
        }
        AugmentedRecord rec;
        rec.pair_index = i;
        rec.image_path = numbered("mix", i, ".png");
        rec.label_map_path = numbered("smap", i, ".png");
        rec.plan_path = numbered("plan", i, ".json");
        rec.x1_path = source_path(r1.image_path);
        rec.x2_path = source_path(r2.image_path);
        rec.lambda_area = lambda_area(mixed.plan, mixed.plan.height, mixed.plan.width);
        rec.label = mix_labels(mixed.sample.y1, mixed.sample.y2, rec.lambda_area);
        const std::string plan_text = plan_to_json(mixed.plan, mixed.sample.provenance).dump(2) + "\n";

        std::lock_guard lock(write_mutex);
        write_png(out_dir / rec.image_path, mixed.sample.mixed);
        write_label_map(out_dir / rec.label_map_path, mixed.sample.smap);
        write_text(out_dir / rec.plan_path, plan_text);
        done[i] = std::move(rec);
    });

    AugmentReport report;
    std::string lines;
    for (std::size_t i = 0; i < n; ++i) {
        if (done[i]) {
            lines += to_json(*done[i]).dump() + "\n";
            report.records.push_back(std::move(*done[i]));
        } else if (failed[i]) {
            report.skipped.push_back(std::move(*failed[i]));
        }
    }
    report.manifest_path = out_dir / "manifest.jsonl";
    write_text(report.manifest_path, lines);
    return report;
}

std::vector<AugmentedRecord> read_augmented_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    const fs::path base = path.parent_path();
    auto resolve = [&](fs::path& p) {
        if (p.is_relative())
            p = base / p;
    };
    std::vector<AugmentedRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw InvalidInput(path.string() + ": " + e.what());
        }
        AugmentedRecord r = augmented_record_from_json(j);
        resolve(r.image_path);
        resolve(r.label_map_path);
        resolve(r.plan_path);
        resolve(r.x1_path);
        resolve(r.x2_path);
        out.push_back(std::move(r));
    }
    return out;
}

nlohmann::json to_json(const BenchReport& r) {
    return {{"pairs", r.pairs},
            {"workers", r.workers},
            {"wall_seconds", r.wall_seconds},
            {"images_per_second", r.images_per_second},
            {"stages", {{"segment", r.stages.segment}, {"mix", r.stages.mix}, {"pool", r.stages.pool}}},
            {"digest", r.digest}};
}

BenchReport bench(const Manifest& manifest, const MixConfig& config, std::uint64_t seed, int workers,
                  int repeats) {
    check_manifest(manifest);
    config.validate();
    if (repeats < 1)
        throw InvalidInput("repeats must be positive");
    workers = std::max(1, workers);
    const std::size_t n = manifest.records.size();
    const std::vector<Loaded> images = load_all(manifest, workers);
    for (std::size_t i = 0; i < n; ++i)
        if (!images[i].image)
            throw IoError(images[i].error);
    const std::vector<std::size_t> partner = draw_partners(n, seed);
    const std::size_t total = n * static_cast<std::size_t>(repeats);

    using clock = std::chrono::steady_clock;
    std::vector<MixTimings> mix_times(static_cast<std::size_t>(workers));
    std::vector<double> pool_times(static_cast<std::size_t>(workers), 0.0);
    std::vector<std::uint64_t> hashes(total, 0);

    const auto start = clock::now();
    parallel_for(total, workers, [&](std::size_t k, int w) {
        const std::size_t i = k % n;
        const std::size_t j = partner[i];
        Rng rng(pair_seed(seed, k));
        const MixResult m =
            lgcoamix(*images[i].image, one_hot(manifest.records[i].class_index, manifest.classes),
                     *images[j].image, one_hot(manifest.records[j].class_index, manifest.classes), config, rng,
                     {}, &mix_times[static_cast<std::size_t>(w)]);
        const auto pool_start = clock::now();
        const Image& x = m.sample.mixed;
        FeatureMap fm{x.height, x.width, Matrix(static_cast<Eigen::Index>(x.pixel_count()), x.channels)};
        std::copy(x.pixels.begin(), x.pixels.end(), fm.values.data());
        const Matrix pooled = superpixel_pool(fm, m.sample.smap);
        pool_times[static_cast<std::size_t>(w)] += std::chrono::duration<double>(clock::now() - pool_start).count();

        std::uint64_t h = 0xcbf29ce484222325ULL;
        fnv(h, x.pixels.data(), x.pixels.size() * sizeof(double));
        fnv(h, m.sample.smap.labels.data(), m.sample.smap.labels.size() * sizeof(int));
        fnv(h, pooled.data(), static_cast<std::size_t>(pooled.size()) * sizeof(double));
        hashes[k] = h;
    });
    BenchReport r;
    r.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
    r.pairs = total;
    r.workers = workers;
    r.images_per_second = r.wall_seconds > 0.0 ? static_cast<double>(total) / r.wall_seconds : 0.0;
    for (std::size_t w = 0; w < mix_times.size(); ++w) {
        r.stages.segment += mix_times[w].segment / workers;
        r.stages.mix += mix_times[w].mix / workers;
        r.stages.pool += pool_times[w] / workers;
    }
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    fnv(digest, hashes.data(), hashes.size() * sizeof(std::uint64_t));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    r.digest = buf;
    return r;
}

}  // namespace lgcoamix
