#pragma once

#include "lgcoamix/core_types.hpp"
#include "lgcoamix/mixer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lgcoamix {

/// Failure to read or write a file (as opposed to malformed arguments).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Any PNG is decoded to 8-bit sRGB with three channels.
Image read_png_rgb(const std::filesystem::path& path);

/// Writes 8-bit RGB (3 channels) or grayscale (1 channel).
void write_png(const std::filesystem::path& path, const Image& image);

/// Label map as 16-bit grayscale PNG (pixel value = superpixel id) plus a
/// sidecar next to it with the same stem and a .json extension: {"L": n}.
void write_label_map(const std::filesystem::path& png_path, const SuperpixelMap& map);
SuperpixelMap read_label_map(const std::filesystem::path& png_path);
std::filesystem::path sidecar_path(const std::filesystem::path& png_path);

nlohmann::json to_json(const LabelVector& label);
LabelVector label_from_json(const nlohmann::json& j);

/// Run lengths of alternating 0/1 runs over the raster mask, starting with a
/// (possibly empty) run of zeros.
std::vector<std::size_t> rle_encode(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> rle_decode(const std::vector<std::size_t>& counts, std::size_t size);

/// plan.json: {height, width, mask: {counts}, selected_from_x2, provenance,
/// q1, q2, lambda_area}.
nlohmann::json plan_to_json(const MixPlan& plan, const std::vector<Source>& provenance);
MixPlan plan_from_json(const nlohmann::json& j);

struct ManifestRecord {
    std::filesystem::path image_path;
    int class_index = 0;
};

struct Manifest {
    int classes = 0;
    std::vector<ManifestRecord> records;
};

/// JSONL: an optional first line {"K": n}, then {"image_path", "class_index"}
/// per line. Relative paths resolve against the manifest's directory. Without
/// a K line, K is one more than the largest class index.
Manifest read_manifest(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace lgcoamix
