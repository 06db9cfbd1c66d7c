#include "lgcoamix/io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace lgcoamix {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const fs::path& path, const char* mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f)
        throw IoError("cannot open " + path.string());
    return f;
}

// libpng reports errors by longjmp; these helpers keep only trivially
// destructible state between setjmp and the jump.
bool read_gray16(std::FILE* fp, png_uint_32* width, png_uint_32* height,
                 std::vector<std::uint16_t>* out) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_set_swap(png);  // host order on little-endian
    *width = png_get_image_width(png, info);
    *height = png_get_image_height(png, info);
    out->assign(static_cast<std::size_t>(*width) * *height, 0);
    for (png_uint_32 y = 0; y < *height; ++y)
        png_read_row(png, reinterpret_cast<png_bytep>(out->data() + static_cast<std::size_t>(y) * *width),
                     nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool write_gray16(std::FILE* fp, png_uint_32 width, png_uint_32 height, const std::uint16_t* data) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, info ? &info : nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);
    for (png_uint_32 y = 0; y < height; ++y)
        png_write_row(png, reinterpret_cast<png_const_bytep>(data + static_cast<std::size_t>(y) * width));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

}  // namespace

Image read_png_rgb(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    return Image::from_bytes(static_cast<int>(image.height), static_cast<int>(image.width), 3, bytes);
}

void write_png(const fs::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw InvalidInput("PNG output needs 1 or 3 channels");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const std::vector<std::uint8_t> bytes = img.to_bytes();
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

fs::path sidecar_path(const fs::path& png_path) {
    fs::path p = png_path;
    return p.replace_extension(".json");
}

void write_label_map(const fs::path& png_path, const SuperpixelMap& map) {
    if (map.count > 65536)
        throw InvalidInput("label maps hold at most 65536 superpixels");
    std::vector<std::uint16_t> data(map.labels.begin(), map.labels.end());
    {
        File f = open_file(png_path, "wb");
        if (!write_gray16(f.get(), static_cast<png_uint_32>(map.width),
                          static_cast<png_uint_32>(map.height), data.data()))
            throw IoError("cannot write PNG " + png_path.string());
    }
    write_text(sidecar_path(png_path), nlohmann::json{{"L", map.count}}.dump() + "\n");
}

SuperpixelMap read_label_map(const fs::path& png_path) {
    png_uint_32 w = 0, h = 0;
    std::vector<std::uint16_t> data;
    {
        File f = open_file(png_path, "rb");
        if (!read_gray16(f.get(), &w, &h, &data))
            throw IoError("not a 16-bit grayscale PNG: " + png_path.string());
    }
    std::ifstream side(sidecar_path(png_path));
    if (!side)
        throw IoError("missing sidecar " + sidecar_path(png_path).string());
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad sidecar " + sidecar_path(png_path).string() + ": " + e.what());
    }
    SuperpixelMap map;
    map.height = static_cast<int>(h);
    map.width = static_cast<int>(w);
    map.count = meta.at("L").get<int>();
    map.labels.assign(data.begin(), data.end());
    return map;
}

nlohmann::json to_json(const LabelVector& label) { return label.probs; }

LabelVector label_from_json(const nlohmann::json& j) {
    if (!j.is_array())
        throw InvalidInput("label must be a JSON array");
    LabelVector out{j.get<std::vector<double>>()};
    validate(out);
    return out;
}

std::vector<std::size_t> rle_encode(const std::vector<std::uint8_t>& mask) {
    std::vector<std::size_t> counts;
    std::uint8_t current = 0;
    std::size_t run = 0;
    for (std::uint8_t m : mask) {
        if ((m != 0) != (current != 0)) {
            counts.push_back(run);
            run = 0;
            current = m ? 1 : 0;
        }
        ++run;
    }
    counts.push_back(run);
    return counts;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::size_t>& counts, std::size_t size) {
    std::vector<std::uint8_t> mask;
    mask.reserve(size);
    std::uint8_t value = 0;
    for (std::size_t c : counts) {
        if (mask.size() + c > size)
            throw InvalidInput("run lengths exceed the mask size");
        mask.insert(mask.end(), c, value);
        value ^= 1;
    }
    if (mask.size() != size)
        throw InvalidInput("run lengths do not cover the mask");
    return mask;
}

nlohmann::json plan_to_json(const MixPlan& plan, const std::vector<Source>& provenance) {
    std::vector<std::string> prov;
    prov.reserve(provenance.size());
    for (Source s : provenance)
        prov.emplace_back(s == Source::x1 ? "x1" : "x2");
    return {{"height", plan.height},
            {"width", plan.width},
            {"mask", {{"counts", rle_encode(plan.mask)}}},
            {"selected_from_x2", plan.selected_from_x2},
            {"provenance", prov},
            {"q1", plan.q1},
            {"q2", plan.q2},
            {"lambda_area", lambda_area(plan, plan.height, plan.width)}};
}

MixPlan plan_from_json(const nlohmann::json& j) {
    MixPlan plan;
    try {
        plan.height = j.at("height").get<int>();
        plan.width = j.at("width").get<int>();
        plan.mask = rle_decode(j.at("mask").at("counts").get<std::vector<std::size_t>>(),
                               static_cast<std::size_t>(plan.height) * plan.width);
        plan.selected_from_x2 = j.at("selected_from_x2").get<std::vector<int>>();
        plan.q1 = j.at("q1").get<int>();
        plan.q2 = j.at("q2").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed plan: ") + e.what());
    }
    return plan;
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest " + path.string());
    Manifest m;
    int declared = 0;
    int max_class = -1;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidInput("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("K") && !j.contains("image_path")) {
            declared = j["K"].get<int>();
            continue;
        }
        if (!j.contains("image_path") || !j.contains("class_index"))
            throw InvalidInput("manifest line " + std::to_string(lineno) +
                               " needs image_path and class_index");
        ManifestRecord r;
        r.image_path = j["image_path"].get<std::string>();
        if (r.image_path.is_relative())
            r.image_path = path.parent_path() / r.image_path;
        r.class_index = j["class_index"].get<int>();
        if (r.class_index < 0)
            throw InvalidInput("negative class index on manifest line " + std::to_string(lineno));
        max_class = std::max(max_class, r.class_index);
        m.records.push_back(std::move(r));
    }
    m.classes = declared > 0 ? declared : max_class + 1;
    if (max_class >= m.classes)
        throw InvalidInput("class index outside [0, K)");
    return m;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text))
        throw IoError("cannot write " + path.string());
}

}  // namespace lgcoamix
