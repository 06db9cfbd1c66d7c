#include "lgcoamix/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace lgcoamix {

namespace {

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

// D65 reference white.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;

void pixel_to_lab(double r, double g, double b, double* out) {
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double fx = lab_f(x / kXn);
    const double fy = lab_f(y / kYn);
    const double fz = lab_f(z / kZn);
    out[0] = 116.0 * fy - 16.0;
    out[1] = 500.0 * (fx - fy);
    out[2] = 200.0 * (fy - fz);
}

struct Grid {
    int rows;
    int cols;
};

// Picks a rows x cols seeding grid whose product is close to q while keeping
// grid cells within a 2:1 aspect ratio.
Grid choose_grid(int height, int width, int q) {
    Grid best{0, 0};
    int best_err = std::numeric_limits<int>::max();
    double best_aspect = std::numeric_limits<double>::infinity();
    for (int rows = 1; rows <= std::min(height, q); ++rows) {
        const int lo = std::max(1, q / rows);
        for (int cols = lo; cols <= std::min(width, lo + 1); ++cols) {
            const double aspect = std::abs(std::log((static_cast<double>(width) / cols) /
                                                    (static_cast<double>(height) / rows)));
            if (aspect > std::log(2.0) + 1e-12)
                continue;
            const int err = std::abs(rows * cols - q);
            if (err < best_err || (err == best_err && aspect < best_aspect - 1e-12)) {
                best = {rows, cols};
                best_err = err;
                best_aspect = aspect;
            }
        }
    }
    if (best.rows == 0) {
        const int rows = std::clamp(
            static_cast<int>(std::lround(std::sqrt(static_cast<double>(q) * height / width))), 1,
            height);
        const int cols =
            std::clamp(static_cast<int>(std::lround(static_cast<double>(q) / rows)), 1, width);
        best = {rows, cols};
    }
    return best;
}

struct Center {
    double y = 0.0;
    double x = 0.0;
    double color[3] = {0.0, 0.0, 0.0};
};

}  // namespace

void SlicParams::validate() const {
    if (superpixels < 1)
        throw InvalidInput("requested superpixel count must be at least 1");
    if (!(compactness > 0.0))
        throw InvalidInput("compactness must be positive");
    if (iterations < 1)
        throw InvalidInput("iterations must be at least 1");
    if (!(min_region_fraction >= 0.0))
        throw InvalidInput("min_region_fraction must be non-negative");
}

Image rgb_to_lab(const Image& image) {
    if (image.channels != 3)
        throw InvalidInput("rgb_to_lab requires a 3-channel image");
    Image lab(image.height, image.width, 3);
    const std::size_t n = image.pixel_count();
    for (std::size_t i = 0; i < n; ++i)
        pixel_to_lab(image.pixels[3 * i], image.pixels[3 * i + 1], image.pixels[3 * i + 2],
                     &lab.pixels[3 * i]);
    return lab;
}

SuperpixelMap slic_segment(const Image& image, const SlicParams& params, Rng& /*rng*/) {
    validate(image);
    params.validate();
    const int h = image.height;
    const int w = image.width;
    const std::size_t n = image.pixel_count();
    if (static_cast<std::size_t>(params.superpixels) > n)
        throw InvalidInput("requested superpixel count exceeds pixel count");

    // Clustering features: Lab for colour input, L* alone for grayscale.
    const int dims = image.channels == 3 ? 3 : 1;
    std::vector<double> feat(n * dims);
    if (dims == 3) {
        feat = rgb_to_lab(image).pixels;
    } else {
        double lab[3];
        for (std::size_t i = 0; i < n; ++i) {
            const double g = image.pixels[i];
            pixel_to_lab(g, g, g, lab);
            feat[i] = lab[0];
        }
    }

    const Grid grid = choose_grid(h, w, params.superpixels);
    const int k = grid.rows * grid.cols;
    const double step = std::sqrt(static_cast<double>(n) / params.superpixels);
    const double spatial_weight = params.compactness / step;

    std::vector<std::int32_t> labels(n);
    for (int y = 0; y < h; ++y) {
        const int row = y * grid.rows / h;
        for (int x = 0; x < w; ++x) {
            const int col = x * grid.cols / w;
            labels[static_cast<std::size_t>(y) * w + x] = row * grid.cols + col;
        }
    }

    std::vector<Center> centers(static_cast<std::size_t>(k));
    std::vector<double> sums(static_cast<std::size_t>(k) * (dims + 2));
    std::vector<int> counts(static_cast<std::size_t>(k));
    auto update_centers = [&] {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                const auto l = static_cast<std::size_t>(labels[p]);
                double* s = &sums[l * (dims + 2)];
                s[0] += y;
                s[1] += x;
                for (int d = 0; d < dims; ++d)
                    s[2 + d] += feat[p * dims + d];
                ++counts[l];
            }
        }
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (counts[c] == 0)
                continue;
            const double inv = 1.0 / counts[c];
            const double* s = &sums[c * (dims + 2)];
            centers[c].y = s[0] * inv;
            centers[c].x = s[1] * inv;
            for (int d = 0; d < dims; ++d)
                centers[c].color[d] = s[2 + d] * inv;
        }
    };
    update_centers();

    std::vector<double> best(n);
    for (int iter = 0; iter < params.iterations; ++iter) {
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (counts[c] == 0)
                continue;
            const Center& ctr = centers[c];
            const int y0 = std::max(0, static_cast<int>(std::ceil(ctr.y - step)));
            const int y1 = std::min(h - 1, static_cast<int>(std::floor(ctr.y + step)));
            const int x0 = std::max(0, static_cast<int>(std::ceil(ctr.x - step)));
            const int x1 = std::min(w - 1, static_cast<int>(std::floor(ctr.x + step)));
            for (int y = y0; y <= y1; ++y) {
                const double dy = y - ctr.y;
                for (int x = x0; x <= x1; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * w + x;
                    const double dx = x - ctr.x;
                    double dc = 0.0;
                    for (int d = 0; d < dims; ++d) {
                        const double diff = feat[p * dims + d] - ctr.color[d];
                        dc += diff * diff;
                    }
                    const double dist = std::sqrt(dc) + spatial_weight * std::sqrt(dx * dx + dy * dy);
                    if (dist < best[p]) {
                        best[p] = dist;
                        labels[p] = static_cast<std::int32_t>(c);
                    }
                }
            }
        }
        update_centers();
    }

    return enforce_connectivity(h, w, labels, params.min_region_fraction);
}

SuperpixelMap enforce_connectivity(int height, int width, std::span<const std::int32_t> labels,
                                   double min_region_fraction) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    if (height < 1 || width < 1 || labels.size() != n)
        throw InvalidInput("label grid does not match its dimensions");

    // 4-connected components of the raw labelling.
    std::vector<int> comp(n, -1);
    std::vector<int> comp_size;
    std::vector<std::int32_t> comp_label;
    std::vector<std::size_t> comp_first;
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < n; ++start) {
        if (comp[start] >= 0)
            continue;
        const int id = static_cast<int>(comp_size.size());
        const auto lab = labels[start];
        comp_size.push_back(0);
        comp_label.push_back(lab);
        comp_first.push_back(start);
        comp[start] = id;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++comp_size[static_cast<std::size_t>(id)];
            const int y = static_cast<int>(p / width);
            const int x = static_cast<int>(p % width);
            auto visit = [&](int yy, int xx) {
                if (yy < 0 || yy >= height || xx < 0 || xx >= width)
                    return;
                const std::size_t q = static_cast<std::size_t>(yy) * width + xx;
                if (comp[q] < 0 && labels[q] == lab) {
                    comp[q] = id;
                    stack.push_back(q);
                }
            };
            visit(y - 1, x);
            visit(y + 1, x);
            visit(y, x - 1);
            visit(y, x + 1);
        }
    }
    const std::size_t ncomp = comp_size.size();

    std::vector<std::int32_t> distinct(labels.begin(), labels.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const double threshold =
        min_region_fraction * static_cast<double>(n) / static_cast<double>(distinct.size());

    std::vector<std::vector<int>> adjacency(ncomp);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * width + x;
            const int a = comp[p];
            if (x + 1 < width && comp[p + 1] != a) {
                adjacency[static_cast<std::size_t>(a)].push_back(comp[p + 1]);
                adjacency[static_cast<std::size_t>(comp[p + 1])].push_back(a);
            }
            if (y + 1 < height && comp[p + width] != a) {
                adjacency[static_cast<std::size_t>(a)].push_back(comp[p + width]);
                adjacency[static_cast<std::size_t>(comp[p + width])].push_back(a);
            }
        }
    }
    for (auto& adj : adjacency) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }

    std::vector<int> parent(ncomp);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int c) {
        while (parent[static_cast<std::size_t>(c)] != c) {
            auto& pc = parent[static_cast<std::size_t>(c)];
            pc = parent[static_cast<std::size_t>(pc)];
            c = pc;
        }
        return c;
    };
    std::vector<int> group_size = comp_size;

    std::vector<int> order(ncomp);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return comp_size[static_cast<std::size_t>(a)] < comp_size[static_cast<std::size_t>(b)];
    });
    for (int c : order) {
        if (find(c) != c || group_size[static_cast<std::size_t>(c)] >= threshold)
            continue;
        int target = -1;
        for (int nb : adjacency[static_cast<std::size_t>(c)]) {
            const int r = find(nb);
            if (r == c)
                continue;
            if (target < 0 ||
                group_size[static_cast<std::size_t>(r)] > group_size[static_cast<std::size_t>(target)] ||
                (group_size[static_cast<std::size_t>(r)] == group_size[static_cast<std::size_t>(target)] &&
                 comp_first[static_cast<std::size_t>(r)] < comp_first[static_cast<std::size_t>(target)]))
                target = r;
        }
        if (target < 0)
            continue;
        parent[static_cast<std::size_t>(c)] = target;
        group_size[static_cast<std::size_t>(target)] += group_size[static_cast<std::size_t>(c)];
        auto& dst = adjacency[static_cast<std::size_t>(target)];
        const auto& src = adjacency[static_cast<std::size_t>(c)];
        dst.insert(dst.end(), src.begin(), src.end());
    }

    std::vector<int> roots;
    for (std::size_t c = 0; c < ncomp; ++c)
        if (find(static_cast<int>(c)) == static_cast<int>(c))
            roots.push_back(static_cast<int>(c));
    std::sort(roots.begin(), roots.end(), [&](int a, int b) {
        const auto ua = static_cast<std::size_t>(a);
        const auto ub = static_cast<std::size_t>(b);
        if (comp_label[ua] != comp_label[ub])
            return comp_label[ua] < comp_label[ub];
        return comp_first[ua] < comp_first[ub];
    });
    std::vector<std::int32_t> final_id(ncomp, -1);
    for (std::size_t i = 0; i < roots.size(); ++i)
        final_id[static_cast<std::size_t>(roots[i])] = static_cast<std::int32_t>(i);

    SuperpixelMap out;
    out.height = height;
    out.width = width;
    out.count = static_cast<int>(roots.size());
    out.labels.resize(n);
    for (std::size_t p = 0; p < n; ++p)
        out.labels[p] = final_id[static_cast<std::size_t>(find(comp[p]))];
    return out;
}

}  // namespace lgcoamix
