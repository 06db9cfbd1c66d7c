#include "lgcoamix/nn.hpp"

#include <algorithm>
#include <cmath>

namespace lgcoamix {

Tensor Tensor::zeros(int n, int h, int w, int c) {
    return {n, h, w, Matrix::Zero(static_cast<Eigen::Index>(n) * h * w, c)};
}

Tensor stack_images(const std::vector<const Image*>& images) {
    if (images.empty())
        throw InvalidInput("cannot stack an empty batch");
    const Image& first = *images.front();
    Tensor t = Tensor::zeros(static_cast<int>(images.size()), first.height, first.width, first.channels);
    double* dst = t.values.data();
    for (const Image* img : images) {
        if (img->height != first.height || img->width != first.width || img->channels != first.channels)
            throw InvalidInput("batch images must share one shape");
        dst = std::copy(img->pixels.begin(), img->pixels.end(), dst);
    }
    return t;
}

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = rng.normal(0.0, sd);
    return m;
}

}  // namespace

Conv2d Conv2d::initialize(int in, int out, int kernel, int stride, int padding, Rng& rng) {
    Conv2d c;
    c.kernel = kernel;
    c.stride = stride;
    c.padding = padding;
    const int fan_in = kernel * kernel * in;
    c.weight = gaussian(fan_in, out, std::sqrt(2.0 / fan_in), rng);  // He init for ReLU
    c.bias = RowVector::Zero(out);
    return c;
}

Tensor conv_forward(const Conv2d& conv, const Tensor& in, ConvCache* cache) {
    const int cin = in.channels();
    if (cin != conv.in_channels())
        throw InvalidInput("convolution input channels do not match the weight");
    const int k = conv.kernel;
    const int ho = conv.out_size(in.height);
    const int wo = conv.out_size(in.width);
    const Eigen::Index kkc = static_cast<Eigen::Index>(k) * k * cin;
    Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(in.n) * ho * wo, kkc);
    const double* src = in.values.data();
    for (int b = 0; b < in.n; ++b)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double* row = cols.data() + ((static_cast<Eigen::Index>(b) * ho + oy) * wo + ox) * kkc;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * conv.stride - conv.padding + ky;
                    if (iy < 0 || iy >= in.height)
                        continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * conv.stride - conv.padding + kx;
                        if (ix < 0 || ix >= in.width)
                            continue;
                        const auto p = (static_cast<Eigen::Index>(b) * in.height + iy) * in.width + ix;
                        std::copy_n(src + p * cin, cin, row + (ky * k + kx) * cin);
                    }
                }
            }
    Tensor out{in.n, ho, wo, Matrix()};
    out.values.noalias() = cols * conv.weight;
    out.values.rowwise() += conv.bias;
    if (cache) {
        cache->in_height = in.height;
        cache->in_width = in.width;
        cache->columns = std::move(cols);
    }
    return out;
}

Tensor conv_backward(const Conv2d& conv, const ConvCache& cache, const Tensor& d_out,
                     Matrix& d_weight, RowVector& d_bias, bool need_input_grad) {
    d_weight.noalias() += cache.columns.transpose() * d_out.values;
    d_bias += d_out.values.colwise().sum();
    if (!need_input_grad)
        return {};
    const int cin = conv.in_channels();
    const int k = conv.kernel;
    const Eigen::Index kkc = static_cast<Eigen::Index>(k) * k * cin;
    Matrix d_cols;
    d_cols.noalias() = d_out.values * conv.weight.transpose();
    Tensor d_in = Tensor::zeros(d_out.n, cache.in_height, cache.in_width, cin);
    double* dst = d_in.values.data();
    for (int b = 0; b < d_out.n; ++b)
        for (int oy = 0; oy < d_out.height; ++oy)
            for (int ox = 0; ox < d_out.width; ++ox) {
                const double* row =
                    d_cols.data() + ((static_cast<Eigen::Index>(b) * d_out.height + oy) * d_out.width + ox) * kkc;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * conv.stride - conv.padding + ky;
                    if (iy < 0 || iy >= cache.in_height)
                        continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * conv.stride - conv.padding + kx;
                        if (ix < 0 || ix >= cache.in_width)
                            continue;
                        double* p = dst + ((static_cast<Eigen::Index>(b) * cache.in_height + iy) * cache.in_width + ix) * cin;
                        const double* s = row + (ky * k + kx) * cin;
                        for (int c = 0; c < cin; ++c)
                            p[c] += s[c];
                    }
                }
            }
    return d_in;
}

Upsample2x Upsample2x::initialize(int in, int out, double gain, Rng& rng) {
    return {gaussian(in, 4 * out, gain / std::sqrt(static_cast<double>(in)), rng), RowVector::Zero(out)};
}

Tensor upsample_forward(const Upsample2x& up, const Tensor& in) {
    if (in.channels() != up.in_channels())
        throw InvalidInput("upsampling input channels do not match the weight");
    const int cout = up.out_channels();
    Matrix y;
    y.noalias() = in.values * up.weight;
    Tensor out = Tensor::zeros(in.n, 2 * in.height, 2 * in.width, cout);
    for (int b = 0; b < in.n; ++b)
        for (int yy = 0; yy < in.height; ++yy)
            for (int xx = 0; xx < in.width; ++xx) {
                const auto r = (static_cast<Eigen::Index>(b) * in.height + yy) * in.width + xx;
                for (int o = 0; o < 4; ++o) {
                    const auto q = (static_cast<Eigen::Index>(b) * out.height + 2 * yy + o / 2) * out.width +
                                   2 * xx + o % 2;
                    out.values.row(q) = y.row(r).segment(o * cout, cout) + up.bias;
                }
            }
    return out;
}

Tensor upsample_backward(const Upsample2x& up, const Tensor& in, const Tensor& d_out,
                         Matrix& d_weight, RowVector& d_bias) {
    const int cout = up.out_channels();
    Matrix g(in.values.rows(), 4 * cout);
    for (int b = 0; b < in.n; ++b)
        for (int yy = 0; yy < in.height; ++yy)
            for (int xx = 0; xx < in.width; ++xx) {
                const auto r = (static_cast<Eigen::Index>(b) * in.height + yy) * in.width + xx;
                for (int o = 0; o < 4; ++o) {
                    const auto q = (static_cast<Eigen::Index>(b) * d_out.height + 2 * yy + o / 2) * d_out.width +
                                   2 * xx + o % 2;
                    g.row(r).segment(o * cout, cout) = d_out.values.row(q);
                }
            }
    d_weight.noalias() += in.values.transpose() * g;
    d_bias += d_out.values.colwise().sum();
    Tensor d_in{in.n, in.height, in.width, Matrix()};
    d_in.values.noalias() = g * up.weight.transpose();
    return d_in;
}

namespace {

// Weight blocks stacked vertically: rows o*Cin..(o+1)*Cin hold block o.
Matrix stacked_weight(const Upsample2x& up) {
    const int cin = up.in_channels(), cout = up.out_channels();
    Matrix w(4 * cin, cout);
    for (int o = 0; o < 4; ++o)
        w.middleRows(o * cin, cin) = up.weight.middleCols(o * cout, cout);
    return w;
}

}  // namespace

Matrix upsample_pool_forward(const Upsample2x& up, const Matrix& in, const SuperpixelMap& smap,
                             FusedPoolCache* cache) {
    const int cin = up.in_channels();
    const int h = smap.height, w = smap.width;
    if (h % 2 || w % 2 || in.rows() != static_cast<Eigen::Index>(h / 2) * (w / 2) || in.cols() != cin)
        throw InvalidInput("upsampled size must match the superpixel map");
    Matrix means = Matrix::Zero(smap.count, 4 * cin);
    std::vector<int> counts(static_cast<std::size_t>(smap.count), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto label = smap.at(y, x);
            const auto r = static_cast<Eigen::Index>(y / 2) * (w / 2) + x / 2;
            const int o = (y % 2) * 2 + x % 2;
            means.row(label).segment(o * cin, cin) += in.row(r);
            ++counts[static_cast<std::size_t>(label)];
        }
    for (int i = 0; i < smap.count; ++i) {
        if (counts[static_cast<std::size_t>(i)] == 0)
            throw InvalidInput("superpixel map contains an empty superpixel");
        means.row(i) /= counts[static_cast<std::size_t>(i)];
    }
    Matrix pooled;
    pooled.noalias() = means * stacked_weight(up);
    pooled.rowwise() += up.bias;
    if (cache)
        cache->region_means = std::move(means);
    return pooled;
}

Matrix upsample_pool_backward(const Upsample2x& up, const FusedPoolCache& cache,
                              const SuperpixelMap& smap, const Matrix& d_pooled,
                              Matrix& d_weight, RowVector& d_bias) {
    const int cin = up.in_channels(), cout = up.out_channels();
    const int h = smap.height, w = smap.width;
    const Matrix d_stacked = cache.region_means.transpose() * d_pooled;
    for (int o = 0; o < 4; ++o)
        d_weight.middleCols(o * cout, cout) += d_stacked.middleRows(o * cin, cin);
    d_bias += d_pooled.colwise().sum();

    Matrix d_means = d_pooled * stacked_weight(up).transpose();
    const std::vector<int> sizes = smap.region_sizes();
    for (int i = 0; i < smap.count; ++i)
        d_means.row(i) /= sizes[static_cast<std::size_t>(i)];
    Matrix d_in = Matrix::Zero(static_cast<Eigen::Index>(h / 2) * (w / 2), cin);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto r = static_cast<Eigen::Index>(y / 2) * (w / 2) + x / 2;
            const int o = (y % 2) * 2 + x % 2;
            d_in.row(r) += d_means.row(smap.at(y, x)).segment(o * cin, cin);
        }
    return d_in;
}

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

void relu_backward_inplace(Matrix& d, const Matrix& activation) {
    d = (activation.array() > 0.0).select(d, 0.0);
}

}  // namespace lgcoamix
