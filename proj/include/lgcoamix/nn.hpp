#pragma once

#include "lgcoamix/attention.hpp"
#include "lgcoamix/core_types.hpp"
#include "lgcoamix/rng.hpp"

#include <vector>

namespace lgcoamix {

/// Batch of feature maps, NHWC, stored as (N*H*W) x C.
struct Tensor {
    int n = 0;
    int height = 0;
    int width = 0;
    Matrix values;

    [[nodiscard]] int channels() const { return static_cast<int>(values.cols()); }
    [[nodiscard]] Eigen::Index rows_per_sample() const {
        return static_cast<Eigen::Index>(height) * width;
    }
    static Tensor zeros(int n, int h, int w, int c);
};

Tensor stack_images(const std::vector<const Image*>& images);

/// k x k convolution, stride s, zero padding p. Weight is (k*k*Cin) x Cout
/// with rows ordered (ky, kx, cin).
struct Conv2d {
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    Matrix weight;
    RowVector bias;

    [[nodiscard]] int in_channels() const { return static_cast<int>(weight.rows()) / (kernel * kernel); }
    [[nodiscard]] int out_channels() const { return static_cast<int>(weight.cols()); }
    [[nodiscard]] int out_size(int in) const { return (in + 2 * padding - kernel) / stride + 1; }

    static Conv2d initialize(int in, int out, int kernel, int stride, int padding, Rng& rng);
};

struct ConvCache {
    int in_height = 0;
    int in_width = 0;
    Matrix columns;
};

Tensor conv_forward(const Conv2d& conv, const Tensor& in, ConvCache* cache = nullptr);

/// Accumulates weight/bias gradients; returns dL/dinput unless `need_input_grad` is false.
Tensor conv_backward(const Conv2d& conv, const ConvCache& cache, const Tensor& d_out,
                     Matrix& d_weight, RowVector& d_bias, bool need_input_grad = true);

/// Transposed convolution with a 2x2 kernel and stride 2 (no overlap).
/// Weight is Cin x (4*Cout); block o = 2*dy + dx feeds output pixel (2y+dy, 2x+dx).
struct Upsample2x {
    Matrix weight;
    RowVector bias;

    [[nodiscard]] int in_channels() const { return static_cast<int>(weight.rows()); }
    [[nodiscard]] int out_channels() const { return static_cast<int>(weight.cols()) / 4; }

    static Upsample2x initialize(int in, int out, double gain, Rng& rng);
};

Tensor upsample_forward(const Upsample2x& up, const Tensor& in);
Tensor upsample_backward(const Upsample2x& up, const Tensor& in, const Tensor& d_out,
                         Matrix& d_weight, RowVector& d_bias);

/// superpixel_pool(upsample_forward(up, in)) for one sample without building
/// the upsampled map. `in` holds that sample's (H/2*W/2) x Cin rows.
struct FusedPoolCache {
    Matrix region_means;  // L x 4Cin, parent features averaged per (superpixel, offset)
};

Matrix upsample_pool_forward(const Upsample2x& up, const Matrix& in, const SuperpixelMap& smap,
                             FusedPoolCache* cache = nullptr);

/// Accumulates parameter gradients; returns dL/d(in), (H/2*W/2) x Cin.
Matrix upsample_pool_backward(const Upsample2x& up, const FusedPoolCache& cache,
                              const SuperpixelMap& smap, const Matrix& d_pooled,
                              Matrix& d_weight, RowVector& d_bias);

void relu_inplace(Matrix& m);
/// d *= (activation > 0)
void relu_backward_inplace(Matrix& d, const Matrix& activation);

}  // namespace lgcoamix
