// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "hugdiff/nets/nn.hpp"
#include "hugdiff/render/image.hpp"

namespace hugdiff {

// 3x3 convolution, zero padding 1, arbitrary stride, on feature maps stored
// as (H*W) x C row-major matrices.
struct Conv2d {
    int in_ch = 0, out_ch = 0, stride = 1;
    nn::Linear lin; // weight (out_ch x in_ch*9) applied to im2col rows

    void init(Rng& rng, int in, int out, int s) {
        in_ch = in;
        out_ch = out;
        stride = s;
        lin.init(rng, in * 9, out);
    }

    static int out_size(int in, int stride) { return (in + stride - 1) / stride; }

    Mat im2col(const Mat& x, int h, int w) const {
        const int ho = out_size(h, stride), wo = out_size(w, stride);
        Mat cols(static_cast<Eigen::Index>(ho) * wo, in_ch * 9);
        cols.setZero();
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
                int slot = 0;
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx, ++slot) {
                        const int iy = oy * stride + ky;
                        const int ix = ox * stride + kx;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        cols.block(row, static_cast<Eigen::Index>(slot) * in_ch, 1, in_ch) =
                            x.row(static_cast<Eigen::Index>(iy) * w + ix);
                    }
            }
        return cols;
    }

    Mat col2im(const Mat& d_cols, int h, int w) const {
        const int ho = out_size(h, stride), wo = out_size(w, stride);
        Mat dx = Mat::Zero(static_cast<Eigen::Index>(h) * w, in_ch);
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const Eigen::Index row = static_cast<Eigen::Index>(oy) * wo + ox;
                int slot = 0;
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx, ++slot) {
                        const int iy = oy * stride + ky;
                        const int ix = ox * stride + kx;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                        dx.row(static_cast<Eigen::Index>(iy) * w + ix) +=
                            d_cols.block(row, static_cast<Eigen::Index>(slot) * in_ch, 1, in_ch);
                    }
            }
        return dx;
    }
};

// Multi-scale trainable feature extractor: three 3x3 convolutions at
// strides {1, 2, 2}, producing maps aligned to the input at strides
// {1, 2, 4}. Activations are held by the caller so two images can be
// encoded side by side.
struct EncoderActivations {
    int h = 0, w = 0;
    std::array<Mat, 3> cols;
    std::array<Mat, 3> pre;
    std::array<Mat, 3> maps; // post-activation feature maps
    std::array<int, 3> map_h{}, map_w{};
};

class ImageEncoder {
public:
    static constexpr std::array<int, 3> kChannels = {8, 8, 16};
    static constexpr std::array<int, 3> kStrides = {1, 2, 4}; // cumulative

    explicit ImageEncoder(Rng& rng) {
        conv_[0].init(rng, 3, kChannels[0], 1);
        conv_[1].init(rng, kChannels[0], kChannels[1], 2);
        conv_[2].init(rng, kChannels[1], kChannels[2], 2);
    }

    static int feature_dim() { return kChannels[0] + kChannels[1] + kChannels[2]; }

    EncoderActivations encode(const Image& image) {
        if (image.channels != 3) throw ShapeError("image encoder expects rgb input");
        EncoderActivations act;
        act.h = image.height;
        act.w = image.width;
        Mat x(static_cast<Eigen::Index>(image.height) * image.width, 3);
        for (int y = 0; y < image.height; ++y)
            for (int xx = 0; xx < image.width; ++xx)
                for (int c = 0; c < 3; ++c)
                    x(static_cast<Eigen::Index>(y) * image.width + xx, c) = image.at(y, xx, c);
        int h = image.height, w = image.width;
        for (int l = 0; l < 3; ++l) {
            act.cols[static_cast<std::size_t>(l)] = conv_[static_cast<std::size_t>(l)].im2col(x, h, w);
            act.pre[static_cast<std::size_t>(l)] =
                conv_[static_cast<std::size_t>(l)].lin.apply(act.cols[static_cast<std::size_t>(l)]);
            act.maps[static_cast<std::size_t>(l)] = nn::silu(act.pre[static_cast<std::size_t>(l)]);
            h = Conv2d::out_size(h, conv_[static_cast<std::size_t>(l)].stride);
            w = Conv2d::out_size(w, conv_[static_cast<std::size_t>(l)].stride);
            act.map_h[static_cast<std::size_t>(l)] = h;
            act.map_w[static_cast<std::size_t>(l)] = w;
            x = act.maps[static_cast<std::size_t>(l)];
        }
        return act;
    }

    // Accumulates parameter gradients from upstream gradients on the three
    // feature maps.
    void backward(const EncoderActivations& act, const std::array<Mat, 3>& d_maps) {
        Mat carry; // gradient flowing into the input of the current layer
        for (int l = 2; l >= 0; --l) {
            Mat d_map = d_maps[static_cast<std::size_t>(l)];
            if (carry.size() > 0) d_map += carry;
            const Mat d_pre = nn::silu_backward(act.pre[static_cast<std::size_t>(l)], d_map);
            auto& conv = conv_[static_cast<std::size_t>(l)];
            conv.lin.gw.noalias() += d_pre.transpose() * act.cols[static_cast<std::size_t>(l)];
            conv.lin.gb.row(0) += d_pre.colwise().sum();
            if (l > 0) {
                const Mat d_cols = d_pre * conv.lin.w;
                const int h = act.map_h[static_cast<std::size_t>(l - 1)];
                const int w = act.map_w[static_cast<std::size_t>(l - 1)];
                carry = conv.col2im(d_cols, h, w);
            }
        }
    }

    void collect(const std::string& prefix, std::vector<nn::TensorRef>& out) {
        conv_[0].lin.collect(prefix + ".conv1", out);
        conv_[1].lin.collect(prefix + ".conv2", out);
        conv_[2].lin.collect(prefix + ".conv3", out);
    }

private:
    std::array<Conv2d, 3> conv_;
};

} // namespace hugdiff
