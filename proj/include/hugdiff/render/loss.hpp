// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/render/image.hpp"

namespace hugdiff {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSsimC1 = kSsimK1 * kSsimK1; // dynamic range L = 1
inline constexpr double kSsimC2 = kSsimK2 * kSsimK2;
inline constexpr double kPhotometricLambda = 0.2;

namespace detail {

inline std::array<double, kSsimWindow> ssim_kernel() {
    std::array<double, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double x = i - (kSsimWindow - 1) / 2.0;
        k[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable zero-padded 'same' convolution of one channel plane.
inline std::vector<double> conv_same(const std::vector<double>& in, int h, int w) {
    static const auto kernel = ssim_kernel();
    constexpr int r = kSsimWindow / 2;
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) {
                const int xx = x + t;
                if (xx < 0 || xx >= w) continue;
                acc += kernel[static_cast<std::size_t>(t + r)] * in[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) {
                const int yy = y + t;
                if (yy < 0 || yy >= h) continue;
                acc += kernel[static_cast<std::size_t>(t + r)] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

} // namespace detail

// Mean SSIM over all pixels and channels, zero-padded 'same' windows (the
// convention splatting trainers use for the loss term). When `d_a` is
// non-null it receives d(mean ssim)/d(a).
inline double ssim_same(const Image& a, const Image& b, Image* d_a = nullptr) {
    if (!a.same_shape(b)) throw ShapeError("ssim operands differ in shape");
    const int h = a.height, w = a.width, nc = a.channels;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double count = static_cast<double>(plane * static_cast<std::size_t>(nc));
    double total = 0.0;
    if (d_a) *d_a = Image(h, w, nc);
    std::vector<double> xa(plane), xb(plane), xaa(plane), xbb(plane), xab(plane);
    for (int c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double va = a.data[i * nc + c];
            const double vb = b.data[i * nc + c];
            xa[i] = va;
            xb[i] = vb;
            xaa[i] = va * va;
            xbb[i] = vb * vb;
            xab[i] = va * vb;
        }
        const auto mu_a = detail::conv_same(xa, h, w);
        const auto mu_b = detail::conv_same(xb, h, w);
        const auto m_aa = detail::conv_same(xaa, h, w);
        const auto m_bb = detail::conv_same(xbb, h, w);
        const auto m_ab = detail::conv_same(xab, h, w);
        std::vector<double> d_mu(plane, 0.0), d_vaa(plane, 0.0), d_vab(plane, 0.0);
        for (std::size_t i = 0; i < plane; ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = m_aa[i] - ma * ma;
            const double vb = m_bb[i] - mb * mb;
            const double vab = m_ab[i] - ma * mb;
            const double a1 = 2.0 * ma * mb + kSsimC1;
            const double a2 = 2.0 * vab + kSsimC2;
            const double b1 = ma * ma + mb * mb + kSsimC1;
            const double b2 = va + vb + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (d_a) {
                // partials with respect to (mu_a, m_aa, m_ab); m_bb and mu_b
                // are constants of b
                const double inv = 1.0 / (b1 * b2);
                d_mu[i] = (2.0 * mb * a2 + a1 * (-2.0 * mb)) * inv -
                          s * (2.0 * ma * b2 + b1 * (-2.0 * ma)) * inv;
                d_vaa[i] = -s * b1 * inv;   // d s / d m_aa (via va)
                d_vab[i] = 2.0 * a1 * inv;  // d s / d m_ab (via vab)
            }
        }
        if (d_a) {
            const auto g_mu = detail::conv_same(d_mu, h, w);
            const auto g_vaa = detail::conv_same(d_vaa, h, w);
            const auto g_vab = detail::conv_same(d_vab, h, w);
            for (std::size_t i = 0; i < plane; ++i) {
                d_a->data[i * nc + c] =
                    (g_mu[i] + 2.0 * xa[i] * g_vaa[i] + xb[i] * g_vab[i]) / count;
            }
        }
    }
    return total / count;
}

struct PhotometricLoss {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    Image d_rendered; // dL/d(rendered rgb)
};

// (1 - lambda) * mean|r - t| + lambda * (1 - SSIM(r, t)).
inline PhotometricLoss photometric_loss(const Image& rendered, const Image& target,
                                        double lambda = kPhotometricLambda,
                                        bool with_gradient = true) {
    if (!rendered.same_shape(target)) throw ShapeError("photometric operands differ in shape");
    PhotometricLoss out;
    const double count = static_cast<double>(rendered.size());
    double l1 = 0.0;
    if (with_gradient) out.d_rendered = Image(rendered.height, rendered.width, rendered.channels);
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double diff = rendered.data[i] - target.data[i];
        l1 += std::abs(diff);
        if (with_gradient) {
            out.d_rendered.data[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) *
                                     (1.0 - lambda) / count;
        }
    }
    out.l1 = l1 / count;
    Image d_ssim;
    out.ssim = ssim_same(rendered, target, with_gradient ? &d_ssim : nullptr);
    if (with_gradient) {
        for (std::size_t i = 0; i < rendered.size(); ++i) {
            out.d_rendered.data[i] += -lambda * d_ssim.data[i];
        }
    }
    out.value = (1.0 - lambda) * out.l1 + lambda * (1.0 - out.ssim);
    return out;
}

inline double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("mse operands differ in shape");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

} // namespace hugdiff
