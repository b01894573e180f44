// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "hugdiff/common/rng.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff::nn {

using hugdiff::Mat;
using hugdiff::Rng;
using hugdiff::Vec;

// A named view of one parameter matrix and its gradient accumulator.
struct TensorRef {
    std::string name;
    Mat* value;
    Mat* grad;
};

inline std::size_t param_count(const std::vector<TensorRef>& refs) {
    std::size_t n = 0;
    for (const auto& r : refs) n += static_cast<std::size_t>(r.value->size());
    return n;
}

inline void zero_grads(std::vector<TensorRef>& refs) {
    for (auto& r : refs) r.grad->setZero();
}

inline double silu_scalar(double x) { return x / (1.0 + std::exp(-x)); }

inline Mat silu(const Mat& x) {
    return x.unaryExpr([](double v) { return silu_scalar(v); });
}

// d silu / dx evaluated at the cached pre-activation.
inline Mat silu_backward(const Mat& x, const Mat& dy) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        const double s = 1.0 / (1.0 + std::exp(-v));
        out.data()[i] = dy.data()[i] * s * (1.0 + v * (1.0 - s));
    }
    return out;
}

// Fully connected layer on row-major point features (rows are points).
struct Linear {
    Mat w;  // out x in
    Mat b;  // 1 x out
    Mat gw;
    Mat gb;
    Mat cache_x;

    void init(Rng& rng, int in, int out) {
        const double bound = std::sqrt(6.0 / (in + out));
        w.resize(out, in);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
        b = Mat::Zero(1, out);
        gw = Mat::Zero(out, in);
        gb = Mat::Zero(1, out);
    }

    Mat forward(const Mat& x) {
        cache_x = x;
        return apply(x);
    }

    // Row-by-row matrix-vector products: each output row is a fixed
    // function of its input row alone, so results commute bit-exactly with
    // row permutations (a blocked GEMM would not).
    Mat apply(const Mat& x) const {
        Mat y(x.rows(), w.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            y.row(i) = (w * x.row(i).transpose()).transpose() + b.row(0);
        }
        return y;
    }

    Mat backward(const Mat& dy) {
        gw.noalias() += dy.transpose() * cache_x;
        gb.row(0) += dy.colwise().sum();
        return dy * w;
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        out.push_back({prefix + ".w", &w, &gw});
        out.push_back({prefix + ".b", &b, &gb});
    }
};

// Lookup table with trainable rows.
struct Embedding {
    Mat w; // num x dim
    Mat gw;
    std::vector<int> cache_idx;

    void init(Rng& rng, int num, int dim) {
        w.resize(num, dim);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal() * 0.1;
        gw = Mat::Zero(num, dim);
    }

    Mat forward(const std::vector<int>& idx) {
        cache_idx = idx;
        Mat out(static_cast<Eigen::Index>(idx.size()), w.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = w.row(idx[i]);
        return out;
    }

    void backward(const Mat& dy) {
        for (std::size_t i = 0; i < cache_idx.size(); ++i)
            gw.row(cache_idx[i]) += dy.row(static_cast<Eigen::Index>(i));
    }

    void collect(const std::string& prefix, std::vector<TensorRef>& out) {
        out.push_back({prefix + ".w", &w, &gw});
    }
};

// Sinusoidal embedding of a scalar timestep.
inline Mat time_embedding(double t, int dim) {
    Mat emb(1, dim);
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        emb(0, 2 * i) = std::sin(t * freq);
        emb(0, 2 * i + 1) = std::cos(t * freq);
    }
    return emb;
}

// Adam over an ordered list of tensors; state is positional, so the list
// must be stable across steps.
struct Adam {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int t = 0;
    std::vector<Mat> m, v;

    explicit Adam(double lr = 2e-4) : lr(lr) {}

    void step(std::vector<TensorRef>& refs) {
        if (m.empty()) {
            for (auto& r : refs) {
                m.emplace_back(Mat::Zero(r.value->rows(), r.value->cols()));
                v.emplace_back(Mat::Zero(r.value->rows(), r.value->cols()));
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t k = 0; k < refs.size(); ++k) {
            Mat& g = *refs[k].grad;
            m[k] = beta1 * m[k] + (1.0 - beta1) * g;
            v[k] = beta2 * v[k] + (1.0 - beta2) * g.cwiseProduct(g);
            const Mat mhat = m[k] / bc1;
            const Mat vhat = v[k] / bc2;
            *refs[k].value -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
        }
    }
};

} // namespace hugdiff::nn
