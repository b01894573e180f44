// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/common/rng.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Point-set utilities. Every reduction here iterates in an order derived
// from the point coordinates, never from the array order, so the set
// networks built on top commute bit-exactly with input permutations.

// Indices sorted lexicographically by (x, y, z).
inline std::vector<int> canonical_order(const Mat& points) {
    std::vector<int> order(static_cast<std::size_t>(points.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        for (int c = 0; c < 3; ++c) {
            if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
        }
        return false; // duplicates: leave relative order to the sort
    });
    return order;
}

// Rank of each point in the canonical order.
inline std::vector<int> canonical_rank(const Mat& points) {
    const auto order = canonical_order(points);
    std::vector<int> rank(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    return rank;
}

namespace detail {

// Orders candidate neighbors by (squared distance, coordinates).
struct NeighborLess {
    const Mat* pts;
    bool operator()(const std::pair<double, int>& a, const std::pair<double, int>& b) const {
        if (a.first != b.first) return a.first < b.first;
        for (int c = 0; c < 3; ++c) {
            const double va = (*pts)(a.second, c), vb = (*pts)(b.second, c);
            if (va != vb) return va < vb;
        }
        return false;
    }
};

} // namespace detail

// k nearest neighbors of each point among the others, canonically ordered.
struct KnnGraph {
    int k = 0;
    std::vector<std::vector<int>> neighbors;
};

inline KnnGraph knn_graph(const Mat& points, int k) {
    const Eigen::Index n = points.rows();
    if (n <= k) throw InsufficientPoints("need more than k=" + std::to_string(k) + " points, have " +
                                         std::to_string(n));
    KnnGraph g;
    g.k = k;
    g.neighbors.resize(static_cast<std::size_t>(n));
    std::vector<std::pair<double, int>> cand;
    for (Eigen::Index i = 0; i < n; ++i) {
        cand.clear();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            cand.emplace_back((points.row(i) - points.row(j)).squaredNorm(), static_cast<int>(j));
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), detail::NeighborLess{&points});
        auto& nb = g.neighbors[static_cast<std::size_t>(i)];
        nb.resize(static_cast<std::size_t>(k));
        for (int t = 0; t < k; ++t) nb[static_cast<std::size_t>(t)] = cand[static_cast<std::size_t>(t)].second;
    }
    return g;
}

// k nearest points (from `points`) to each query row, canonically ordered.
inline std::vector<std::vector<int>> knn_to_queries(const Mat& points, const Mat& queries, int k) {
    const Eigen::Index n = points.rows();
    const int keff = static_cast<int>(std::min<Eigen::Index>(k, n));
    std::vector<std::vector<int>> out(static_cast<std::size_t>(queries.rows()));
    std::vector<std::pair<double, int>> cand;
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        cand.clear();
        for (Eigen::Index j = 0; j < n; ++j)
            cand.emplace_back((queries.row(q) - points.row(j)).squaredNorm(), static_cast<int>(j));
        std::partial_sort(cand.begin(), cand.begin() + keff, cand.end(), detail::NeighborLess{&points});
        auto& nb = out[static_cast<std::size_t>(q)];
        nb.resize(static_cast<std::size_t>(keff));
        for (int t = 0; t < keff; ++t) nb[static_cast<std::size_t>(t)] = cand[static_cast<std::size_t>(t)].second;
    }
    return out;
}

// Farthest point sampling. The start index comes from the grouping seed
// through the canonical order, and distance ties fall back to canonical
// rank, so the selected subsequence of 3D points does not depend on the
// input ordering.
inline std::vector<int> farthest_point_sample(const Mat& points, int m, std::uint64_t seed) {
    const Eigen::Index n = points.rows();
    if (n == 0) throw InsufficientPoints("cannot sample from an empty point set");
    m = static_cast<int>(std::min<Eigen::Index>(m, n));
    const auto order = canonical_order(points);
    const auto rank = canonical_rank(points);
    Rng rng(seed);
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(m));
    int current = order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(n)))];
    chosen.push_back(current);
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int it = 1; it < m; ++it) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = (points.row(j) - points.row(current)).squaredNorm();
            auto& slot = dist[static_cast<std::size_t>(j)];
            if (d < slot) slot = d;
        }
        int best = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (best < 0) {
                best = static_cast<int>(j);
                continue;
            }
            const double dj = dist[static_cast<std::size_t>(j)], db = dist[static_cast<std::size_t>(best)];
            if (dj > db || (dj == db && rank[static_cast<std::size_t>(j)] < rank[static_cast<std::size_t>(best)])) {
                best = static_cast<int>(j);
            }
        }
        current = best;
        chosen.push_back(current);
    }
    return chosen;
}

// Mean of gathered feature rows; the neighbor lists fix the accumulation
// order.
inline Mat gather_mean(const Mat& feats, const std::vector<std::vector<int>>& neighbors) {
    Mat out = Mat::Zero(static_cast<Eigen::Index>(neighbors.size()), feats.cols());
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        for (const int j : neighbors[i]) out.row(static_cast<Eigen::Index>(i)) += feats.row(j);
        out.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(neighbors[i].size());
    }
    return out;
}

inline void gather_mean_backward(const Mat& d_out, const std::vector<std::vector<int>>& neighbors,
                                 Mat& d_feats) {
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const double inv = 1.0 / static_cast<double>(neighbors[i].size());
        for (const int j : neighbors[i])
            d_feats.row(j) += d_out.row(static_cast<Eigen::Index>(i)) * inv;
    }
}

// Inverse-squared-distance interpolation from anchor rows to point rows.
struct Interpolation {
    std::vector<std::vector<int>> idx; // anchor list indices per point
    std::vector<std::vector<double>> w;
};

inline Interpolation build_interpolation(const Mat& anchor_pts, const Mat& points, int k = 3) {
    Interpolation out;
    const auto nbrs = knn_to_queries(anchor_pts, points, k);
    out.idx = nbrs;
    out.w.resize(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
        double total = 0.0;
        out.w[i].resize(nbrs[i].size());
        for (std::size_t t = 0; t < nbrs[i].size(); ++t) {
            const double d2 = (points.row(static_cast<Eigen::Index>(i)) - anchor_pts.row(nbrs[i][t])).squaredNorm();
            out.w[i][t] = 1.0 / (d2 + 1e-12);
            total += out.w[i][t];
        }
        for (auto& v : out.w[i]) v /= total;
    }
    return out;
}

inline Mat interpolate(const Mat& anchor_feats, const Interpolation& interp) {
    Mat out = Mat::Zero(static_cast<Eigen::Index>(interp.idx.size()), anchor_feats.cols());
    for (std::size_t i = 0; i < interp.idx.size(); ++i)
        for (std::size_t t = 0; t < interp.idx[i].size(); ++t)
            out.row(static_cast<Eigen::Index>(i)) += interp.w[i][t] * anchor_feats.row(interp.idx[i][t]);
    return out;
}

inline void interpolate_backward(const Mat& d_out, const Interpolation& interp, Mat& d_anchor) {
    for (std::size_t i = 0; i < interp.idx.size(); ++i)
        for (std::size_t t = 0; t < interp.idx[i].size(); ++t)
            d_anchor.row(interp.idx[i][t]) += interp.w[i][t] * d_out.row(static_cast<Eigen::Index>(i));
}

// Sinusoidal positional encoding of xyz with `freqs` octaves:
// [p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{F-1} pi p), cos(...)].
inline Mat positional_encoding(const Mat& points, int freqs = 6) {
    const Eigen::Index n = points.rows();
    Mat out(n, 3 + 6 * freqs);
    out.leftCols<3>() = points;
    for (int f = 0; f < freqs; ++f) {
        const double omega = std::pow(2.0, f) * 3.14159265358979323846;
        for (int c = 0; c < 3; ++c) {
            out.col(3 + 6 * f + 2 * c) = (points.col(c) * omega).array().sin();
            out.col(3 + 6 * f + 2 * c + 1) = (points.col(c) * omega).array().cos();
        }
    }
    return out;
}

inline int positional_encoding_dim(int freqs = 6) { return 3 + 6 * freqs; }

} // namespace hugdiff
