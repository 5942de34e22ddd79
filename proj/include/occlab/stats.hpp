#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "occlab/common.hpp"

namespace occlab {

inline double mean(std::span<const double> v) {
    if (v.empty()) throw NumericError("mean of empty sample");
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
    if (v.size() < 2) throw NumericError("variance needs at least 2 observations");
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double sd(std::span<const double> v) { return std::sqrt(variance(v)); }

inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw NumericError("quantile of empty sample");
    std::sort(v.begin(), v.end());
    if (q <= 0) return v.front();
    if (q >= 1) return v.back();
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] * (1 - frac) + v[lo + 1] * frac;
}

// ----------------------------------------------------------------------------
// Weighted median over distinct values.
//
// Weights are aggregated per distinct value first. The median is the smallest
// value whose cumulative weight reaches half the total; when the cumulative
// weight hits exactly half at a value boundary, the median is the midpoint of
// that value and the next distinct value.
// ----------------------------------------------------------------------------
inline double weighted_median(std::span<const double> values, std::span<const double> weights) {
    if (values.empty()) throw NumericError("weighted_median of empty sample");
    if (values.size() != weights.size())
        throw NumericError("weighted_median: values/weights length mismatch");
    std::map<double, double> agg;
    double total = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(weights[i] > 0)) throw NumericError("weighted_median: weights must be positive");
        agg[values[i]] += weights[i];
        total += weights[i];
    }
    const double half = total / 2.0;
    double cum = 0;
    for (auto it = agg.begin(); it != agg.end(); ++it) {
        cum += it->second;
        if (cum > half) return it->first;
        if (cum == half) {
            auto next = std::next(it);
            if (next == agg.end()) return it->first;
            return (it->first + next->first) / 2.0;
        }
    }
    return agg.rbegin()->first;
}

inline double median(std::span<const double> values) {
    std::vector<double> w(values.size(), 1.0);
    return weighted_median(values, w);
}

// ----------------------------------------------------------------------------
// Spearman rank correlation via midranks.
// ----------------------------------------------------------------------------
inline std::vector<double> midranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw NumericError("pearson: bad input length");
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) throw NumericError("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw NumericError("spearman: length mismatch");
    if (x.size() < 2) throw NumericError("spearman: need at least 2 observations");
    const auto rx = midranks(x);
    const auto ry = midranks(y);
    // all-tied input has zero rank variance; correlation is undefined there
    return pearson(rx, ry);
}

// ----------------------------------------------------------------------------
// Gaussian kernel density on an evenly spaced grid.
// ----------------------------------------------------------------------------
struct KdeResult {
    std::vector<double> grid;
    std::vector<double> density;
    double bandwidth = 0;
    bool degenerate = false;  // zero-spread input
};

inline double silverman_bandwidth(std::span<const double> v) {
    if (v.size() < 2) throw NumericError("bandwidth needs at least 2 observations");
    const double s = sd(v);
    std::vector<double> tmp(v.begin(), v.end());
    const double iqr = quantile(tmp, 0.75) - quantile(tmp, 0.25);
    double spread = s;
    if (iqr > 0) spread = std::min(s, iqr / 1.34);
    return 0.9 * spread * std::pow(static_cast<double>(v.size()), -0.2);
}

inline KdeResult gaussian_kde(std::span<const double> v, double bandwidth = 0,
                              std::size_t grid_size = 512) {
    if (v.size() < 2) throw NumericError("kde needs at least 2 observations");
    if (grid_size < 2) throw ConfigError("kde grid must have at least 2 points");
    KdeResult out;
    double h = bandwidth;
    if (h <= 0) h = silverman_bandwidth(v);
    if (h <= 0) {
        // zero-spread sample: report a spike at the common value
        out.degenerate = true;
        out.bandwidth = 0;
        out.grid = {v[0]};
        out.density = {std::numeric_limits<double>::infinity()};
        return out;
    }
    out.bandwidth = h;
    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn_it - 3 * h;
    const double hi = *mx_it + 3 * h;
    const double step = (hi - lo) / static_cast<double>(grid_size - 1);
    out.grid.resize(grid_size);
    out.density.resize(grid_size);
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double norm = 1.0 / (static_cast<double>(v.size()) * h * std::sqrt(two_pi));
    for (std::size_t g = 0; g < grid_size; ++g) {
        const double x = lo + step * static_cast<double>(g);
        double acc = 0;
        for (double xi : v) {
            const double z = (x - xi) / h;
            acc += std::exp(-0.5 * z * z);
        }
        out.grid[g] = x;
        out.density[g] = acc * norm;
    }
    return out;
}

inline double trapezoid_integral(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw NumericError("trapezoid: bad input");
    double s = 0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

}  // namespace occlab
