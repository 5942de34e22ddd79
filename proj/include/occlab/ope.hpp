#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "occlab/common.hpp"

namespace occlab {

// ============================================================================
// OPTIMAL-PREDICTION-ERROR MODEL
//
// Generative model: an occupation's score is the best prediction of earnings
// from the information set used to build it.
//   O = delta0 + delta1*X + eta        (occupation-level component)
//   y - O = gamma0 + gamma1*X + nu     (within-occupation component)
//   Z = lambda0 + lambda1*X + psi      (correlated demographic signal)
// so y = alpha + beta*X + eps with alpha = delta0+gamma0, beta = delta1+gamma1.
//
// Three proxies for y as the dependent variable:
//   OPE(1): E(y | occ)                -> attenuated slope, phi weights
//   OPE(2): E(y | occ, X)             -> unbiased
//   OPE(3): E(y | occ, Z)             -> partial repair, theta weights
// Normal shocks make the precision-weighted posterior means exact, so the
// closed forms below are the exact probability limits.
// ============================================================================

struct OpeParams {
    double mu_x = 0;
    double sigma_x = 1;
    double delta0 = 0, delta1 = 0;
    double gamma0 = 0, gamma1 = 0;
    double sigma_eta = 0;
    double sigma_nu = 0;
    double lambda0 = 0, lambda1 = 0;
    double sigma_psi = 0;
    bool enforce_sign = true;  // delta1 and gamma1 share a sign in the model

    double alpha() const { return delta0 + gamma0; }
    double beta() const { return delta1 + gamma1; }

    void validate() const {
        if (!(sigma_x > 0)) throw ConfigError("ope params: sigma_x must be > 0");
        if (sigma_eta < 0 || sigma_nu < 0 || sigma_psi < 0)
            throw ConfigError("ope params: sigma terms must be >= 0");
        if (enforce_sign && delta1 * gamma1 < 0)
            throw ConfigError(
                "ope params: delta1 and gamma1 must share a sign (set enforce_sign=false to "
                "override)");
    }
};

struct PhiWeights {
    double phi0 = 0;
    double phi1 = 0;
    bool limit = false;  // degenerate sigma handled as a limit
};

// phi1 = (d1^2/s_eta^2) / (1/s_x^2 + d1^2/s_eta^2): the precision share of the
// occupation signal relative to the X prior
inline PhiWeights phi_weights(const OpeParams& p) {
    p.validate();
    PhiWeights w;
    if (p.delta1 == 0) {
        w.phi1 = 0;  // no occupational signal at all
        if (p.sigma_eta == 0) w.limit = true;
    } else if (p.sigma_eta == 0) {
        w.phi1 = 1;  // noiseless signal limit
        w.limit = true;
    } else {
        const double prior = 1.0 / (p.sigma_x * p.sigma_x);
        const double signal = (p.delta1 * p.delta1) / (p.sigma_eta * p.sigma_eta);
        w.phi1 = signal / (prior + signal);
    }
    w.phi0 = 1.0 - w.phi1;
    return w;
}

inline double plim_ope1(const OpeParams& p) {
    return p.delta1 + p.gamma1 * phi_weights(p).phi1;
}

struct ThetaWeights {
    double theta0 = 0, theta1 = 0, theta2 = 0;
    bool limit = false;
};

// precision shares of {X prior, occupation signal, demographic signal}
inline ThetaWeights theta_weights(const OpeParams& p) {
    p.validate();
    ThetaWeights w;
    const bool eta_degenerate = p.sigma_eta == 0 && p.delta1 != 0;
    const bool psi_degenerate = p.sigma_psi == 0 && p.lambda1 != 0;
    if (eta_degenerate || psi_degenerate) {
        // a noiseless signal pins the posterior entirely
        w.limit = true;
        if (eta_degenerate && psi_degenerate) {
            w.theta1 = 0.5;
            w.theta2 = 0.5;
        } else if (eta_degenerate) {
            w.theta1 = 1;
        } else {
            w.theta2 = 1;
        }
        w.theta0 = 0;
        return w;
    }
    const double prior = 1.0 / (p.sigma_x * p.sigma_x);
    const double sig_eta =
        p.delta1 == 0 ? 0.0 : (p.delta1 * p.delta1) / (p.sigma_eta * p.sigma_eta);
    const double sig_psi =
        p.lambda1 == 0 ? 0.0 : (p.lambda1 * p.lambda1) / (p.sigma_psi * p.sigma_psi);
    const double total = prior + sig_eta + sig_psi;
    w.theta0 = prior / total;
    w.theta1 = sig_eta / total;
    w.theta2 = sig_psi / total;
    return w;
}

inline double plim_ope3(const OpeParams& p) {
    const ThetaWeights w = theta_weights(p);
    return p.delta1 + p.gamma1 * (w.theta1 + w.theta2);
}

// ----------------------------------------------------------------------------
// Monte Carlo sample
// ----------------------------------------------------------------------------
struct OpeSample {
    Eigen::VectorXd x, z, o, y;
    std::vector<int> occ_bin;
    int n_bins = 0;
};

// Equal-frequency binning of the occupation index stands in for the model's
// continuum of occupations.
inline OpeSample simulate_ope(const OpeParams& p, std::size_t n, std::uint64_t seed,
                              int n_bins = 50) {
    p.validate();
    if (n < 1) throw ConfigError("simulate_ope: n must be >= 1");
    if (n_bins < 1) throw ConfigError("simulate_ope: n_bins must be >= 1");
    OpeSample s;
    s.n_bins = n_bins;
    const Eigen::Index ni = static_cast<Eigen::Index>(n);
    s.x.resize(ni);
    s.z.resize(ni);
    s.o.resize(ni);
    s.y.resize(ni);
    Rng rng(derive_seed(seed, 0x6f7065ULL));
    for (Eigen::Index i = 0; i < ni; ++i) {
        const double x = rng.normal(p.mu_x, p.sigma_x);
        const double eta = rng.normal(0, p.sigma_eta);
        const double nu = rng.normal(0, p.sigma_nu);
        const double psi = rng.normal(0, p.sigma_psi);
        const double o = p.delta0 + p.delta1 * x + eta;
        s.x(i) = x;
        s.o(i) = o;
        s.y(i) = o + p.gamma0 + p.gamma1 * x + nu;
        s.z(i) = p.lambda0 + p.lambda1 * x + psi;
    }
    // rank rows by O, deal into equal-frequency bins
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.o(static_cast<Eigen::Index>(a)) < s.o(static_cast<Eigen::Index>(b)); });
    s.occ_bin.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        s.occ_bin[order[r]] = static_cast<int>((r * static_cast<std::size_t>(n_bins)) / n);
    }
    return s;
}

enum class ProxyKind { ope1, ope2, ope3 };

inline ProxyKind proxy_kind_from_string(const std::string& s) {
    if (s == "ope1") return ProxyKind::ope1;
    if (s == "ope2") return ProxyKind::ope2;
    if (s == "ope3") return ProxyKind::ope3;
    throw ConfigError("unknown proxy kind: " + s);
}

namespace detail {

// slope of v on x by simple OLS
inline double simple_slope(const Eigen::VectorXd& v, const Eigen::VectorXd& x) {
    const double xbar = x.mean(), vbar = v.mean();
    double sxx = 0, sxv = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        sxx += (x(i) - xbar) * (x(i) - xbar);
        sxv += (x(i) - xbar) * (v(i) - vbar);
    }
    if (!(sxx > 0)) throw NumericError("proxy regression: x has zero variance");
    return sxv / sxx;
}

// compacts bin ids so every bin is nonempty; returns true if merging happened
inline bool compact_bins(std::vector<int>& bins, int n_bins) {
    std::vector<int> count(static_cast<std::size_t>(n_bins), 0);
    for (int b : bins) ++count[static_cast<std::size_t>(b)];
    std::vector<int> remap(static_cast<std::size_t>(n_bins), -1);
    int next = 0;
    bool merged = false;
    for (int b = 0; b < n_bins; ++b) {
        if (count[static_cast<std::size_t>(b)] == 0) {
            merged = true;
            continue;
        }
        remap[static_cast<std::size_t>(b)] = next++;
    }
    if (merged)
        for (int& b : bins) b = remap[static_cast<std::size_t>(b)];
    return merged;
}

}  // namespace detail

struct ProxyBetaResult {
    double beta_hat = 0;
    bool bins_merged = false;
};

// Builds the empirical proxy DV and regresses it on X.
//
// ope1: bin means of y. ope2/ope3: fitted values of y on bin dummies plus the
// conditioning variable, computed by within-bin demeaning (the two-block
// partitioned form of the dummy regression, identical coefficients).
inline ProxyBetaResult estimate_proxy_beta_full(const OpeSample& sample, ProxyKind kind) {
    const Eigen::Index n = sample.x.size();
    if (n < 2) throw DataError("estimate_proxy_beta: need at least 2 rows");
    std::vector<int> bins = sample.occ_bin;
    ProxyBetaResult out;
    out.bins_merged = detail::compact_bins(bins, sample.n_bins);
    int n_bins = 0;
    for (int b : bins) n_bins = std::max(n_bins, b + 1);

    Eigen::VectorXd proxy(n);
    if (kind == ProxyKind::ope1) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_bins);
        Eigen::VectorXd cnt = Eigen::VectorXd::Zero(n_bins);
        for (Eigen::Index i = 0; i < n; ++i) {
            sum(bins[static_cast<std::size_t>(i)]) += sample.y(i);
            cnt(bins[static_cast<std::size_t>(i)]) += 1;
        }
        for (Eigen::Index i = 0; i < n; ++i)
            proxy(i) = sum(bins[static_cast<std::size_t>(i)]) / cnt(bins[static_cast<std::size_t>(i)]);
    } else {
        const Eigen::VectorXd& c = kind == ProxyKind::ope2 ? sample.x : sample.z;
        // within-bin demean y and the conditioning variable
        Eigen::VectorXd ysum = Eigen::VectorXd::Zero(n_bins), csum = Eigen::VectorXd::Zero(n_bins);
        Eigen::VectorXd cnt = Eigen::VectorXd::Zero(n_bins);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int b = bins[static_cast<std::size_t>(i)];
            ysum(b) += sample.y(i);
            csum(b) += c(i);
            cnt(b) += 1;
        }
        double num = 0, den = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int b = bins[static_cast<std::size_t>(i)];
            const double yd = sample.y(i) - ysum(b) / cnt(b);
            const double cd = c(i) - csum(b) / cnt(b);
            num += cd * yd;
            den += cd * cd;
        }
        if (!(den > 0)) throw NumericError("proxy regression: conditioning variable constant within bins");
        const double slope_c = num / den;
        // fitted value = bin mean of y + slope * (c - bin mean of c)
        for (Eigen::Index i = 0; i < n; ++i) {
            const int b = bins[static_cast<std::size_t>(i)];
            proxy(i) = ysum(b) / cnt(b) + slope_c * (c(i) - csum(b) / cnt(b));
        }
    }
    out.beta_hat = detail::simple_slope(proxy, sample.x);
    return out;
}

inline double estimate_proxy_beta(const OpeSample& sample, ProxyKind kind) {
    return estimate_proxy_beta_full(sample, kind).beta_hat;
}

// ----------------------------------------------------------------------------
// Sweep harness: one row per (parameter cell, seed), deterministic under
// parallel execution via per-cell derived seeds.
// ----------------------------------------------------------------------------
struct OpeSweepRow {
    OpeParams params;
    std::uint64_t seed = 0;
    double plim1 = 0, plim3 = 0;
    double beta_hat1 = 0, beta_hat2 = 0, beta_hat3 = 0;
};

inline std::vector<OpeSweepRow> run_ope_sweep(const std::vector<OpeParams>& cells, std::size_t n,
                                              std::uint64_t master_seed, int n_bins,
                                              unsigned n_threads = 1) {
    std::vector<OpeSweepRow> rows(cells.size());
    parallel_for(cells.size(), n_threads, [&](std::size_t i) {
        OpeSweepRow& row = rows[i];
        row.params = cells[i];
        row.seed = derive_seed(master_seed, i);
        row.plim1 = plim_ope1(row.params);
        row.plim3 = plim_ope3(row.params);
        const OpeSample s = simulate_ope(row.params, n, row.seed, n_bins);
        row.beta_hat1 = estimate_proxy_beta(s, ProxyKind::ope1);
        row.beta_hat2 = estimate_proxy_beta(s, ProxyKind::ope2);
        row.beta_hat3 = estimate_proxy_beta(s, ProxyKind::ope3);
    });
    return rows;
}

}  // namespace occlab
