#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occlab/common.hpp"
#include "occlab/design.hpp"
#include "occlab/io.hpp"

namespace occlab {

// ============================================================================
// OLS
//
// QR solve (column-pivoted) rather than normal equations; dummy-heavy designs
// get ill-conditioned fast. Rank-deficient columns are dropped with a warning
// unless the intercept itself is unidentified, which is fatal.
// ============================================================================

struct RegressionFit {
    std::vector<std::string> terms;       // retained columns, design order
    Eigen::VectorXd coef;
    Eigen::MatrixXd vcov;
    std::string se_type = "classical";    // classical | cluster
    std::string cluster_var;
    double r_squared = 0;
    double sigma2 = 0;                    // residual variance estimate
    std::size_t n_obs = 0;
    std::size_t df_residual = 0;
    std::optional<std::size_t> n_clusters;
    std::vector<std::size_t> retained;    // indices into the original design columns
    std::vector<std::string> dropped;     // rank-deficient columns removed
    Eigen::VectorXd residuals;

    int term_index(const std::string& name) const {
        for (std::size_t i = 0; i < terms.size(); ++i)
            if (terms[i] == name) return static_cast<int>(i);
        return -1;
    }
    double coef_of(const std::string& name) const {
        int i = term_index(name);
        if (i < 0) throw ConfigError("no such term: " + name);
        return coef(i);
    }
    double se(std::size_t i) const { return std::sqrt(vcov(i, i)); }
    double tstat(std::size_t i) const {
        const double s = se(i);
        return s > 0 ? coef(i) / s : 0.0;
    }
};

// two-sided p-value against a standard normal reference
inline double normal_p_value(double t) {
    const double z = std::abs(t) / std::sqrt(2.0);
    return std::erfc(z);
}

inline RegressionFit ols_fit(const DesignMatrix& d, const Eigen::VectorXd& y,
                             const Eigen::VectorXd* weights = nullptr) {
    const Eigen::Index n = d.X.rows();
    const Eigen::Index p = d.X.cols();
    if (y.size() != n) throw ConfigError("ols_fit: y length mismatch");
    if (n <= p) throw DataError("ols_fit: need more rows than columns");
    if (weights && weights->size() != n) throw ConfigError("ols_fit: weights length mismatch");

    Eigen::MatrixXd Xw = d.X;
    Eigen::VectorXd yw = y;
    if (weights) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!((*weights)(i) > 0)) throw ConfigError("ols_fit: weights must be positive");
            const double s = std::sqrt((*weights)(i));
            Xw.row(i) *= s;
            yw(i) *= s;
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    const Eigen::Index rank = qr.rank();

    RegressionFit fit;
    fit.n_obs = static_cast<std::size_t>(n);

    std::vector<std::size_t> retained;
    if (rank < p) {
        const auto& perm = qr.colsPermutation().indices();
        std::vector<bool> keep(static_cast<std::size_t>(p), false);
        for (Eigen::Index k = 0; k < rank; ++k)
            keep[static_cast<std::size_t>(perm(k))] = true;
        for (std::size_t j = 0; j < static_cast<std::size_t>(p); ++j) {
            if (keep[j]) {
                retained.push_back(j);
            } else {
                if (d.kinds[j] == ColumnKind::intercept)
                    throw NumericError("ols_fit: intercept dropped by rank detection");
                fit.dropped.push_back(d.names[j]);
            }
        }
        Eigen::MatrixXd Xr(n, static_cast<Eigen::Index>(retained.size()));
        for (std::size_t j = 0; j < retained.size(); ++j)
            Xr.col(static_cast<Eigen::Index>(j)) = Xw.col(static_cast<Eigen::Index>(retained[j]));
        Xw = std::move(Xr);
        qr.compute(Xw);
    } else {
        retained.resize(static_cast<std::size_t>(p));
        for (std::size_t j = 0; j < retained.size(); ++j) retained[j] = j;
    }
    fit.retained = retained;
    for (std::size_t j : retained) fit.terms.push_back(d.names[j]);

    const Eigen::Index pr = Xw.cols();
    fit.coef = qr.solve(yw);
    fit.residuals = yw - Xw * fit.coef;

    const double rss = fit.residuals.squaredNorm();
    // centered TSS on the (weighted) response
    const double ybar = yw.mean();
    double tss = 0;
    for (Eigen::Index i = 0; i < n; ++i) tss += (yw(i) - ybar) * (yw(i) - ybar);
    fit.r_squared = tss > 0 ? 1.0 - rss / tss : 0.0;
    if (fit.r_squared < 0) fit.r_squared = 0;

    fit.df_residual = static_cast<std::size_t>(n - pr);
    fit.sigma2 = rss / static_cast<double>(n - pr);

    // (X'X)^-1 from the R factor: R^-1 R^-T with the pivot permutation
    Eigen::MatrixXd R = qr.matrixR().topLeftCorner(pr, pr).template triangularView<Eigen::Upper>();
    Eigen::MatrixXd Rinv = R.triangularView<Eigen::Upper>().solve(
        Eigen::MatrixXd::Identity(pr, pr));
    Eigen::MatrixXd xtx_inv = Rinv * Rinv.transpose();
    const auto& perm2 = qr.colsPermutation();
    xtx_inv = perm2 * xtx_inv * perm2.transpose();
    fit.vcov = fit.sigma2 * xtx_inv;
    fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose()).eval();
    return fit;
}

// ----------------------------------------------------------------------------
// Cluster-robust sandwich variance.
//
// meat = sum over clusters of (X_g' u_g)(X_g' u_g)', bread = (X'X)^-1, with
// the usual small-sample factor (G/(G-1)) * ((N-1)/(N-K)).
// ----------------------------------------------------------------------------
inline Eigen::MatrixXd cluster_vcov(const RegressionFit& fit, const DesignMatrix& d,
                                    const Eigen::VectorXd& residuals,
                                    const std::vector<std::string>& cluster_ids) {
    const Eigen::Index n = d.X.rows();
    if (residuals.size() != n || cluster_ids.size() != static_cast<std::size_t>(n))
        throw ConfigError("cluster_vcov: length mismatch");

    std::map<std::string, Eigen::VectorXd> scores;
    const std::size_t k = fit.retained.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        auto [it, inserted] = scores.try_emplace(cluster_ids[static_cast<std::size_t>(i)]);
        if (inserted) it->second = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < k; ++j)
            it->second(static_cast<Eigen::Index>(j)) +=
                d.X(i, static_cast<Eigen::Index>(fit.retained[j])) * residuals(i);
    }
    const std::size_t g = scores.size();
    if (g < 2) throw DataError("cluster_vcov: need at least 2 clusters");

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                 static_cast<Eigen::Index>(k));
    for (const auto& [id, s] : scores) meat += s * s.transpose();

    Eigen::MatrixXd Xr(n, static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j)
        Xr.col(static_cast<Eigen::Index>(j)) = d.X.col(static_cast<Eigen::Index>(fit.retained[j]));
    Eigen::MatrixXd bread = (Xr.transpose() * Xr).ldlt().solve(
        Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));

    const double nn = static_cast<double>(n);
    const double gg = static_cast<double>(g);
    const double kk = static_cast<double>(k);
    const double factor = (gg / (gg - 1.0)) * ((nn - 1.0) / (nn - kk));
    Eigen::MatrixXd v = factor * bread * meat * bread;
    return 0.5 * (v + v.transpose());
}

// convenience: classical fit upgraded to clustered standard errors
inline RegressionFit ols_fit_clustered(const DesignMatrix& d, const Eigen::VectorXd& y,
                                       const std::vector<std::string>& cluster_ids,
                                       const std::string& cluster_var) {
    RegressionFit fit = ols_fit(d, y);
    fit.vcov = cluster_vcov(fit, d, fit.residuals, cluster_ids);
    fit.se_type = "cluster";
    fit.cluster_var = cluster_var;
    std::map<std::string, bool> seen;
    for (const auto& c : cluster_ids) seen[c] = true;
    fit.n_clusters = seen.size();
    return fit;
}

// flat table serialization: term, estimate, se, t, p
inline void write_fit_table(const RegressionFit& fit, const std::string& path) {
    TableWriter w(path);
    w.header({"term", "estimate", "se", "t", "p"});
    for (std::size_t i = 0; i < fit.terms.size(); ++i) {
        const double t = fit.tstat(i);
        w.row_strings({fit.terms[i], format_double(fit.coef(static_cast<Eigen::Index>(i))),
                       format_double(fit.se(i)), format_double(t),
                       format_double(normal_p_value(t))});
    }
}

}  // namespace occlab
