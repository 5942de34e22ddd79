#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "occlab/common.hpp"

namespace occlab {

// ============================================================================
// LASSO VIA CYCLIC COORDINATE DESCENT
//
// Objective on standardized data: (1/2n)·||y − Xb||² + λ·Σ|b_j|. Non-intercept
// columns are centered and scaled to unit 1/n variance internally; the
// intercept is unpenalized and recovered after unstandardizing. X passed to
// these functions must NOT contain an intercept column.
// ============================================================================

inline double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

struct LassoConfig {
    double tol = 1e-7;      // max absolute coefficient change, standardized scale
    int max_iter = 10000;   // full coordinate sweeps
    bool track_objective = false;
};

struct Standardization {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;        // population sd; 0 marks a constant column
    std::vector<bool> active;     // false for dropped constant columns
    std::vector<std::string> warnings;
};

inline Standardization standardize_columns(const Eigen::MatrixXd& X,
                                           const std::vector<std::string>& names) {
    const Eigen::Index n = X.rows(), p = X.cols();
    Standardization s;
    s.mean.resize(p);
    s.scale.resize(p);
    s.active.assign(static_cast<std::size_t>(p), true);
    for (Eigen::Index j = 0; j < p; ++j) {
        s.mean(j) = X.col(j).mean();
        const double var = (X.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(n);
        s.scale(j) = std::sqrt(var);
        if (!(s.scale(j) > 0)) {
            s.active[static_cast<std::size_t>(j)] = false;
            s.warnings.push_back("constant column dropped from lasso: " +
                                 (static_cast<std::size_t>(j) < names.size()
                                      ? names[static_cast<std::size_t>(j)]
                                      : "col" + std::to_string(j)));
        }
    }
    return s;
}

struct LassoFit {
    double lambda = 0;
    std::vector<std::string> terms;   // all columns, design order
    Eigen::VectorXd coef;             // original scale; exact 0 where inactive
    double intercept = 0;
    Eigen::VectorXd coef_std;         // standardized scale, for KKT checks
    int n_nonzero = 0;
    bool converged = false;
    int n_iterations = 0;
    std::vector<double> objective_trace;  // per sweep, when tracked
};

inline double lasso_objective(const Eigen::VectorXd& residual, const Eigen::VectorXd& beta,
                              double lambda) {
    const double n = static_cast<double>(residual.size());
    return residual.squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

// Smallest penalty at which the all-zero solution is optimal. The inner
// products are evaluated exactly as coordinate descent evaluates them at the
// zero vector, so a path fit at this value stays all-zero to the last bit.
inline double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<std::string>& names = {}) {
    if (X.rows() != y.size()) throw ConfigError("lambda_max: dimension mismatch");
    const Eigen::Index n = X.rows();
    const double ybar = y.mean();
    const double yvar = (y.array() - ybar).square().sum() / static_cast<double>(n);
    if (!(yvar > 0)) return 0.0;
    const Standardization s = standardize_columns(X, names);
    const Eigen::VectorXd yc = y.array() - ybar;
    Eigen::VectorXd xs(n);
    double lmax = 0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (!s.active[static_cast<std::size_t>(j)]) continue;
        xs = (X.col(j).array() - s.mean(j)) / s.scale(j);
        lmax = std::max(lmax, std::abs(xs.dot(yc)) / static_cast<double>(n));
    }
    return lmax;
}

inline std::vector<double> default_lambda_grid(double lmax, int n_points = 100,
                                               double min_ratio = 1e-3) {
    if (!(lmax > 0)) return {0.0};
    if (n_points < 2) throw ConfigError("lambda grid needs at least 2 points");
    std::vector<double> grid(static_cast<std::size_t>(n_points));
    const double lo = std::log(lmax * min_ratio);
    const double hi = std::log(lmax);
    for (int i = 0; i < n_points; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n_points - 1);
        grid[static_cast<std::size_t>(i)] = std::exp(hi + f * (lo - hi));
    }
    grid.front() = lmax;  // exact endpoints
    return grid;
}

// Path over a descending grid with warm starts. Grid values must strictly
// descend; a terminal exact 0 is allowed (unpenalized endpoint).
inline std::vector<LassoFit> lasso_path(const Eigen::MatrixXd& X,
                                        const std::vector<std::string>& names,
                                        const Eigen::VectorXd& y,
                                        const std::vector<double>& grid,
                                        const LassoConfig& cfg = {}) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n) throw ConfigError("lasso_path: y length mismatch");
    if (names.size() != static_cast<std::size_t>(p))
        throw ConfigError("lasso_path: names length mismatch");
    if (grid.empty()) throw ConfigError("lasso_path: empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < 0) throw ConfigError("lasso_path: negative lambda");
        if (i > 0 && !(grid[i] < grid[i - 1]))
            throw ConfigError("lasso_path: grid must be strictly descending");
        if (grid[i] == 0 && i + 1 != grid.size())
            throw ConfigError("lasso_path: zero lambda only allowed as the terminal point");
    }
    if (!(cfg.tol > 0)) throw ConfigError("lasso_path: tol must be positive");

    const Standardization s = standardize_columns(X, names);
    const double ybar = y.mean();
    Eigen::VectorXd yc = y.array() - ybar;

    // standardized copy once; CD touches columns repeatedly
    Eigen::MatrixXd Xs(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (s.active[static_cast<std::size_t>(j)])
            Xs.col(j) = (X.col(j).array() - s.mean(j)) / s.scale(j);
        else
            Xs.col(j).setZero();
    }

    const double dn = static_cast<double>(n);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd r = yc;

    std::vector<LassoFit> path;
    path.reserve(grid.size());
    for (double lambda : grid) {
        LassoFit fit;
        fit.lambda = lambda;
        fit.terms = names;
        int iter = 0;
        for (; iter < cfg.max_iter; ++iter) {
            double max_delta = 0;
            for (Eigen::Index j = 0; j < p; ++j) {
                if (!s.active[static_cast<std::size_t>(j)]) continue;
                const double old = beta(j);
                const double z = Xs.col(j).dot(r) / dn + old;
                const double next = soft_threshold(z, lambda);
                if (next != old) {
                    r.noalias() -= Xs.col(j) * (next - old);
                    beta(j) = next;
                    max_delta = std::max(max_delta, std::abs(next - old));
                }
            }
            if (cfg.track_objective)
                fit.objective_trace.push_back(lasso_objective(r, beta, lambda));
            if (max_delta < cfg.tol) {
                fit.converged = true;
                ++iter;
                break;
            }
        }
        fit.n_iterations = iter;

        fit.coef_std = beta;
        fit.coef = Eigen::VectorXd::Zero(p);
        double icept = ybar;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (beta(j) != 0) {
                fit.coef(j) = beta(j) / s.scale(j);
                icept -= fit.coef(j) * s.mean(j);
                ++fit.n_nonzero;
            }
        }
        fit.intercept = icept;
        path.push_back(std::move(fit));
    }
    return path;
}

// max KKT violation on standardized data: active columns need |g_j| == λ,
// inactive ones |g_j| <= λ, where g_j = <x_j, r>/n
inline double kkt_max_violation(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                const LassoFit& fit) {
    const Eigen::Index n = X.rows(), p = X.cols();
    const Standardization s = standardize_columns(X, fit.terms);
    const double ybar = y.mean();
    Eigen::VectorXd r = y.array() - ybar;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!s.active[static_cast<std::size_t>(j)] || fit.coef_std(j) == 0) continue;
        r -= ((X.col(j).array() - s.mean(j)) / s.scale(j)).matrix() * fit.coef_std(j);
    }
    double worst = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!s.active[static_cast<std::size_t>(j)]) continue;
        double g = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            g += (X(i, j) - s.mean(j)) / s.scale(j) * r(i);
        g /= static_cast<double>(n);
        if (fit.coef_std(j) != 0) {
            // gradient must sit on the subdifferential boundary with the right sign
            worst = std::max(worst, std::abs(g - fit.lambda * (fit.coef_std(j) > 0 ? 1.0 : -1.0)));
        } else {
            worst = std::max(worst, std::max(0.0, std::abs(g) - fit.lambda));
        }
    }
    return worst;
}

inline Eigen::VectorXd lasso_predict(const LassoFit& fit, const Eigen::MatrixXd& X) {
    if (X.cols() != fit.coef.size()) throw ConfigError("lasso_predict: dimension mismatch");
    return (X * fit.coef).array() + fit.intercept;
}

// ----------------------------------------------------------------------------
// K-fold cross-validation for λ.
//
// Fold assignment: seeded Fisher-Yates permutation dealt round-robin, so fold
// sizes differ by at most one and the assignment depends only on (seed, n, k).
// Folds are fitted independently (optionally in parallel) and merged in fold
// order, which keeps the result identical for any thread count.
// ----------------------------------------------------------------------------
struct CvResult {
    std::vector<double> lambda_grid;
    std::vector<std::vector<double>> fold_mse;  // [grid][fold]
    std::vector<double> mean_mse;
    double lambda_min = 0;
    std::size_t lambda_min_index = 0;
    double lambda_1se = 0;
    std::size_t lambda_1se_index = 0;
    std::uint64_t fold_assignment_seed = 0;
    std::vector<std::size_t> fold_sizes;
};

inline std::vector<int> cv_fold_assignment(std::size_t n, int k, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x666f6c64ULL));  // fold-assignment stream
    rng.shuffle(perm);
    std::vector<int> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fold;
}

inline CvResult cv_select(const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                          const Eigen::VectorXd& y, int k, std::vector<double> grid,
                          std::uint64_t seed, const LassoConfig& cfg = {},
                          unsigned n_threads = 1) {
    const Eigen::Index n = X.rows();
    if (k < 2) throw ConfigError("cv_select: need k >= 2");
    if (static_cast<Eigen::Index>(k) > n)
        throw ConfigError("cv_select: fold with zero rows (k > n)");

    if (grid.empty()) grid = default_lambda_grid(lambda_max(X, y, names));

    CvResult cv;
    cv.lambda_grid = grid;
    cv.fold_assignment_seed = seed;
    const auto fold = cv_fold_assignment(static_cast<std::size_t>(n), k, seed);
    cv.fold_sizes.assign(static_cast<std::size_t>(k), 0);
    for (int f : fold) ++cv.fold_sizes[static_cast<std::size_t>(f)];
    for (std::size_t f = 0; f < cv.fold_sizes.size(); ++f)
        if (cv.fold_sizes[f] == 0) throw ConfigError("cv_select: fold with zero rows");

    cv.fold_mse.assign(grid.size(), std::vector<double>(static_cast<std::size_t>(k), 0.0));

    parallel_for(static_cast<std::size_t>(k), n_threads, [&](std::size_t f) {
        const Eigen::Index n_test = static_cast<Eigen::Index>(cv.fold_sizes[f]);
        const Eigen::Index n_train = n - n_test;
        Eigen::MatrixXd Xtr(n_train, X.cols()), Xte(n_test, X.cols());
        Eigen::VectorXd ytr(n_train), yte(n_test);
        Eigen::Index a = 0, b = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (fold[static_cast<std::size_t>(i)] == static_cast<int>(f)) {
                Xte.row(b) = X.row(i);
                yte(b++) = y(i);
            } else {
                Xtr.row(a) = X.row(i);
                ytr(a++) = y(i);
            }
        }
        const auto path = lasso_path(Xtr, names, ytr, grid, cfg);
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const Eigen::VectorXd pred = lasso_predict(path[g], Xte);
            cv.fold_mse[g][f] = (yte - pred).squaredNorm() / static_cast<double>(n_test);
        }
    });

    cv.mean_mse.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double m = 0;
        for (double v : cv.fold_mse[g]) m += v;
        cv.mean_mse[g] = m / static_cast<double>(k);
    }

    // grid is descending, so the first minimizer is the largest λ (sparser tie-break)
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (cv.mean_mse[g] < cv.mean_mse[best]) best = g;
    cv.lambda_min_index = best;
    cv.lambda_min = grid[best];

    double sd_at_min = 0;
    if (k > 1) {
        const double m = cv.mean_mse[best];
        double acc = 0;
        for (double v : cv.fold_mse[best]) acc += (v - m) * (v - m);
        sd_at_min = std::sqrt(acc / static_cast<double>(k - 1));
    }
    const double threshold = cv.mean_mse[best] + sd_at_min / std::sqrt(static_cast<double>(k));
    std::size_t one_se = best;
    for (std::size_t g = 0; g <= best; ++g) {
        if (cv.mean_mse[g] <= threshold) {
            one_se = g;
            break;
        }
    }
    cv.lambda_1se_index = one_se;
    cv.lambda_1se = grid[one_se];
    return cv;
}

}  // namespace occlab
