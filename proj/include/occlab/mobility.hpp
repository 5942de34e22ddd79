#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "occlab/common.hpp"
#include "occlab/design.hpp"
#include "occlab/microdata.hpp"
#include "occlab/ols.hpp"
#include "occlab/scores.hpp"

namespace occlab {

// ============================================================================
// INTERGENERATIONAL MOBILITY
//
// Transmission regressions on linked father-son pairs under alternative score
// proxies, plus a simulator for the correlated-measurement-error mechanism:
//   y_son = b0 + b1*y_father + delta        (transmission, true incomes)
//   e_son = bt0 + bt1*e_father + nu         (error transmission)
//   observed = true - error
// ============================================================================

struct LinkedPair {
    PersonRecord father;  // first census year
    PersonRecord son;     // second census year
    std::map<std::string, double> father_scores;  // score kind -> value
    std::map<std::string, double> son_scores;
};

struct PairLoadReport {
    std::size_t n_parsed = 0;
    std::size_t n_rejected = 0;
    std::map<std::string, std::size_t> reject_reasons;
};

// Pair files carry father_* and son_* column groups, both mapped through the
// same schema column map with the group prefix applied. A row joins the
// sample only if both sides parse. Pre-linked construction constraints: when
// both year columns are present, the son's age in the first census year must
// be <= 15, and a son with a known household relation must be a child.
inline std::pair<std::vector<LinkedPair>, PairLoadReport> load_linked_pairs(
    const std::string& path, const IngestSchema& schema, int max_son_age_at_link = 15) {
    IngestSchema father_schema = schema;
    IngestSchema son_schema = schema;
    father_schema.columns.clear();
    son_schema.columns.clear();
    for (const auto& [field, col] : schema.columns) {
        father_schema.columns[field] = "father_" + col;
        son_schema.columns[field] = "son_" + col;
    }
    const Table t = read_table(path);
    validate_schema(t, father_schema);
    validate_schema(t, son_schema);

    PairLoadReport rep;
    std::vector<LinkedPair> pairs;
    pairs.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto f = parse_record_row(t, t.rows[r], r, father_schema);
        auto s = parse_record_row(t, t.rows[r], r, son_schema);
        if (std::holds_alternative<std::string>(f)) {
            ++rep.n_rejected;
            ++rep.reject_reasons["father: " + std::get<std::string>(f)];
            continue;
        }
        if (std::holds_alternative<std::string>(s)) {
            ++rep.n_rejected;
            ++rep.reject_reasons["son: " + std::get<std::string>(s)];
            continue;
        }
        LinkedPair p;
        p.father = std::move(std::get<PersonRecord>(f));
        p.son = std::move(std::get<PersonRecord>(s));
        if (!p.son.relation_to_head.empty() && p.son.relation_to_head != "child") {
            ++rep.n_rejected;
            ++rep.reject_reasons["son not a child of the household head"];
            continue;
        }
        if (p.father.year != 0 && p.son.year != 0) {
            const int age_at_link = p.son.age - (p.son.year - p.father.year);
            if (age_at_link > max_son_age_at_link) {
                ++rep.n_rejected;
                ++rep.reject_reasons["son older than link limit in first year"];
                continue;
            }
        }
        pairs.push_back(std::move(p));
        ++rep.n_parsed;
    }
    return {pairs, rep};
}

// Scores both sides of every pair under the given table; nulls stay absent.
inline void attach_scores(std::vector<LinkedPair>& pairs, const std::string& kind_name,
                          const ScoreTable& table, const ScorePolicy& policy = {}) {
    for (auto& p : pairs) {
        std::string reason;
        if (auto v = score_one(table, p.father, policy, &reason)) p.father_scores[kind_name] = *v;
        if (auto v = score_one(table, p.son, policy, &reason)) p.son_scores[kind_name] = *v;
    }
}

struct ElasticityResult {
    RegressionFit fit;
    double elasticity = 0;
    std::size_t n_pairs = 0;
    std::size_t n_dropped_incomplete = 0;
};

// OLS of (log) son score on (log) father score. The estimation sample keeps
// only pairs complete for EVERY attached score kind, so elasticities across
// kinds are computed on the identical pair set.
inline ElasticityResult estimate_elasticity(std::span<const LinkedPair> pairs,
                                            const std::string& kind_name, bool log_transform) {
    std::set<std::string> kinds;
    for (const auto& p : pairs) {
        for (const auto& [k, v] : p.father_scores) kinds.insert(k);
        for (const auto& [k, v] : p.son_scores) kinds.insert(k);
    }
    if (!kinds.count(kind_name)) throw ConfigError("no scores attached for kind: " + kind_name);

    std::vector<double> x, y;
    ElasticityResult res;
    for (const auto& p : pairs) {
        bool complete = true;
        for (const auto& k : kinds) {
            if (!p.father_scores.count(k) || !p.son_scores.count(k)) {
                complete = false;
                break;
            }
        }
        if (!complete) {
            ++res.n_dropped_incomplete;
            continue;
        }
        double fx = p.father_scores.at(kind_name);
        double sy = p.son_scores.at(kind_name);
        if (log_transform) {
            if (!(fx > 0) || !(sy > 0)) {
                ++res.n_dropped_incomplete;
                continue;
            }
            fx = std::log(fx);
            sy = std::log(sy);
        }
        x.push_back(fx);
        y.push_back(sy);
    }
    if (x.size() < 10) throw DataError("estimate_elasticity: fewer than 10 complete pairs");

    DataTable t(x.size());
    t.add_numeric("father_score", x);
    Formula f;
    f.continuous = {"father_score"};
    const DesignMatrix d = build_design(t, f);
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    res.fit = ols_fit(d, yv);
    res.elasticity = res.fit.coef_of("father_score");
    res.n_pairs = x.size();
    return res;
}

// ----------------------------------------------------------------------------
// Correlated-error bias simulator
// ----------------------------------------------------------------------------
struct MobilityErrorParams {
    double beta0 = 0, beta1 = 0.5;         // transmission
    double tilde_beta0 = 0, tilde_beta1 = 0;  // error transmission
    double sigma_father_y = 1;
    double sigma_e_father = 0;
    double sigma_nu = 0;
    double sigma_delta = 0;
    bool enforce_range = true;

    void validate() const {
        if (sigma_father_y < 0 || sigma_e_father < 0 || sigma_nu < 0 || sigma_delta < 0)
            throw ConfigError("mobility params: sigma terms must be >= 0");
        if (enforce_range && (beta1 < 0 || beta1 > 1))
            throw ConfigError("mobility params: beta1 outside [0,1] (set enforce_range=false)");
    }
};

struct MobilitySimResult {
    double beta_hat = 0;
    double plim = 0;      // (b1*var_y + bt1*var_e) / (var_y + var_e)
    double cov_term = 0;  // Cov(observed father, b1*e_father - e_son) = (bt1 - b1)*var_e
    std::string note;
};

inline MobilitySimResult simulate_mobility_bias(const MobilityErrorParams& p, std::size_t n,
                                                std::uint64_t seed) {
    p.validate();
    if (n < 100) throw ConfigError("simulate_mobility_bias: n must be >= 100");
    Rng rng(derive_seed(seed, 0x6d6f62ULL));
    Eigen::VectorXd xf(static_cast<Eigen::Index>(n)), ys(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double y_f = rng.normal(0, p.sigma_father_y);
        const double e_f = rng.normal(0, p.sigma_e_father);
        const double e_s = p.tilde_beta0 + p.tilde_beta1 * e_f + rng.normal(0, p.sigma_nu);
        const double y_s = p.beta0 + p.beta1 * y_f + rng.normal(0, p.sigma_delta);
        xf(static_cast<Eigen::Index>(i)) = y_f - e_f;  // observed = true - error
        ys(static_cast<Eigen::Index>(i)) = y_s - e_s;
    }
    const double xbar = xf.mean(), ybar = ys.mean();
    double sxx = 0, sxy = 0;
    for (Eigen::Index i = 0; i < xf.size(); ++i) {
        sxx += (xf(i) - xbar) * (xf(i) - xbar);
        sxy += (xf(i) - xbar) * (ys(i) - ybar);
    }
    if (!(sxx > 0)) throw NumericError("simulate_mobility_bias: observed father income constant");

    MobilitySimResult res;
    res.beta_hat = sxy / sxx;
    const double var_y = p.sigma_father_y * p.sigma_father_y;
    const double var_e = p.sigma_e_father * p.sigma_e_father;
    res.cov_term = (p.tilde_beta1 - p.beta1) * var_e;
    res.plim = var_y + var_e > 0
                   ? (p.beta1 * var_y + p.tilde_beta1 * var_e) / (var_y + var_e)
                   : p.beta1;
    res.note = res.cov_term == 0
                   ? "error transmission matches income transmission; no asymptotic bias"
                   : (res.cov_term < 0 ? "negative error covariance term: slope biased downward"
                                       : "positive error covariance term: slope biased upward");
    return res;
}

// Synthetic linked pairs with known transmission, for tests and fixtures.
// Scores are exp(log income + noise), so log-score regressions recover beta1.
inline std::vector<LinkedPair> make_synthetic_pairs(std::size_t n, double beta1,
                                                    double score_noise_sd, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x70616972ULL));
    std::vector<LinkedPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        LinkedPair p;
        const double yf = rng.normal(2.5, 0.6);
        const double ys = 1.0 + beta1 * yf + rng.normal(0, 0.3);
        p.father.record_id = "f" + std::to_string(i);
        p.son.record_id = "s" + std::to_string(i);
        p.father_scores["occscore"] = std::exp(yf + rng.normal(0, score_noise_sd));
        p.son_scores["occscore"] = std::exp(ys + rng.normal(0, score_noise_sd));
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace occlab
