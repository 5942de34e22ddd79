#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "occlab/common.hpp"
#include "occlab/io.hpp"
#include "occlab/lasso.hpp"
#include "occlab/microdata.hpp"
#include "occlab/stats.hpp"

namespace occlab {

// ============================================================================
// OCCUPATIONAL INCOME SCORES
//
// Two kinds:
//   occscore — median earnings of each occupation in a base year (currency
//              units), optionally combining per-sex medians weighted by cell
//              counts.
//   lido     — per-industry cross-validated lasso of log earnings on
//              occupation dummies, an age polynomial, sex/race/state
//              indicators, and six interaction groups (log units).
// ============================================================================

enum class ScoreKind { occscore, lido };

inline std::string to_string(ScoreKind k) { return k == ScoreKind::occscore ? "occscore" : "lido"; }
inline ScoreKind score_kind_from_string(const std::string& s) {
    if (s == "occscore") return ScoreKind::occscore;
    if (s == "lido") return ScoreKind::lido;
    throw ConfigError("unknown score kind: " + s);
}

// ----------------------------------------------------------------------------
// LIDO design columns. The same resolved-column list drives both fitting and
// prediction, so a record is always evaluated against exactly the basis the
// model was trained on. References are the most frequent level within the
// industry subset; the white/black indicators enter interactions unreferenced.
// ----------------------------------------------------------------------------
struct LidoColumn {
    enum class Kind {
        age_power,
        occ,
        sex,
        race,
        state,
        sex_race,
        sex_region,
        occ_sex,
        occ_white,
        region_white,
        region_black
    };
    Kind kind;
    int power = 0;
    std::string l1, l2;
    std::string name;
};

struct LidoLevels {
    std::string occ_ref, sex_ref, race_ref, state_ref, region_ref;
    std::vector<std::string> occ_nonref, sex_nonref, race_nonref, state_nonref, region_nonref;
    std::set<std::string> occ_seen, state_seen, region_seen;
};

namespace detail {

inline std::string most_frequent(const std::map<std::string, std::size_t>& counts) {
    std::string best;
    std::size_t n = 0;
    for (const auto& [code, c] : counts) {
        if (c > n) {
            n = c;
            best = code;
        }
    }
    return best;
}

inline std::uint64_t derive_seed_str(std::uint64_t master, const std::string& tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return derive_seed(master, h);
}

}  // namespace detail

inline LidoLevels lido_levels(std::span<const PersonRecord* const> rows) {
    std::map<std::string, std::size_t> occ, sex, race, state, region;
    for (const auto* r : rows) {
        ++occ[r->occupation];
        ++sex[to_string(r->sex)];
        ++race[to_string(r->race)];
        ++state[r->state];
        ++region[r->region];
    }
    LidoLevels lv;
    const auto fill = [](const std::map<std::string, std::size_t>& counts, std::string& ref,
                         std::vector<std::string>& nonref) {
        ref = detail::most_frequent(counts);
        for (const auto& [code, c] : counts)
            if (code != ref) nonref.push_back(code);
    };
    fill(occ, lv.occ_ref, lv.occ_nonref);
    fill(sex, lv.sex_ref, lv.sex_nonref);
    fill(race, lv.race_ref, lv.race_nonref);
    fill(state, lv.state_ref, lv.state_nonref);
    fill(region, lv.region_ref, lv.region_nonref);
    for (const auto& [c, n] : occ) lv.occ_seen.insert(c);
    for (const auto& [c, n] : state) lv.state_seen.insert(c);
    for (const auto& [c, n] : region) lv.region_seen.insert(c);
    return lv;
}

inline std::vector<LidoColumn> lido_columns(const LidoLevels& lv, int age_degree) {
    std::vector<LidoColumn> cols;
    using K = LidoColumn::Kind;
    for (const auto& o : lv.occ_nonref)
        cols.push_back({K::occ, 0, o, "", "occ=" + o});
    for (int d = 1; d <= age_degree; ++d)
        cols.push_back({K::age_power, d, "", "", d == 1 ? "age" : "age^" + std::to_string(d)});
    for (const auto& s : lv.sex_nonref)
        cols.push_back({K::sex, 0, s, "", "sex=" + s});
    for (const auto& r : lv.race_nonref)
        cols.push_back({K::race, 0, r, "", "race=" + r});
    for (const auto& s : lv.state_nonref)
        cols.push_back({K::state, 0, s, "", "state=" + s});
    for (const auto& s : lv.sex_nonref)
        for (const auto& r : lv.race_nonref)
            cols.push_back({K::sex_race, 0, s, r, "sex=" + s + "*race=" + r});
    for (const auto& s : lv.sex_nonref)
        for (const auto& g : lv.region_nonref)
            cols.push_back({K::sex_region, 0, s, g, "sex=" + s + "*region=" + g});
    for (const auto& o : lv.occ_nonref)
        for (const auto& s : lv.sex_nonref)
            cols.push_back({K::occ_sex, 0, o, s, "occ=" + o + "*sex=" + s});
    for (const auto& o : lv.occ_nonref)
        cols.push_back({K::occ_white, 0, o, "", "occ=" + o + "*white"});
    for (const auto& g : lv.region_nonref)
        cols.push_back({K::region_white, 0, g, "", "region=" + g + "*white"});
    for (const auto& g : lv.region_nonref)
        cols.push_back({K::region_black, 0, g, "", "region=" + g + "*black"});
    return cols;
}

// closed-form possible-covariate count for a full-levels industry:
// occupations o, states s, 2 sexes, 3 races, 4 regions, age degree d
inline std::size_t lido_possible_covariates(std::size_t o, std::size_t s, int d) {
    return 3 * (o - 1) + static_cast<std::size_t>(d) + s + 13;
}

inline double lido_column_value(const LidoColumn& c, const PersonRecord& r) {
    using K = LidoColumn::Kind;
    const bool white = r.race == Race::white;
    const bool black = r.race == Race::black;
    switch (c.kind) {
        case K::age_power: return std::pow(static_cast<double>(r.age), c.power);
        case K::occ: return r.occupation == c.l1 ? 1.0 : 0.0;
        case K::sex: return to_string(r.sex) == c.l1 ? 1.0 : 0.0;
        case K::race: return to_string(r.race) == c.l1 ? 1.0 : 0.0;
        case K::state: return r.state == c.l1 ? 1.0 : 0.0;
        case K::sex_race:
            return (to_string(r.sex) == c.l1 && to_string(r.race) == c.l2) ? 1.0 : 0.0;
        case K::sex_region: return (to_string(r.sex) == c.l1 && r.region == c.l2) ? 1.0 : 0.0;
        case K::occ_sex:
            return (r.occupation == c.l1 && to_string(r.sex) == c.l2) ? 1.0 : 0.0;
        case K::occ_white: return (r.occupation == c.l1 && white) ? 1.0 : 0.0;
        case K::region_white: return (r.region == c.l1 && white) ? 1.0 : 0.0;
        case K::region_black: return (r.region == c.l1 && black) ? 1.0 : 0.0;
    }
    return 0.0;
}

struct CvSummary {
    double lambda_min = 0;
    double mean_mse_at_min = 0;
    int folds = 0;
    std::uint64_t seed = 0;
};

struct LidoModel {
    std::string industry;
    bool fallback = false;
    std::size_t n_obs = 0;
    // lasso branch
    LidoLevels levels;
    std::vector<LidoColumn> columns;
    LassoFit fit;
    CvSummary cv;
    // fallback branch: weighted median log earnings per occupation
    std::map<std::string, double> occ_median_log;
    std::vector<std::string> warnings;
};

struct ScoreCoverage {
    std::size_t n_scored = 0;
    std::size_t n_null = 0;
    std::map<std::string, std::size_t> null_reasons;
};

struct BuildCoverage {
    std::size_t n_input = 0;
    std::size_t n_used = 0;
    std::size_t n_skipped_nonpositive_earnings = 0;
    std::size_t n_skipped_no_industry = 0;   // lido only
    std::size_t n_omitted_occupations = 0;   // occscore cells under threshold
    std::size_t n_fallback_industries = 0;   // lido industries under threshold
};

struct OccMedian {
    double median = 0;
    std::size_t n = 0;
};

struct ScoreTable {
    ScoreKind kind = ScoreKind::occscore;
    int base_year = 0;
    std::map<std::string, OccMedian> occ_medians;
    std::map<std::string, LidoModel> industry_models;
    BuildCoverage coverage;
    std::vector<std::string> warnings;
};

// ----------------------------------------------------------------------------
// OCCSCORE
// ----------------------------------------------------------------------------
enum class OccWeighting { pooled, sex_weighted };

inline OccWeighting occ_weighting_from_string(const std::string& s) {
    if (s == "pooled") return OccWeighting::pooled;
    if (s == "sex_weighted") return OccWeighting::sex_weighted;
    throw ConfigError("unknown occscore weighting: " + s);
}

struct OccScoreConfig {
    OccWeighting weighting = OccWeighting::sex_weighted;
    std::size_t min_cell_n = 1;
    int base_year = 0;
};

inline ScoreTable build_occscore(std::span<const PersonRecord> records,
                                 const OccScoreConfig& cfg = {}) {
    ScoreTable table;
    table.kind = ScoreKind::occscore;
    table.base_year = cfg.base_year;
    table.coverage.n_input = records.size();

    struct Cell {
        std::vector<double> v, w;
    };
    std::map<std::string, std::map<Sex, Cell>> by_occ_sex;
    for (const auto& r : records) {
        if (!(r.earnings && *r.earnings > 0)) {
            ++table.coverage.n_skipped_nonpositive_earnings;
            continue;
        }
        auto& cell = by_occ_sex[r.occupation][r.sex];
        cell.v.push_back(*r.earnings);
        cell.w.push_back(r.weight);
        ++table.coverage.n_used;
    }
    if (by_occ_sex.empty()) throw DataError("build_occscore: no occupations with positive earnings");

    for (const auto& [occ, cells] : by_occ_sex) {
        std::size_t n_total = 0;
        for (const auto& [sex, cell] : cells) n_total += cell.v.size();
        if (n_total < cfg.min_cell_n) {
            ++table.coverage.n_omitted_occupations;
            table.warnings.push_back("occupation omitted (cell below threshold): " + occ);
            continue;
        }
        double value = 0;
        if (cfg.weighting == OccWeighting::pooled) {
            std::vector<double> v, w;
            for (const auto& [sex, cell] : cells) {
                v.insert(v.end(), cell.v.begin(), cell.v.end());
                w.insert(w.end(), cell.w.begin(), cell.w.end());
            }
            value = weighted_median(v, w);
        } else {
            // per-sex medians combined by cell mass (weight sums)
            double mass_total = 0, acc = 0;
            for (const auto& [sex, cell] : cells) {
                double mass = 0;
                for (double w : cell.w) mass += w;
                acc += mass * weighted_median(cell.v, cell.w);
                mass_total += mass;
            }
            value = acc / mass_total;
        }
        table.occ_medians[occ] = {value, n_total};
    }
    if (table.occ_medians.empty())
        throw DataError("build_occscore: every occupation fell below the cell threshold");
    return table;
}

// ----------------------------------------------------------------------------
// LIDO
// ----------------------------------------------------------------------------
struct LidoConfig {
    int age_poly_degree = 4;     // valid 1..6
    std::size_t min_industry_n = 30;
    int cv_folds = 10;
    std::uint64_t seed = 1;
    int grid_points = 100;
    double grid_min_ratio = 1e-3;
    LassoConfig lasso;
    int base_year = 0;
    unsigned n_threads = 1;
};

inline LidoModel fit_lido_industry(const std::string& industry,
                                   std::span<const PersonRecord* const> rows,
                                   const LidoConfig& cfg) {
    LidoModel m;
    m.industry = industry;
    m.n_obs = rows.size();
    m.levels = lido_levels(rows);
    m.columns = lido_columns(m.levels, cfg.age_poly_degree);

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index p = static_cast<Eigen::Index>(m.columns.size());
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    std::vector<std::string> names;
    names.reserve(m.columns.size());
    for (const auto& c : m.columns) names.push_back(c.name);
    for (Eigen::Index i = 0; i < n; ++i) {
        const PersonRecord& r = *rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < p; ++j)
            X(i, j) = lido_column_value(m.columns[static_cast<std::size_t>(j)], r);
        y(i) = std::log(*r.earnings);
    }

    const Standardization std_check = standardize_columns(X, names);
    const bool any_active =
        std::any_of(std_check.active.begin(), std_check.active.end(), [](bool b) { return b; });
    if (!any_active) {
        // nothing varies; fall back to occupation medians
        m.fallback = true;
        m.warnings.push_back("industry " + industry + ": design entirely constant, fallback");
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> cells;
        for (const auto* r : rows) {
            cells[r->occupation].first.push_back(std::log(*r->earnings));
            cells[r->occupation].second.push_back(r->weight);
        }
        for (const auto& [occ, vw] : cells)
            m.occ_median_log[occ] = weighted_median(vw.first, vw.second);
        return m;
    }

    const std::uint64_t industry_seed = detail::derive_seed_str(cfg.seed, industry);
    const double lmax = lambda_max(X, y, names);
    std::vector<double> grid = default_lambda_grid(lmax, cfg.grid_points, cfg.grid_min_ratio);
    // fold fits run serially inside each industry; industries parallelize above
    CvResult cv = cv_select(X, names, y, cfg.cv_folds, grid, industry_seed, cfg.lasso, 1);
    const auto path = lasso_path(X, names, y, grid, cfg.lasso);
    m.fit = path[cv.lambda_min_index];
    m.cv = {cv.lambda_min, cv.mean_mse[cv.lambda_min_index], cfg.cv_folds, industry_seed};
    if (!m.fit.converged)
        m.warnings.push_back("industry " + industry + ": lasso did not converge at lambda_min");
    return m;
}

inline ScoreTable build_lido(std::span<const PersonRecord> records, const LidoConfig& cfg) {
    if (cfg.age_poly_degree < 1 || cfg.age_poly_degree > 6)
        throw ConfigError("lido: age_poly_degree must be in 1..6");
    if (cfg.cv_folds < 2) throw ConfigError("lido: cv_folds must be >= 2");

    ScoreTable table;
    table.kind = ScoreKind::lido;
    table.base_year = cfg.base_year;
    table.coverage.n_input = records.size();

    std::map<std::string, std::vector<const PersonRecord*>> by_industry;
    for (const auto& r : records) {
        if (!r.industry) {
            ++table.coverage.n_skipped_no_industry;
            continue;
        }
        if (!(r.earnings && *r.earnings > 0)) {
            ++table.coverage.n_skipped_nonpositive_earnings;
            continue;
        }
        by_industry[*r.industry].push_back(&r);
        ++table.coverage.n_used;
    }
    if (by_industry.empty()) throw DataError("build_lido: no records with industry and positive earnings");

    std::vector<std::string> industries;
    industries.reserve(by_industry.size());
    for (const auto& [code, rows] : by_industry) industries.push_back(code);

    std::vector<LidoModel> models(industries.size());
    parallel_for(industries.size(), cfg.n_threads, [&](std::size_t i) {
        const auto& code = industries[i];
        const auto& rows = by_industry[code];
        if (rows.size() < cfg.min_industry_n) {
            LidoModel m;
            m.industry = code;
            m.n_obs = rows.size();
            m.fallback = true;
            m.warnings.push_back("industry " + code + ": n=" + std::to_string(rows.size()) +
                                 " below threshold, occupation-median fallback");
            std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> cells;
            for (const auto* r : rows) {
                cells[r->occupation].first.push_back(std::log(*r->earnings));
                cells[r->occupation].second.push_back(r->weight);
            }
            for (const auto& [occ, vw] : cells)
                m.occ_median_log[occ] = weighted_median(vw.first, vw.second);
            models[i] = std::move(m);
        } else {
            models[i] = fit_lido_industry(code, rows, cfg);
        }
    });

    bool any_lasso = false;
    for (auto& m : models) {
        if (m.fallback) ++table.coverage.n_fallback_industries;
        else any_lasso = true;
        for (const auto& w : m.warnings) table.warnings.push_back(w);
        table.industry_models[m.industry] = std::move(m);
    }
    if (!any_lasso)
        throw DataError("build_lido: no industry meets the minimum-n threshold for a lasso model");
    return table;
}

// ----------------------------------------------------------------------------
// Scoring
// ----------------------------------------------------------------------------
struct ScorePolicy {
    bool allow_unseen_as_reference = true;
};

inline std::optional<double> score_one(const ScoreTable& table, const PersonRecord& r,
                                       const ScorePolicy& policy, std::string* reason) {
    const auto fail = [&](const std::string& why) -> std::optional<double> {
        if (reason) *reason = why;
        return std::nullopt;
    };
    if (table.kind == ScoreKind::occscore) {
        auto it = table.occ_medians.find(r.occupation);
        if (it == table.occ_medians.end()) return fail("occupation not in table");
        return it->second.median;
    }
    if (!r.industry) return fail("missing industry");
    auto it = table.industry_models.find(*r.industry);
    if (it == table.industry_models.end()) return fail("industry not in table");
    const LidoModel& m = it->second;
    if (m.fallback) {
        auto f = m.occ_median_log.find(r.occupation);
        if (f == m.occ_median_log.end()) return fail("occupation not in fallback table");
        return f->second;
    }
    if (!m.levels.occ_seen.count(r.occupation) && !policy.allow_unseen_as_reference)
        return fail("unseen occupation");
    if (!m.levels.state_seen.count(r.state) && !policy.allow_unseen_as_reference)
        return fail("unseen state");
    double v = m.fit.intercept;
    for (std::size_t j = 0; j < m.columns.size(); ++j) {
        const double c = m.fit.coef(static_cast<Eigen::Index>(j));
        if (c != 0) v += c * lido_column_value(m.columns[j], r);
    }
    if (!std::isfinite(v)) return fail("non-finite prediction");
    return v;
}

inline std::pair<std::vector<std::optional<double>>, ScoreCoverage> score_records(
    const ScoreTable& table, std::span<const PersonRecord> records,
    const ScorePolicy& policy = {}) {
    std::vector<std::optional<double>> out;
    out.reserve(records.size());
    ScoreCoverage cov;
    for (const auto& r : records) {
        std::string reason;
        auto v = score_one(table, r, policy, &reason);
        if (v) {
            ++cov.n_scored;
        } else {
            ++cov.n_null;
            ++cov.null_reasons[reason];
        }
        out.push_back(v);
    }
    return {out, cov};
}

}  // namespace occlab
