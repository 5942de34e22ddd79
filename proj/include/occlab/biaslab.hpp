#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "occlab/common.hpp"
#include "occlab/design.hpp"
#include "occlab/microdata.hpp"
#include "occlab/ols.hpp"
#include "occlab/scores.hpp"
#include "occlab/stats.hpp"

namespace occlab {

// ============================================================================
// BIAS DIAGNOSTICS
//
// Earnings-gap regressions under true and proxy dependent variables, Type S
// (conflicting-sign) rates, Type M coefficient-ratio tables, ratio densities,
// and occupational-income persistence across census years.
// ============================================================================

// ----------------------------------------------------------------------------
// Record -> analysis columns. The vocabulary below covers every regressor the
// gap analyses use; age bins are 5-year, family size is capped into a "7+"
// bucket to keep cells populated.
// ----------------------------------------------------------------------------
inline std::string age_bin5(int age) {
    const int lo = (age / 5) * 5;
    return std::to_string(lo) + "-" + std::to_string(lo + 4);
}

inline void add_analysis_column(DataTable& t, std::span<const PersonRecord> records,
                                const std::string& name) {
    const std::size_t n = records.size();
    if (name == "age" || name == "age_sq") {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = static_cast<double>(records[i].age);
            v[i] = name == "age" ? a : a * a;
        }
        t.add_numeric(name, std::move(v));
        return;
    }
    std::vector<std::string> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const PersonRecord& r = records[i];
        if (name == "state") v[i] = r.state;
        else if (name == "region") v[i] = r.region;
        else if (name == "sex") v[i] = to_string(r.sex);
        else if (name == "race") v[i] = to_string(r.race);
        else if (name == "race_sex") v[i] = to_string(r.race) + "_" + to_string(r.sex);
        else if (name == "nativity") v[i] = r.nativity ? "native" : "foreign";
        else if (name == "birthplace") v[i] = r.birthplace;
        else if (name == "age_bin") v[i] = age_bin5(r.age);
        else if (name == "family_size") v[i] = r.family_size >= 7 ? "7+" : std::to_string(r.family_size);
        else if (name == "n_families") v[i] = r.n_families_in_household >= 3 ? "3+" : std::to_string(r.n_families_in_household);
        else if (name == "marital_status") v[i] = r.marital_status;
        else if (name == "relation_to_head") v[i] = r.relation_to_head;
        else if (name == "farm") v[i] = r.farm_status ? "farm" : "nonfarm";
        else if (name == "occupation") v[i] = r.occupation;
        else if (name == "industry") v[i] = r.industry.value_or("");
        else throw ConfigError("unknown analysis column: " + name);
    }
    t.add_factor(name, std::move(v));
}

inline DataTable make_analysis_table(std::span<const PersonRecord> records, const Formula& f) {
    DataTable t(records.size());
    std::set<std::string> added;
    const auto add = [&](const std::string& name) {
        if (added.insert(name).second) add_analysis_column(t, records, name);
    };
    for (const auto& c : f.continuous) add(c);
    for (const auto& fac : f.factors) add(fac);
    for (const auto& [a, b] : f.interactions) {
        add(a);
        add(b);
    }
    return t;
}

// ----------------------------------------------------------------------------
// Gap regression: log DV on controls, with implied group income ratios
// exp(coefficient) for every dummy term.
// ----------------------------------------------------------------------------
enum class GapDv { earnings, occscore, lido };

inline GapDv gap_dv_from_string(const std::string& s) {
    if (s == "earnings") return GapDv::earnings;
    if (s == "occscore") return GapDv::occscore;
    if (s == "lido") return GapDv::lido;
    throw ConfigError("unknown gap dv: " + s);
}

struct GapSpec {
    GapDv dv = GapDv::earnings;
    Formula controls;
    bool cluster_by_state = false;
};

struct GapResult {
    RegressionFit fit;
    std::map<std::string, double> implied_ratios;
    std::size_t n_used = 0;
    std::size_t n_dropped = 0;
    std::map<std::string, std::size_t> drop_reasons;
};

// DV values per record: log earnings, log occscore median, or the (already
// log) lido score; nullopt rows are dropped and counted.
inline std::vector<std::optional<double>> gap_dv_values(std::span<const PersonRecord> records,
                                                        GapDv dv, const ScoreTable* table,
                                                        std::map<std::string, std::size_t>* reasons) {
    std::vector<std::optional<double>> out(records.size());
    if (dv == GapDv::earnings) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& e = records[i].earnings;
            if (e && *e > 0) {
                out[i] = std::log(*e);
            } else if (reasons) {
                ++(*reasons)["nonpositive or missing earnings"];
            }
        }
        return out;
    }
    if (!table) throw ConfigError("gap regression on a score DV needs a score table");
    const bool is_occscore = dv == GapDv::occscore;
    if (is_occscore && table->kind != ScoreKind::occscore)
        throw ConfigError("dv=occscore requires an occscore table");
    if (!is_occscore && table->kind != ScoreKind::lido)
        throw ConfigError("dv=lido requires a lido table");
    auto [scores, cov] = score_records(*table, records);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!scores[i]) {
            if (reasons) ++(*reasons)["unscored record"];
            continue;
        }
        if (is_occscore) {
            if (*scores[i] <= 0) {
                if (reasons) ++(*reasons)["nonpositive score"];
                continue;
            }
            out[i] = std::log(*scores[i]);
        } else {
            out[i] = *scores[i];
        }
    }
    return out;
}

inline GapResult run_gap_regression(std::span<const PersonRecord> records, const GapSpec& spec,
                                    const ScoreTable* table = nullptr) {
    GapResult res;
    auto dvs = gap_dv_values(records, spec.dv, table, &res.drop_reasons);
    std::vector<PersonRecord> kept;
    std::vector<double> y;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!dvs[i]) continue;
        kept.push_back(records[i]);
        y.push_back(*dvs[i]);
    }
    res.n_used = kept.size();
    res.n_dropped = records.size() - kept.size();
    if (kept.empty()) throw DataError("gap regression: dependent variable missing on every row");

    const DataTable t = make_analysis_table(kept, spec.controls);
    const DesignMatrix d = build_design(t, spec.controls);
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    if (spec.cluster_by_state) {
        std::vector<std::string> states;
        states.reserve(kept.size());
        for (const auto& r : kept) states.push_back(r.state);
        res.fit = ols_fit_clustered(d, yv, states, "state");
    } else {
        res.fit = ols_fit(d, yv);
    }
    for (std::size_t i = 0; i < res.fit.terms.size(); ++i) {
        const ColumnKind kind = d.kinds[res.fit.retained[i]];
        if (kind == ColumnKind::dummy || kind == ColumnKind::interaction)
            res.implied_ratios[res.fit.terms[i]] = std::exp(res.fit.coef(static_cast<Eigen::Index>(i)));
    }
    return res;
}

// ----------------------------------------------------------------------------
// Comparison runs: true-DV and proxy-DV fits on one shared design.
// ----------------------------------------------------------------------------
struct ComparisonRun {
    std::string spec_name;
    RegressionFit true_fit;
    std::map<std::string, RegressionFit> proxy_fits;
    std::map<std::string, std::string> term_categories;
    std::size_t n_rows = 0;
};

inline std::map<std::string, std::string> default_category_map() {
    return {
        {"age", "age"},
        {"age_sq", "age"},
        {"age_bin", "age"},
        {"state", "state"},
        {"region", "state"},
        {"birthplace", "birthplace"},
        {"nativity", "birthplace"},
        {"sex", "race_sex"},
        {"race", "race_sex"},
        {"race_sex", "race_sex"},
        {"family_size", "family_household"},
        {"n_families", "family_household"},
        {"marital_status", "family_household"},
        {"relation_to_head", "family_household"},
        {"farm", "family_household"},
    };
}

// category of a design term: factor name before '=', or the term itself for
// continuous columns
inline std::string term_category(const std::string& term,
                                 const std::map<std::string, std::string>& category_of_factor) {
    std::string factor = term;
    if (auto eq = term.find('='); eq != std::string::npos) factor = term.substr(0, eq);
    auto it = category_of_factor.find(factor);
    return it == category_of_factor.end() ? "other" : it->second;
}

// Rows are restricted to records where the true DV and every proxy DV are all
// available, so the fits share one design.
inline ComparisonRun make_comparison_run(
    std::string spec_name, std::span<const PersonRecord> records, const Formula& controls,
    const std::vector<std::pair<std::string, const ScoreTable*>>& proxies,
    const std::map<std::string, std::string>& category_of_factor, bool cluster_by_state) {
    std::vector<std::vector<std::optional<double>>> proxy_dvs;
    for (const auto& [name, table] : proxies) {
        const GapDv dv = table->kind == ScoreKind::occscore ? GapDv::occscore : GapDv::lido;
        proxy_dvs.push_back(gap_dv_values(records, dv, table, nullptr));
    }
    auto true_dv = gap_dv_values(records, GapDv::earnings, nullptr, nullptr);

    std::vector<PersonRecord> kept;
    std::vector<double> y_true;
    std::vector<std::vector<double>> y_proxy(proxies.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!true_dv[i]) continue;
        bool all = true;
        for (const auto& pv : proxy_dvs)
            if (!pv[i]) {
                all = false;
                break;
            }
        if (!all) continue;
        kept.push_back(records[i]);
        y_true.push_back(*true_dv[i]);
        for (std::size_t p = 0; p < proxies.size(); ++p) y_proxy[p].push_back(*proxy_dvs[p][i]);
    }
    if (kept.size() < 2) throw DataError("comparison run: too few rows with all DVs present");

    ComparisonRun run;
    run.spec_name = std::move(spec_name);
    run.n_rows = kept.size();
    const DataTable t = make_analysis_table(kept, controls);
    const DesignMatrix d = build_design(t, controls);

    std::vector<std::string> states;
    if (cluster_by_state) {
        states.reserve(kept.size());
        for (const auto& r : kept) states.push_back(r.state);
    }
    const auto fit_one = [&](const std::vector<double>& y) {
        Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
        return cluster_by_state ? ols_fit_clustered(d, yv, states, "state") : ols_fit(d, yv);
    };
    run.true_fit = fit_one(y_true);
    for (std::size_t p = 0; p < proxies.size(); ++p)
        run.proxy_fits[proxies[p].first] = fit_one(y_proxy[p]);

    for (const auto& term : run.true_fit.terms) {
        if (term == "(intercept)") continue;
        run.term_categories[term] = term_category(term, category_of_factor);
    }
    return run;
}

// ----------------------------------------------------------------------------
// Type S: share of terms whose proxy coefficient has the opposite sign of the
// true coefficient and clears the significance rule.
// ----------------------------------------------------------------------------
enum class TypeSDefinition { proxy_significant, both_significant };

struct CategoryRates {
    std::map<std::string, double> by_category;
    std::map<std::string, std::size_t> n_terms;
    double overall = 0;
    std::size_t n_total = 0;
};

inline CategoryRates type_s_table(const ComparisonRun& run, const std::string& proxy_name,
                                  double alpha = 0.05,
                                  TypeSDefinition def = TypeSDefinition::proxy_significant) {
    auto it = run.proxy_fits.find(proxy_name);
    if (it == run.proxy_fits.end()) throw ConfigError("no proxy fit named " + proxy_name);
    const RegressionFit& proxy = it->second;
    const RegressionFit& truth = run.true_fit;

    CategoryRates out;
    std::map<std::string, std::size_t> hits;
    std::size_t total_hits = 0;
    for (std::size_t i = 0; i < truth.terms.size(); ++i) {
        const std::string& term = truth.terms[i];
        if (term == "(intercept)") continue;
        const int j = proxy.term_index(term);
        if (j < 0) continue;
        const std::string cat = run.term_categories.count(term) ? run.term_categories.at(term) : "other";
        ++out.n_terms[cat];
        ++out.n_total;

        const double b_true = truth.coef(static_cast<Eigen::Index>(i));
        const double b_proxy = proxy.coef(static_cast<Eigen::Index>(j));
        const bool conflict = b_true * b_proxy < 0;
        bool significant = normal_p_value(proxy.tstat(static_cast<std::size_t>(j))) < alpha;
        if (def == TypeSDefinition::both_significant)
            significant = significant && normal_p_value(truth.tstat(i)) < alpha;
        if (conflict && significant) {
            ++hits[cat];
            ++total_hits;
        }
    }
    for (const auto& [cat, n] : out.n_terms)
        out.by_category[cat] =
            n == 0 ? 0.0 : static_cast<double>(hits[cat]) / static_cast<double>(n);
    out.overall = out.n_total == 0 ? 0.0 : static_cast<double>(total_hits) / static_cast<double>(out.n_total);
    return out;
}

// ----------------------------------------------------------------------------
// Type M: mean proxy/true coefficient ratio per category. Terms with a true
// t-statistic below min_abs_t are excluded (the ratio denominator is noise).
// ----------------------------------------------------------------------------
struct RatioTable {
    std::map<std::string, double> mean_by_category;
    std::map<std::string, std::size_t> n_terms;
    std::vector<double> all_ratios;  // per eligible term, for density plots
    std::vector<std::string> omitted_categories;
    double overall_mean = 0;
};

inline RatioTable ratio_table(const ComparisonRun& run, const std::string& proxy_name,
                              double min_abs_t = 0.1) {
    auto it = run.proxy_fits.find(proxy_name);
    if (it == run.proxy_fits.end()) throw ConfigError("no proxy fit named " + proxy_name);
    const RegressionFit& proxy = it->second;
    const RegressionFit& truth = run.true_fit;

    RatioTable out;
    std::map<std::string, double> sums;
    std::set<std::string> seen_categories;
    double total = 0;
    std::size_t n_total = 0;
    for (std::size_t i = 0; i < truth.terms.size(); ++i) {
        const std::string& term = truth.terms[i];
        if (term == "(intercept)") continue;
        const int j = proxy.term_index(term);
        if (j < 0) continue;
        const std::string cat = run.term_categories.count(term) ? run.term_categories.at(term) : "other";
        seen_categories.insert(cat);
        if (std::abs(truth.tstat(i)) < min_abs_t) continue;  // denominator too noisy
        const double ratio = proxy.coef(static_cast<Eigen::Index>(j)) / truth.coef(static_cast<Eigen::Index>(i));
        sums[cat] += ratio;
        ++out.n_terms[cat];
        out.all_ratios.push_back(ratio);
        total += ratio;
        ++n_total;
    }
    for (const auto& [cat, s] : sums)
        out.mean_by_category[cat] = s / static_cast<double>(out.n_terms[cat]);
    for (const auto& cat : seen_categories)
        if (!out.mean_by_category.count(cat)) out.omitted_categories.push_back(cat);
    out.overall_mean = n_total == 0 ? 0.0 : total / static_cast<double>(n_total);
    return out;
}

struct RatioDensity {
    KdeResult kde;
    double integral = 0;
    std::vector<std::string> warnings;
};

inline RatioDensity ratio_density(std::span<const double> ratios, double bandwidth = 0) {
    if (ratios.size() < 2) throw DataError("ratio_density: need at least 2 ratios");
    RatioDensity out;
    out.kde = gaussian_kde(ratios, bandwidth);
    if (out.kde.degenerate) {
        out.warnings.push_back("zero-variance input: degenerate spike density");
        out.integral = 1.0;
        return out;
    }
    out.integral = trapezoid_integral(out.kde.grid, out.kde.density);
    if (std::abs(out.integral - 1.0) > 1e-3)
        out.warnings.push_back("density integral off unit mass: " + format_double(out.integral));
    return out;
}

// ----------------------------------------------------------------------------
// Persistence of occupational income across census years: per year, the
// cell-size-weighted R² of that year's occupation medians on the base-year
// score, plus the Spearman rank correlation.
// ----------------------------------------------------------------------------
struct YearPersistence {
    int year = 0;
    double r_squared = 0;
    double spearman = 0;
    std::size_t n_occupations = 0;
    bool skipped = false;
    std::string note;
};

inline std::vector<YearPersistence> persistence_stats(
    const ScoreTable& base, const std::map<int, std::vector<PersonRecord>>& records_by_year) {
    if (base.kind != ScoreKind::occscore)
        throw ConfigError("persistence_stats: base table must be occscore kind");
    std::vector<YearPersistence> out;
    for (const auto& [year, records] : records_by_year) {
        YearPersistence yp;
        yp.year = year;
        // per-occupation weighted median earnings and cell sizes
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> cells;
        for (const auto& r : records)
            if (r.earnings && *r.earnings > 0) {
                cells[r.occupation].first.push_back(*r.earnings);
                cells[r.occupation].second.push_back(r.weight);
            }
        std::vector<double> base_score, year_median, cell_n;
        for (const auto& [occ, vw] : cells) {
            auto it = base.occ_medians.find(occ);
            if (it == base.occ_medians.end()) continue;
            base_score.push_back(it->second.median);
            year_median.push_back(weighted_median(vw.first, vw.second));
            cell_n.push_back(static_cast<double>(vw.first.size()));
        }
        yp.n_occupations = base_score.size();
        if (yp.n_occupations < 3) {
            yp.skipped = true;
            yp.note = "fewer than 3 common occupations";
            out.push_back(yp);
            continue;
        }
        // weighted simple regression of year medians on base scores
        DataTable t(base_score.size());
        t.add_numeric("base_score", base_score);
        Formula f;
        f.continuous = {"base_score"};
        const DesignMatrix d = build_design(t, f);
        Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(year_median.data(), static_cast<Eigen::Index>(year_median.size()));
        Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(cell_n.data(), static_cast<Eigen::Index>(cell_n.size()));
        const RegressionFit fit = ols_fit(d, y, &w);
        yp.r_squared = fit.r_squared;
        yp.spearman = spearman_rho(base_score, year_median);
        out.push_back(yp);
    }
    return out;
}

}  // namespace occlab
