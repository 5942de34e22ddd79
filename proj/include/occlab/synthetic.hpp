#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "occlab/common.hpp"
#include "occlab/io.hpp"
#include "occlab/microdata.hpp"

namespace occlab {

// ============================================================================
// SYNTHETIC POPULATION
//
// Benchmark generator with pure-label occupations: occupation is an
// equal-frequency grouping of a demographic sorting index within industry,
// and earnings never load on occupation directly. True regression gaps
// therefore equal the generator coefficients exactly, which is what makes
// proxy-bias assertions checkable.
// ============================================================================

struct SyntheticConfig {
    int n_states = 20;
    int n_industries = 6;
    int occ_per_industry = 8;
    // population-level effects (state intercepts, family effects) are drawn
    // once from this seed so that samples drawn with different seeds share
    // the same underlying population
    std::uint64_t population_seed = 77;
    int year = 1950;
    double gap_female = -0.5;
    double gap_black = -0.3;
    double gap_other = -0.15;
};

namespace detail {

inline std::string two_digit_code(const char* prefix, int index1) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%02d", prefix, index1);
    return buf;
}

}  // namespace detail

inline std::string synthetic_state_code(int s) { return detail::two_digit_code("s", s + 1); }
inline std::string synthetic_occ_code(int o) { return detail::two_digit_code("o", o + 1); }
inline std::string synthetic_industry_code(int k) { return "i" + std::to_string(k + 1); }

// states are dealt into 4 regions in index order
inline std::string synthetic_region_code(int state, int n_states) {
    const int per = (n_states + 3) / 4;
    return "r" + std::to_string(state / per + 1);
}

inline std::vector<PersonRecord> gen_synthetic_population(std::size_t n, std::uint64_t seed,
                                                          const SyntheticConfig& cfg = {}) {
    if (cfg.n_states < 1 || cfg.n_industries < 1 || cfg.occ_per_industry < 2)
        throw ConfigError("synthetic: bad dimension");

    Rng pop_rng(cfg.population_seed);
    std::vector<double> u_state_y(static_cast<std::size_t>(cfg.n_states));
    std::vector<double> u_state_o(static_cast<std::size_t>(cfg.n_states));
    for (auto& v : u_state_y) v = pop_rng.normal(0.0, 0.04);
    for (auto& v : u_state_o) v = pop_rng.normal(0.0, 0.35);
    double fam_eff[5];
    for (auto& v : fam_eff) v = pop_rng.normal(0.0, 0.05);

    Rng rng(seed);
    struct Draw {
        int state, female, race, age, fam, ind;
        double sort_index, log_earn;
    };
    std::vector<Draw> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        Draw& p = d[i];
        p.state = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(cfg.n_states)));
        p.female = static_cast<int>(rng.bounded(2));
        const double u = rng.uniform();
        p.race = u < 0.80 ? 0 : (u < 0.92 ? 1 : 2);
        p.age = 25 + static_cast<int>(rng.bounded(40));
        p.fam = static_cast<int>(rng.bounded(5));
        p.ind = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(cfg.n_industries)));
        const double black = p.race == 1 ? 1.0 : 0.0;
        const double other = p.race == 2 ? 1.0 : 0.0;
        p.sort_index = -0.5 * p.female - 0.4 * black - 0.2 * other +
                       u_state_o[static_cast<std::size_t>(p.state)] +
                       0.10 * (p.age - 45) / 10.0 + rng.normal(0.0, 0.6);
        const double a = (p.age - 40) / 10.0;
        p.log_earn = 2.0 + cfg.gap_black * black + cfg.gap_other * other +
                     cfg.gap_female * p.female + 0.30 * a - 0.12 * a * a +
                     u_state_y[static_cast<std::size_t>(p.state)] + fam_eff[p.fam] +
                     rng.normal(0.0, 0.5);
    }

    // occupation = equal-frequency bin of the sorting index within industry
    std::vector<int> occ(n, 0);
    for (int k = 0; k < cfg.n_industries; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (d[i].ind == k) members.push_back(i);
        if (members.empty()) continue;
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return d[a].sort_index < d[b].sort_index;
        });
        const std::size_t m = members.size();
        for (std::size_t r = 0; r < m; ++r) {
            const int b = static_cast<int>(r * static_cast<std::size_t>(cfg.occ_per_industry) / m);
            occ[members[r]] = k * cfg.occ_per_industry + b;
        }
    }

    std::vector<PersonRecord> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Draw& p = d[i];
        PersonRecord& r = out[i];
        r.record_id = "g" + std::to_string(i + 1);
        r.year = cfg.year;
        r.age = p.age;
        r.sex = p.female ? Sex::female : Sex::male;
        r.race = p.race == 0 ? Race::white : (p.race == 1 ? Race::black : Race::other);
        r.state = synthetic_state_code(p.state);
        r.region = synthetic_region_code(p.state, cfg.n_states);
        r.birthplace = r.state;
        r.nativity = true;
        r.industry = synthetic_industry_code(p.ind);
        r.occupation = synthetic_occ_code(occ[i]);
        r.earnings = std::exp(p.log_earn);
        r.in_labor_force = true;
        r.farm_status = false;
        r.family_size = p.fam + 1;
        r.marital_status = "married";
        r.n_families_in_household = 1;
        r.relation_to_head = "head";
        r.weight = 1.0;
    }
    return out;
}

// schema matching write_microdata_tsv output
inline IngestSchema synthetic_schema(const SyntheticConfig& cfg = {}) {
    IngestSchema s;
    const char* fields[] = {"record_id", "year",           "age",
                            "sex",       "race",           "state",
                            "birthplace", "nativity",      "industry",
                            "occupation", "earnings",      "in_labor_force",
                            "farm_status", "family_size",  "marital_status",
                            "n_families_in_household",     "relation_to_head",
                            "weight"};
    for (const char* f : fields) s.columns[f] = f;
    s.sex_codes = {{"1", Sex::male}, {"2", Sex::female}};
    s.race_codes = {{"1", Race::white}, {"2", Race::black}, {"3", Race::other}};
    for (int i = 0; i < cfg.n_states; ++i)
        s.region_of_state[synthetic_state_code(i)] = synthetic_region_code(i, cfg.n_states);
    s.occupation_scheme = "occ1950";
    return s;
}

inline const std::vector<std::string>& microdata_columns() {
    static const std::vector<std::string> cols = {
        "record_id", "year", "age", "sex", "race", "state", "birthplace", "nativity",
        "industry", "occupation", "earnings", "in_labor_force", "farm_status", "family_size",
        "marital_status", "n_families_in_household", "relation_to_head", "weight"};
    return cols;
}

inline std::vector<std::string> microdata_row(const PersonRecord& r) {
    return {r.record_id, std::to_string(r.year), std::to_string(r.age),
            r.sex == Sex::male ? "1" : "2",
            r.race == Race::white ? "1" : (r.race == Race::black ? "2" : "3"),
            r.state, r.birthplace, r.nativity ? "1" : "0",
            r.industry ? *r.industry : "", r.occupation,
            r.earnings ? format_exact(*r.earnings) : "",
            r.in_labor_force ? "1" : "0", r.farm_status ? "1" : "0",
            std::to_string(r.family_size), r.marital_status,
            std::to_string(r.n_families_in_household), r.relation_to_head,
            format_exact(r.weight)};
}

inline void write_microdata_tsv(const std::string& path,
                                std::span<const PersonRecord> records) {
    TableWriter w(path, microdata_columns());
    for (const auto& r : records) w.row_strings(microdata_row(r));
}

}  // namespace occlab
