#include <catch2/catch_amalgamated.hpp>

#include <occlab/common.hpp>
#include <occlab/scores.hpp>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

using namespace occlab;

namespace {

PersonRecord rec(const std::string& occ, double earnings, Sex sex = Sex::male,
                 double weight = 1.0) {
    PersonRecord r;
    r.age = 40;
    r.sex = sex;
    r.race = Race::white;
    r.state = "s1";
    r.region = "g1";
    r.occupation = occ;
    r.earnings = earnings;
    r.weight = weight;
    return r;
}

// one-industry sample with real variation in every lido factor
std::vector<PersonRecord> lido_sample(std::size_t n, std::uint64_t seed,
                                      const std::string& industry) {
    Rng rng(seed);
    const char* occs[3] = {"o1", "o2", "o3"};
    const char* states[4] = {"s1", "s2", "s3", "s4"};
    std::vector<PersonRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        PersonRecord r;
        r.record_id = "t" + std::to_string(i + 1);
        r.age = 25 + static_cast<int>(rng.bounded(40));
        r.sex = rng.bounded(2) == 0 ? Sex::male : Sex::female;
        const auto race_draw = rng.bounded(3);
        r.race = race_draw == 0 ? Race::white : (race_draw == 1 ? Race::black : Race::other);
        const auto st = rng.bounded(4);
        r.state = states[st];
        r.region = st < 2 ? "g1" : "g2";
        const auto occ = rng.bounded(3);
        r.occupation = occs[occ];
        r.industry = industry;
        const double log_e = 2.0 + 0.3 * static_cast<double>(occ) +
                             (r.sex == Sex::female ? -0.2 : 0.0) + 0.1 * rng.normal();
        r.earnings = std::exp(log_e);
        r.weight = 1.0;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST_CASE("pooled occscore takes the weighted median per occupation") {
    std::vector<PersonRecord> recs{rec("a", 10), rec("a", 20), rec("a", 30),
                                   rec("b", 5),  rec("b", 15)};
    OccScoreConfig cfg;
    cfg.weighting = OccWeighting::pooled;
    cfg.base_year = 1950;
    const ScoreTable t = build_occscore(recs, cfg);
    CHECK(t.kind == ScoreKind::occscore);
    CHECK(t.base_year == 1950);
    CHECK(t.occ_medians.at("a").median == 20.0);
    CHECK(t.occ_medians.at("a").n == 3);
    CHECK(t.occ_medians.at("b").median == 10.0);  // midpoint of {5, 15}
    CHECK(t.coverage.n_used == 5);
}

TEST_CASE("pooled occscore respects record weights") {
    // {10 w1, 30 w3}: cumulative half falls inside 30
    std::vector<PersonRecord> recs{rec("a", 10, Sex::male, 1.0), rec("a", 30, Sex::male, 3.0)};
    OccScoreConfig cfg;
    cfg.weighting = OccWeighting::pooled;
    const ScoreTable t = build_occscore(recs, cfg);
    CHECK(t.occ_medians.at("a").median == 30.0);
}

TEST_CASE("sex-weighted occscore combines per-sex medians by cell mass") {
    // males: three at 30 (median 30, mass 3); females: one at 10 (mass 1)
    // combined = 0.75 * 30 + 0.25 * 10 = 25
    std::vector<PersonRecord> recs{rec("a", 30, Sex::male), rec("a", 30, Sex::male),
                                   rec("a", 30, Sex::male), rec("a", 10, Sex::female)};
    OccScoreConfig cfg;
    cfg.weighting = OccWeighting::sex_weighted;
    const ScoreTable t = build_occscore(recs, cfg);
    CHECK(t.occ_medians.at("a").median == Catch::Approx(25.0).margin(1e-12));
}

TEST_CASE("single-sex occupation works under sex weighting") {
    std::vector<PersonRecord> recs{rec("a", 10, Sex::male), rec("a", 20, Sex::male)};
    const ScoreTable t = build_occscore(recs);
    CHECK(t.occ_medians.at("a").median == 15.0);
}

TEST_CASE("occscore drops records without positive earnings") {
    std::vector<PersonRecord> recs{rec("a", 10), rec("a", 20), rec("a", 30)};
    recs[1].earnings = 0.0;
    recs[2].earnings.reset();
    const ScoreTable t = build_occscore(recs);
    CHECK(t.occ_medians.at("a").median == 10.0);
    CHECK(t.coverage.n_skipped_nonpositive_earnings == 2);
    CHECK(t.coverage.n_used == 1);

    std::vector<PersonRecord> empty{rec("a", 0.0)};
    CHECK_THROWS_AS(build_occscore(empty), DataError);
}

TEST_CASE("small cells are omitted with a warning") {
    std::vector<PersonRecord> recs{rec("a", 10), rec("a", 20), rec("b", 5)};
    OccScoreConfig cfg;
    cfg.min_cell_n = 2;
    const ScoreTable t = build_occscore(recs, cfg);
    CHECK(t.occ_medians.count("a") == 1);
    CHECK(t.occ_medians.count("b") == 0);
    CHECK(t.coverage.n_omitted_occupations == 1);
    REQUIRE_FALSE(t.warnings.empty());
    CHECK(t.warnings[0].find("b") != std::string::npos);

    cfg.min_cell_n = 10;
    CHECK_THROWS_AS(build_occscore(recs, cfg), DataError);
}

TEST_CASE("lido column layout matches the closed-form count") {
    const auto sample = lido_sample(500, 11, "i1");
    std::vector<const PersonRecord*> rows;
    for (const auto& r : sample) rows.push_back(&r);
    const LidoLevels lv = lido_levels(rows);
    // 3 occs, 4 states, 2 regions in the generator
    CHECK(lv.occ_nonref.size() == 2);
    CHECK(lv.state_nonref.size() == 3);
    CHECK(lv.region_nonref.size() == 1);
    CHECK(lv.occ_seen.size() == 3);

    for (int d = 1; d <= 6; ++d) {
        const auto cols = lido_columns(lv, d);
        // closed form assumes all 4 regions; adjust for the 2 present here:
        // each missing region removes one sex_region, region_white, region_black
        const std::size_t expect = lido_possible_covariates(3, 4, d) - 2 * 3;
        CHECK(cols.size() == expect);
    }

    // names are unique
    const auto cols = lido_columns(lv, 4);
    std::set<std::string> names;
    for (const auto& c : cols) names.insert(c.name);
    CHECK(names.size() == cols.size());
}

TEST_CASE("closed-form possible-covariate count") {
    // occupations 8, states 20, degree 4: 3*7 + 4 + 20 + 13 = 58
    CHECK(lido_possible_covariates(8, 20, 4) == 58);
    CHECK(lido_possible_covariates(1, 1, 1) == 15);
}

TEST_CASE("lido fit recovers occupation contrasts") {
    auto sample = lido_sample(600, 21, "i1");
    LidoConfig cfg;
    cfg.min_industry_n = 30;
    cfg.cv_folds = 5;
    cfg.grid_points = 40;
    cfg.seed = 3;
    cfg.base_year = 1950;
    const ScoreTable t = build_lido(sample, cfg);
    CHECK(t.kind == ScoreKind::lido);
    REQUIRE(t.industry_models.count("i1") == 1);
    const LidoModel& m = t.industry_models.at("i1");
    REQUIRE_FALSE(m.fallback);
    CHECK(m.n_obs == 600);
    CHECK(m.cv.seed == detail::derive_seed_str(cfg.seed, "i1"));
    CHECK(m.fit.lambda == m.cv.lambda_min);

    // predicted log-earnings gap between occupations ~ 0.3 at fixed covariates
    PersonRecord base = sample[0];
    base.race = Race::white;
    base.sex = Sex::male;
    base.state = "s1";
    base.region = "g1";
    base.age = 40;
    ScorePolicy policy;
    base.occupation = "o1";
    const auto v1 = score_one(t, base, policy, nullptr);
    base.occupation = "o3";
    const auto v3 = score_one(t, base, policy, nullptr);
    REQUIRE(v1.has_value());
    REQUIRE(v3.has_value());
    CHECK(*v3 - *v1 == Catch::Approx(0.6).margin(0.15));
}

TEST_CASE("lido build is bitwise stable across thread counts") {
    auto sample = lido_sample(200, 41, "i1");
    auto more = lido_sample(180, 42, "i2");
    auto third = lido_sample(160, 43, "i3");
    sample.insert(sample.end(), more.begin(), more.end());
    sample.insert(sample.end(), third.begin(), third.end());

    LidoConfig cfg;
    cfg.cv_folds = 4;
    cfg.grid_points = 25;
    cfg.seed = 9;
    cfg.n_threads = 1;
    const ScoreTable a = build_lido(sample, cfg);
    cfg.n_threads = 4;
    const ScoreTable b = build_lido(sample, cfg);

    REQUIRE(a.industry_models.size() == b.industry_models.size());
    for (const auto& [code, ma] : a.industry_models) {
        const LidoModel& mb = b.industry_models.at(code);
        REQUIRE(ma.fit.coef.size() == mb.fit.coef.size());
        CHECK(std::memcmp(ma.fit.coef.data(), mb.fit.coef.data(),
                          sizeof(double) * static_cast<std::size_t>(ma.fit.coef.size())) == 0);
        CHECK(ma.fit.intercept == mb.fit.intercept);
        CHECK(ma.cv.lambda_min == mb.cv.lambda_min);
    }
}

TEST_CASE("per-industry seeds differ so industries are independent draws") {
    CHECK(detail::derive_seed_str(1, "i1") != detail::derive_seed_str(1, "i2"));
    CHECK(detail::derive_seed_str(1, "i1") != detail::derive_seed_str(2, "i1"));
    CHECK(detail::derive_seed_str(1, "i1") == detail::derive_seed_str(1, "i1"));
}

TEST_CASE("small industry falls back to occupation median logs") {
    auto sample = lido_sample(300, 51, "big");
    auto tiny = lido_sample(10, 52, "tiny");
    sample.insert(sample.end(), tiny.begin(), tiny.end());

    LidoConfig cfg;
    cfg.min_industry_n = 30;
    cfg.cv_folds = 5;
    cfg.grid_points = 25;
    const ScoreTable t = build_lido(sample, cfg);
    REQUIRE(t.industry_models.count("tiny") == 1);
    const LidoModel& m = t.industry_models.at("tiny");
    CHECK(m.fallback);
    CHECK(t.coverage.n_fallback_industries == 1);
    CHECK_FALSE(m.occ_median_log.empty());

    // fallback scoring returns the stored median log
    PersonRecord probe = tiny[0];
    std::string reason;
    const auto v = score_one(t, probe, {}, &reason);
    REQUIRE(v.has_value());
    CHECK(*v == m.occ_median_log.at(probe.occupation));
}

TEST_CASE("all industries under threshold is fatal") {
    const auto sample = lido_sample(10, 61, "only");
    LidoConfig cfg;
    cfg.min_industry_n = 30;
    CHECK_THROWS_AS(build_lido(sample, cfg), DataError);
}

TEST_CASE("lido skips records without industry or positive earnings") {
    auto sample = lido_sample(120, 71, "i1");
    sample[0].industry.reset();
    sample[1].earnings = 0.0;
    LidoConfig cfg;
    cfg.cv_folds = 4;
    cfg.grid_points = 20;
    const ScoreTable t = build_lido(sample, cfg);
    CHECK(t.coverage.n_skipped_no_industry == 1);
    CHECK(t.coverage.n_skipped_nonpositive_earnings == 1);
    CHECK(t.coverage.n_used == 118);
}

TEST_CASE("lido config validation") {
    const auto sample = lido_sample(100, 81, "i1");
    LidoConfig cfg;
    cfg.age_poly_degree = 0;
    CHECK_THROWS_AS(build_lido(sample, cfg), ConfigError);
    cfg.age_poly_degree = 7;
    CHECK_THROWS_AS(build_lido(sample, cfg), ConfigError);
    cfg.age_poly_degree = 4;
    cfg.cv_folds = 1;
    CHECK_THROWS_AS(build_lido(sample, cfg), ConfigError);
}

TEST_CASE("constant design falls back inside fit_lido_industry") {
    std::vector<PersonRecord> same;
    Rng rng(91);
    for (int i = 0; i < 50; ++i) {
        PersonRecord r = rec("only", std::exp(1.0 + 0.2 * rng.normal()));
        r.industry = "flat";
        same.push_back(r);
    }
    std::vector<const PersonRecord*> rows;
    for (const auto& r : same) rows.push_back(&r);
    LidoConfig cfg;
    const LidoModel m = fit_lido_industry("flat", rows, cfg);
    CHECK(m.fallback);
    REQUIRE(m.occ_median_log.count("only") == 1);
    std::vector<double> logs, w;
    for (const auto& r : same) {
        logs.push_back(std::log(*r.earnings));
        w.push_back(1.0);
    }
    CHECK(m.occ_median_log.at("only") == weighted_median(logs, w));
}

TEST_CASE("scoring against an occscore table") {
    std::vector<PersonRecord> recs{rec("a", 10), rec("a", 30), rec("b", 20)};
    const ScoreTable t = build_occscore(recs);
    PersonRecord hit = rec("a", 0);
    PersonRecord miss = rec("zz", 0);
    std::string reason;
    const auto v = score_one(t, hit, {}, &reason);
    REQUIRE(v.has_value());
    CHECK(*v == 20.0);
    const auto none = score_one(t, miss, {}, &reason);
    CHECK_FALSE(none.has_value());
    CHECK(reason == "occupation not in table");

    auto [scores, cov] = score_records(t, recs);
    CHECK(cov.n_scored == 3);
    CHECK(cov.n_null == 0);
    REQUIRE(scores.size() == 3);
    CHECK(*scores[2] == 20.0);
}

TEST_CASE("unseen levels score at the reference unless the policy forbids it") {
    auto sample = lido_sample(300, 95, "i1");
    LidoConfig cfg;
    cfg.cv_folds = 4;
    cfg.grid_points = 20;
    const ScoreTable t = build_lido(sample, cfg);

    PersonRecord stranger = sample[0];
    stranger.occupation = "never-seen";
    std::string reason;
    ScorePolicy open;
    const auto v = score_one(t, stranger, open, &reason);
    CHECK(v.has_value());  // treated as the reference occupation

    ScorePolicy strict;
    strict.allow_unseen_as_reference = false;
    const auto blocked = score_one(t, stranger, strict, &reason);
    CHECK_FALSE(blocked.has_value());
    CHECK(reason == "unseen occupation");

    PersonRecord lost = sample[0];
    lost.industry = "no-such-industry";
    const auto miss = score_one(t, lost, open, &reason);
    CHECK_FALSE(miss.has_value());
    CHECK(reason == "industry not in table");

    PersonRecord nowhere = sample[0];
    nowhere.industry.reset();
    const auto noind = score_one(t, nowhere, open, &reason);
    CHECK_FALSE(noind.has_value());
    CHECK(reason == "missing industry");

    const std::vector<PersonRecord> probes{stranger, lost, nowhere};
    auto [scores, cov] = score_records(t, probes, strict);
    CHECK(cov.n_scored == 0);
    CHECK(cov.n_null == 3);
    CHECK(cov.null_reasons.at("unseen occupation") == 1);
    CHECK(cov.null_reasons.at("industry not in table") == 1);
    CHECK(cov.null_reasons.at("missing industry") == 1);
}

TEST_CASE("score kind round-trips through strings") {
    CHECK(score_kind_from_string("occscore") == ScoreKind::occscore);
    CHECK(score_kind_from_string("lido") == ScoreKind::lido);
    CHECK_THROWS_AS(score_kind_from_string("nope"), ConfigError);
    CHECK(to_string(ScoreKind::lido) == "lido");
    CHECK(occ_weighting_from_string("pooled") == OccWeighting::pooled);
    CHECK_THROWS_AS(occ_weighting_from_string("x"), ConfigError);
}
