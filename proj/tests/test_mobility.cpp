#include <catch2/catch_amalgamated.hpp>

#include <occlab/mobility.hpp>
#include <occlab/scores.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

using namespace occlab;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("occlab_mob_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

IngestSchema pair_schema() {
    IngestSchema s;
    s.columns = {{"age", "age"},  {"sex", "sex"}, {"race", "race"},
                 {"state", "st"}, {"occupation", "occ"}, {"year", "yr"},
                 {"relation_to_head", "rel"}, {"earnings", "earn"}};
    s.sex_codes = {{"1", Sex::male}, {"2", Sex::female}};
    s.race_codes = {{"1", Race::white}, {"2", Race::black}};
    s.region_of_state = {{"AA", "north"}, {"BB", "south"}};
    return s;
}

std::string pair_header() {
    return "father_age\tfather_sex\tfather_race\tfather_st\tfather_occ\tfather_yr\tfather_rel\t"
           "father_earn\tson_age\tson_sex\tson_race\tson_st\tson_occ\tson_yr\tson_rel\tson_earn\n";
}

PersonRecord occ_rec(const std::string& occ, double earnings) {
    PersonRecord r;
    r.age = 40;
    r.sex = Sex::male;
    r.race = Race::white;
    r.state = "AA";
    r.occupation = occ;
    r.earnings = earnings;
    return r;
}

}  // namespace

TEST_CASE("linked pairs load with both sides screened") {
    TempDir dir;
    std::string body = pair_header();
    // good: son is 10 in the father's census year
    body += "40\t1\t1\tAA\tfarmer\t1910\thead\t900\t30\t1\t1\tBB\tclerk\t1930\tchild\t400\n";
    // father side fails to parse
    body += "40\t9\t1\tAA\tfarmer\t1910\thead\t900\t30\t1\t1\tBB\tclerk\t1930\tchild\t400\n";
    // son side fails to parse
    body += "40\t1\t1\tAA\tfarmer\t1910\thead\t900\t30\t1\t1\tBB\t\t1930\tchild\t400\n";
    // son not a child of the head
    body += "40\t1\t1\tAA\tfarmer\t1910\thead\t900\t30\t1\t1\tBB\tclerk\t1930\tlodger\t400\n";
    // son would have been 20 in the father's year
    body += "40\t1\t1\tAA\tfarmer\t1910\thead\t900\t40\t1\t1\tBB\tclerk\t1930\tchild\t400\n";
    write_file(dir.file("pairs.tsv"), body);

    const auto [pairs, rep] = load_linked_pairs(dir.file("pairs.tsv"), pair_schema());
    CHECK(rep.n_parsed == 1);
    CHECK(rep.n_rejected == 4);
    CHECK(rep.reject_reasons.at("father: unknown code: sex") == 1);
    CHECK(rep.reject_reasons.at("son: missing occupation") == 1);
    CHECK(rep.reject_reasons.at("son not a child of the household head") == 1);
    CHECK(rep.reject_reasons.at("son older than link limit in first year") == 1);

    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].father.occupation == "farmer");
    CHECK(pairs[0].father.year == 1910);
    CHECK(*pairs[0].father.earnings == 900.0);
    CHECK(pairs[0].son.occupation == "clerk");
    CHECK(pairs[0].son.region == "south");

    // a looser age-at-link limit admits the older son
    const auto [loose, rep2] = load_linked_pairs(dir.file("pairs.tsv"), pair_schema(), 25);
    CHECK(loose.size() == 2);
    CHECK(rep2.n_rejected == 3);
}

TEST_CASE("pair files must carry both column groups") {
    TempDir dir;
    // no son_* columns at all
    write_file(dir.file("half.tsv"),
               "father_age\tfather_sex\tfather_race\tfather_st\tfather_occ\tfather_yr\t"
               "father_rel\tfather_earn\n40\t1\t1\tAA\tfarmer\t1910\thead\t900\n");
    CHECK_THROWS_AS(load_linked_pairs(dir.file("half.tsv"), pair_schema()), DataError);
}

TEST_CASE("attach scores fills both sides where scoreable") {
    std::vector<PersonRecord> base{occ_rec("farmer", 10), occ_rec("farmer", 10),
                                   occ_rec("clerk", 20), occ_rec("clerk", 20)};
    const ScoreTable table = build_occscore(base);

    std::vector<LinkedPair> pairs(2);
    pairs[0].father = occ_rec("farmer", 0);
    pairs[0].son = occ_rec("clerk", 0);
    pairs[1].father = occ_rec("zz", 0);  // unknown occupation: no score
    pairs[1].son = occ_rec("farmer", 0);

    attach_scores(pairs, "occscore", table);
    CHECK(pairs[0].father_scores.at("occscore") == 10.0);
    CHECK(pairs[0].son_scores.at("occscore") == 20.0);
    CHECK(pairs[1].father_scores.count("occscore") == 0);
    CHECK(pairs[1].son_scores.at("occscore") == 10.0);
}

TEST_CASE("elasticity is exact on noise-free log-linear pairs") {
    std::vector<LinkedPair> pairs(12);
    for (int i = 0; i < 12; ++i) {
        const double x = 1.0 + 0.25 * i;
        pairs[static_cast<std::size_t>(i)].father_scores["occscore"] = std::exp(x);
        pairs[static_cast<std::size_t>(i)].son_scores["occscore"] = std::exp(1.0 + 0.5 * x);
    }
    const ElasticityResult res = estimate_elasticity(pairs, "occscore", true);
    CHECK(res.elasticity == Catch::Approx(0.5).margin(1e-10));
    CHECK(res.n_pairs == 12);
    CHECK(res.n_dropped_incomplete == 0);
    CHECK(res.fit.coef_of("father_score") == res.elasticity);

    // without the log transform the slope is read off the raw scores
    std::vector<LinkedPair> lin(12);
    for (int i = 0; i < 12; ++i) {
        const double x = static_cast<double>(i);
        lin[static_cast<std::size_t>(i)].father_scores["s"] = x;
        lin[static_cast<std::size_t>(i)].son_scores["s"] = 2.0 + 0.3 * x;
    }
    CHECK(estimate_elasticity(lin, "s", false).elasticity == Catch::Approx(0.3).margin(1e-10));
}

TEST_CASE("elasticity sample is complete-case across every attached kind") {
    std::vector<LinkedPair> pairs(15);
    for (int i = 0; i < 15; ++i) {
        const double x = 1.0 + 0.1 * i;
        pairs[static_cast<std::size_t>(i)].father_scores["occscore"] = std::exp(x);
        pairs[static_cast<std::size_t>(i)].son_scores["occscore"] = std::exp(0.5 * x);
        if (i < 12) {  // last three lack the second kind on the son side
            pairs[static_cast<std::size_t>(i)].father_scores["lido"] = std::exp(x);
            pairs[static_cast<std::size_t>(i)].son_scores["lido"] = std::exp(0.9 * x);
        } else {
            pairs[static_cast<std::size_t>(i)].father_scores["lido"] = std::exp(x);
        }
    }
    const ElasticityResult res = estimate_elasticity(pairs, "occscore", true);
    CHECK(res.n_pairs == 12);
    CHECK(res.n_dropped_incomplete == 3);
    CHECK(res.elasticity == Catch::Approx(0.5).margin(1e-10));

    CHECK_THROWS_AS(estimate_elasticity(pairs, "nope", true), ConfigError);
}

TEST_CASE("nonpositive scores drop out of log regressions") {
    std::vector<LinkedPair> pairs(11);
    for (int i = 0; i < 11; ++i) {
        const double x = 1.0 + 0.1 * i;
        pairs[static_cast<std::size_t>(i)].father_scores["s"] = std::exp(x);
        pairs[static_cast<std::size_t>(i)].son_scores["s"] = std::exp(0.4 * x);
    }
    pairs[10].father_scores["s"] = 0.0;
    const ElasticityResult res = estimate_elasticity(pairs, "s", true);
    CHECK(res.n_pairs == 10);
    CHECK(res.n_dropped_incomplete == 1);

    std::vector<LinkedPair> few(pairs.begin(), pairs.begin() + 9);
    CHECK_THROWS_AS(estimate_elasticity(few, "s", true), DataError);
}

TEST_CASE("synthetic pairs recover their transmission parameter") {
    const auto pairs = make_synthetic_pairs(20000, 0.5, 0.0, 42);
    const ElasticityResult res = estimate_elasticity(pairs, "occscore", true);
    CHECK(res.elasticity == Catch::Approx(0.5).margin(0.02));

    // determinism
    const auto again = make_synthetic_pairs(20000, 0.5, 0.0, 42);
    CHECK(again[7].father_scores.at("occscore") == pairs[7].father_scores.at("occscore"));
    CHECK(again[999].son_scores.at("occscore") == pairs[999].son_scores.at("occscore"));
    const auto other = make_synthetic_pairs(200, 0.5, 0.0, 43);
    CHECK(other[7].father_scores.at("occscore") != pairs[7].father_scores.at("occscore"));
}

TEST_CASE("mobility simulator matches its own plim") {
    MobilityErrorParams p;
    p.beta1 = 0.5;
    p.sigma_father_y = 1.0;

    SECTION("uncorrelated error attenuates") {
        p.tilde_beta1 = 0.0;
        p.sigma_e_father = 1.0;
        const auto r = simulate_mobility_bias(p, 200000, 7);
        CHECK(r.plim == Catch::Approx(0.25));
        CHECK(r.cov_term == Catch::Approx(-0.5));
        CHECK(r.beta_hat == Catch::Approx(0.25).margin(0.02));
        CHECK(r.note == "negative error covariance term: slope biased downward");
    }
    SECTION("matched error transmission leaves no bias") {
        p.tilde_beta1 = 0.5;
        p.sigma_e_father = 1.0;
        const auto r = simulate_mobility_bias(p, 200000, 7);
        CHECK(r.plim == Catch::Approx(0.5));
        CHECK(r.cov_term == 0.0);
        CHECK(r.beta_hat == Catch::Approx(0.5).margin(0.02));
        CHECK(r.note == "error transmission matches income transmission; no asymptotic bias");
    }
    SECTION("over-transmission biases upward") {
        p.tilde_beta1 = 0.8;
        p.sigma_e_father = 1.0;
        const auto r = simulate_mobility_bias(p, 200000, 7);
        CHECK(r.plim == Catch::Approx(0.65));
        CHECK(r.cov_term == Catch::Approx(0.3));
        CHECK(r.note == "positive error covariance term: slope biased upward");
    }
    SECTION("no error at all recovers beta1") {
        const auto r = simulate_mobility_bias(p, 200000, 7);
        CHECK(r.plim == 0.5);
        CHECK(r.beta_hat == Catch::Approx(0.5).margin(0.02));
    }
}

TEST_CASE("mobility simulator is deterministic and validated") {
    MobilityErrorParams p;
    p.sigma_e_father = 0.5;
    const auto a = simulate_mobility_bias(p, 5000, 11);
    const auto b = simulate_mobility_bias(p, 5000, 11);
    CHECK(a.beta_hat == b.beta_hat);
    const auto c = simulate_mobility_bias(p, 5000, 12);
    CHECK(a.beta_hat != c.beta_hat);

    MobilityErrorParams bad = p;
    bad.sigma_nu = -1;
    CHECK_THROWS_AS(simulate_mobility_bias(bad, 5000, 1), ConfigError);
    bad = p;
    bad.beta1 = 1.2;
    CHECK_THROWS_AS(simulate_mobility_bias(bad, 5000, 1), ConfigError);
    bad.enforce_range = false;
    CHECK_NOTHROW(simulate_mobility_bias(bad, 5000, 1));
    CHECK_THROWS_AS(simulate_mobility_bias(p, 99, 1), ConfigError);

    MobilityErrorParams constant;
    constant.sigma_father_y = 0;
    constant.sigma_e_father = 0;
    CHECK_THROWS_AS(simulate_mobility_bias(constant, 500, 1), NumericError);
}
