#include <catch2/catch_amalgamated.hpp>

#include <occlab/common.hpp>
#include <occlab/score_io.hpp>
#include <occlab/scores.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>
#include <unistd.h>

using namespace occlab;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("occlab_sio_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string dir(const std::string& name) const { return (path / name).string(); }
};

PersonRecord rec(const std::string& occ, double earnings, Sex sex = Sex::male) {
    PersonRecord r;
    r.age = 40;
    r.sex = sex;
    r.race = Race::white;
    r.state = "s1";
    r.region = "g1";
    r.occupation = occ;
    r.earnings = earnings;
    return r;
}

std::vector<PersonRecord> mixed_sample(std::size_t n, std::uint64_t seed,
                                       const std::string& industry) {
    Rng rng(seed);
    const char* occs[3] = {"o1", "o2", "o3"};
    const char* states[3] = {"s1", "s2", "s3"};
    std::vector<PersonRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        PersonRecord r;
        r.age = 25 + static_cast<int>(rng.bounded(40));
        r.sex = rng.bounded(2) == 0 ? Sex::male : Sex::female;
        const auto race = rng.bounded(3);
        r.race = race == 0 ? Race::white : (race == 1 ? Race::black : Race::other);
        const auto st = rng.bounded(3);
        r.state = states[st];
        r.region = st < 2 ? "g1" : "g2";
        r.occupation = occs[rng.bounded(3)];
        r.industry = industry;
        r.earnings = std::exp(2.0 + 0.25 * static_cast<double>(rng.bounded(3)) +
                              0.1 * rng.normal());
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TEST_CASE("occscore table round-trips bitwise") {
    std::vector<PersonRecord> recs{rec("a", 10.125), rec("a", 30.5), rec("b", 1.0 / 3.0),
                                   rec("b", 0.1)};
    const ScoreTable t = build_occscore(recs);
    TempDir td;
    const std::string dir = td.dir("occ");
    save_score_table(t, dir);

    const ScoreTable back = load_score_table(dir);
    CHECK(back.kind == ScoreKind::occscore);
    CHECK(back.base_year == t.base_year);
    REQUIRE(back.occ_medians.size() == t.occ_medians.size());
    for (const auto& [occ, entry] : t.occ_medians) {
        CHECK(back.occ_medians.at(occ).median == entry.median);  // exact, not approx
        CHECK(back.occ_medians.at(occ).n == entry.n);
    }
}

TEST_CASE("lido table round-trips to identical scores") {
    auto sample = mixed_sample(300, 7, "big");
    auto small = mixed_sample(8, 8, "tiny");  // forces one fallback model
    sample.insert(sample.end(), small.begin(), small.end());

    LidoConfig cfg;
    cfg.min_industry_n = 30;
    cfg.cv_folds = 4;
    cfg.grid_points = 20;
    cfg.base_year = 1950;
    const ScoreTable t = build_lido(sample, cfg);
    REQUIRE(t.industry_models.at("tiny").fallback);
    REQUIRE_FALSE(t.industry_models.at("big").fallback);

    TempDir td;
    const std::string dir = td.dir("lido");
    save_score_table(t, dir);
    const ScoreTable back = load_score_table(dir);

    CHECK(back.kind == ScoreKind::lido);
    CHECK(back.base_year == 1950);
    REQUIRE(back.industry_models.size() == 2);
    CHECK(back.industry_models.at("tiny").fallback);
    CHECK(back.industry_models.at("big").cv.lambda_min ==
          t.industry_models.at("big").cv.lambda_min);
    CHECK(back.industry_models.at("big").cv.seed == t.industry_models.at("big").cv.seed);

    const auto eval = mixed_sample(150, 9, "big");
    auto [s1, c1] = score_records(t, eval);
    auto [s2, c2] = score_records(back, eval);
    CHECK(c1.n_scored == c2.n_scored);
    REQUIRE(s1.size() == s2.size());
    for (std::size_t i = 0; i < s1.size(); ++i) {
        REQUIRE(s1[i].has_value() == s2[i].has_value());
        if (s1[i]) CHECK(*s1[i] == *s2[i]);  // bitwise: coefficients round-trip exactly
    }

    // fallback scoring round-trips too
    auto [f1, fc1] = score_records(t, small);
    auto [f2, fc2] = score_records(back, small);
    for (std::size_t i = 0; i < f1.size(); ++i) {
        REQUIRE(f1[i].has_value());
        CHECK(*f1[i] == *f2[i]);
    }
}

TEST_CASE("zero coefficients are not materialized in the model file") {
    auto sample = mixed_sample(200, 17, "only");
    LidoConfig cfg;
    cfg.cv_folds = 4;
    cfg.grid_points = 20;
    const ScoreTable t = build_lido(sample, cfg);
    TempDir td;
    const std::string dir = td.dir("sparse");
    save_score_table(t, dir);

    const Table manifest = read_table((std::filesystem::path(dir) / "lido_models.tsv").string());
    REQUIRE(manifest.rows.size() == 1);
    const std::string file = manifest.rows[0][static_cast<std::size_t>(manifest.require_column("file"))];
    const Table model = read_table((std::filesystem::path(dir) / file).string());
    const LidoModel& m = t.industry_models.at("only");
    // rows = intercept + nonzero coefficients only
    CHECK(model.rows.size() == static_cast<std::size_t>(m.fit.n_nonzero) + 1);
}

TEST_CASE("loading a missing directory fails as a data error") {
    CHECK_THROWS_AS(load_score_table("/nonexistent/score/dir"), DataError);
}

TEST_CASE("malformed fallback term is rejected") {
    TempDir td;
    const std::string dir = td.dir("bad");
    std::filesystem::create_directories(dir);
    write_file(dir + "/score_meta.json",
               "{\"kind\":\"lido\",\"base_year\":0,\"models\":{\"x\":{\"file\":\"model_0.tsv\","
               "\"fallback\":true,\"n_obs\":5}}}\n");
    write_file(dir + "/model_0.tsv", "term\tcoefficient\nnot_a_median\t1.5\n");
    CHECK_THROWS_AS(load_score_table(dir), DataError);
}

TEST_CASE("model file missing its intercept is rejected") {
    TempDir td;
    const std::string dir = td.dir("noint");
    std::filesystem::create_directories(dir);
    write_file(dir + "/score_meta.json",
               "{\"kind\":\"lido\",\"base_year\":0,\"models\":{\"x\":{\"file\":\"model_0.tsv\","
               "\"fallback\":false,\"n_obs\":50,\"age_degree\":1,\"lambda_min\":0.1,"
               "\"levels\":{\"occ_ref\":\"a\",\"sex_ref\":\"male\",\"race_ref\":\"white\","
               "\"state_ref\":\"s1\",\"region_ref\":\"g1\",\"occ_nonref\":[\"b\"],"
               "\"sex_nonref\":[\"female\"],\"race_nonref\":[],\"state_nonref\":[],"
               "\"region_nonref\":[]}}}}\n");
    write_file(dir + "/model_0.tsv", "term\tcoefficient\nocc=b\t0.25\n");
    CHECK_THROWS_AS(load_score_table(dir), DataError);
}
