// Pipeline driver: every verb reads a JSON config (flags override keys),
// writes delimited tables plus a manifest.json echoing the resolved config
// and every seed used. No timestamps anywhere, so reruns are byte-identical.

#include <CLI11.hpp>
#include <json.hpp>

#include <occlab/biaslab.hpp>
#include <occlab/common.hpp>
#include <occlab/config.hpp>
#include <occlab/design.hpp>
#include <occlab/io.hpp>
#include <occlab/lasso.hpp>
#include <occlab/microdata.hpp>
#include <occlab/mobility.hpp>
#include <occlab/ols.hpp>
#include <occlab/ope.hpp>
#include <occlab/score_io.hpp>
#include <occlab/scores.hpp>
#include <occlab/stats.hpp>
#include <occlab/synthetic.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace occlab;

namespace {

constexpr const char* kVersion = "0.1.0";

// ----------------------------------------------------------------------------
// config plumbing
// ----------------------------------------------------------------------------
template <typename T>
T cfg_get(const json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for config key: " + key);
    }
}

template <typename T>
T cfg_require(const json& j, const std::string& key) {
    if (!j.contains(key) || j.at(key).is_null())
        throw ConfigError("missing config key: " + key);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for config key: " + key);
    }
}

// Tracks output files for a run; anything noted before a fatal error gets
// removed so failed runs leave no partial outputs behind.
struct Run {
    std::string verb;
    std::string out_dir;
    json cfg = json::object();
    json manifest = json::object();
    std::vector<std::string> written;

    std::string path(const std::string& name) const { return out_dir + "/" + name; }
    std::string note(const std::string& name) {
        std::string p = path(name);
        written.push_back(p);
        return p;
    }
    void discard_outputs() {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
    }
    void finish() {
        manifest["artifact"] = "occlab";
        manifest["version"] = kVersion;
        manifest["verb"] = verb;
        json echoed = cfg;
        echoed.erase("threads");  // execution detail, not run semantics
        manifest["config"] = echoed;
        json outs = json::array();
        for (const auto& p : written) outs.push_back(fs::path(p).filename().string());
        manifest["outputs"] = outs;
        write_file(path("manifest.json"), manifest.dump(2) + "\n");
    }
};

Run make_run(const std::string& verb, const std::string& cfg_path, const std::string& out_dir) {
    Run run;
    run.verb = verb;
    if (out_dir.empty()) throw ConfigError("--out is required");
    run.out_dir = out_dir;
    if (!cfg_path.empty()) {
        run.cfg = json_from_file(cfg_path);
        if (!run.cfg.is_object()) throw ConfigError("config root must be an object: " + cfg_path);
    }
    std::error_code ec;
    fs::create_directories(run.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory: " + out_dir);
    return run;
}

void override_key(json& cfg, const std::string& key, const std::string& value) {
    if (!value.empty()) cfg[key] = value;
}

json map_to_json(const std::map<std::string, std::size_t>& m) {
    json j = json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

// ----------------------------------------------------------------------------
// shared loaders
// ----------------------------------------------------------------------------
IngestSchema schema_of(const json& cfg) {
    return load_schema(cfg_require<std::string>(cfg, "schema"));
}

std::pair<std::vector<PersonRecord>, json> load_and_filter(const json& cfg,
                                                           const IngestSchema& schema) {
    auto [records, rep] = load_microdata(cfg_require<std::string>(cfg, "input"), schema);
    json report;
    report["n_parsed"] = rep.n_parsed;
    report["n_rejected"] = rep.n_rejected;
    report["reject_reasons"] = map_to_json(rep.reject_reasons);
    if (cfg.contains("filter")) {
        const FilterSpec spec = parse_filter_spec(cfg.at("filter"));
        auto [kept, fr] = filter_sample(records, spec);
        records = std::move(kept);
        json filt;
        filt["n_in"] = fr.n_in;
        filt["n_out"] = fr.n_out;
        filt["exclusions"] = map_to_json(fr.exclusions);
        report["filter"] = filt;
    }
    return {std::move(records), std::move(report)};
}

Formula formula_of(const json& j) {
    Formula f;
    f.continuous = cfg_get<std::vector<std::string>>(j, "continuous", {});
    f.factors = cfg_get<std::vector<std::string>>(j, "factors", {});
    for (const auto& pair : cfg_get<std::vector<std::vector<std::string>>>(j, "interactions", {})) {
        if (pair.size() != 2) throw ConfigError("interactions entries must be [factor, factor]");
        f.interactions.emplace_back(pair[0], pair[1]);
    }
    return f;
}

ScorePolicy policy_of(const json& cfg) {
    ScorePolicy p;
    if (cfg.contains("policy"))
        p.allow_unseen_as_reference =
            cfg_get<bool>(cfg.at("policy"), "allow_unseen_as_reference", true);
    return p;
}

// year -> input file pairs; a bare "input" is a single unlabeled run
std::vector<std::pair<int, std::string>> year_inputs(const json& cfg) {
    std::vector<std::pair<int, std::string>> out;
    if (cfg.contains("years")) {
        if (!cfg.at("years").is_array()) throw ConfigError("config key 'years' must be an array");
        for (const auto& e : cfg.at("years")) {
            out.emplace_back(cfg_require<int>(e, "year"), cfg_require<std::string>(e, "input"));
        }
        if (out.empty()) throw ConfigError("config key 'years' is empty");
        return out;
    }
    out.emplace_back(cfg_get<int>(cfg, "year", 0), cfg_require<std::string>(cfg, "input"));
    return out;
}

// ----------------------------------------------------------------------------
// sweep expansion: any listed numeric field becomes a cartesian axis,
// expanded in sorted key order
// ----------------------------------------------------------------------------
std::vector<json> expand_sweep(const json& cfg, const std::set<std::string>& sweepable) {
    std::vector<json> rows{json::object()};
    for (const auto& key : sweepable) {  // std::set: sorted order
        if (!cfg.contains(key)) continue;
        const json& v = cfg.at(key);
        if (!v.is_array()) {
            for (auto& r : rows) r[key] = v;
            continue;
        }
        if (v.empty()) throw ConfigError("empty sweep list for config key: " + key);
        std::vector<json> next;
        next.reserve(rows.size() * v.size());
        for (const auto& r : rows)
            for (const auto& cell : v) {
                json n = r;
                n[key] = cell;
                next.push_back(std::move(n));
            }
        rows = std::move(next);
    }
    return rows;
}

// ----------------------------------------------------------------------------
// verbs
// ----------------------------------------------------------------------------
void verb_ingest(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    auto [records, report] = load_and_filter(run.cfg, schema);
    write_microdata_tsv(run.note("records.tsv"), records);
    report["n_written"] = records.size();
    run.manifest["ingest"] = report;
}

void verb_crosswalk(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    auto [records, report] = load_and_filter(run.cfg, schema);
    const Crosswalk xw = load_crosswalk(cfg_require<std::string>(run.cfg, "crosswalk"));
    auto [mapped, xrep] = apply_crosswalk(records, xw, schema.occupation_scheme);
    write_microdata_tsv(run.note("records.tsv"), mapped);
    report["n_written"] = mapped.size();
    json xj;
    xj["source_scheme"] = xw.source_scheme;
    xj["target_scheme"] = xw.target_scheme;
    xj["n_ambiguous_excluded"] = xrep.n_ambiguous_excluded;
    xj["n_unmapped_excluded"] = xrep.n_unmapped_excluded;
    run.manifest["ingest"] = report;
    run.manifest["crosswalk"] = xj;
}

json coverage_json(const BuildCoverage& cov) {
    json j;
    j["n_input"] = cov.n_input;
    j["n_used"] = cov.n_used;
    j["skipped"] = map_to_json(cov.skipped);
    return j;
}

void verb_build_scores(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    auto [records, report] = load_and_filter(run.cfg, schema);
    run.manifest["ingest"] = report;

    const ScoreKind kind =
        score_kind_from_string(cfg_get<std::string>(run.cfg, "kind", "occscore"));
    ScoreTable table;
    if (kind == ScoreKind::occscore) {
        OccScoreConfig occ;
        const json sub = run.cfg.contains("occscore") ? run.cfg.at("occscore") : json::object();
        occ.weighting =
            occ_weighting_from_string(cfg_get<std::string>(sub, "weighting", "sex_weighted"));
        occ.min_cell_n = cfg_get<std::size_t>(sub, "min_cell_n", 1);
        occ.base_year = cfg_get<int>(sub, "base_year", 0);
        table = build_occscore(records, occ);
    } else {
        LidoConfig lido;
        const json sub = run.cfg.contains("lido") ? run.cfg.at("lido") : json::object();
        lido.age_poly_degree = cfg_get<int>(sub, "age_poly_degree", 4);
        lido.min_industry_n = cfg_get<std::size_t>(sub, "min_industry_n", 30);
        lido.cv_folds = cfg_get<int>(sub, "cv_folds", 10);
        lido.grid_points = cfg_get<int>(sub, "grid_points", 100);
        lido.grid_min_ratio = cfg_get<double>(sub, "grid_min_ratio", 1e-3);
        lido.base_year = cfg_get<int>(sub, "base_year", 0);
        lido.seed = cfg_get<std::uint64_t>(run.cfg, "seed", 1);
        lido.n_threads = cfg_get<unsigned>(run.cfg, "threads", 1);
        table = build_lido(records, lido);
        run.manifest["seeds"] = {{"master", lido.seed}};
    }

    const std::string dir = run.path("scores");
    save_score_table(table, dir);
    for (const auto& e : fs::directory_iterator(dir))
        run.written.push_back(e.path().string());

    json tj;
    tj["kind"] = to_string(table.kind);
    tj["base_year"] = table.base_year;
    tj["coverage"] = coverage_json(table.coverage);
    tj["warnings"] = table.warnings;
    if (kind == ScoreKind::occscore) {
        tj["n_occupations"] = table.occ_medians.size();
    } else {
        json models = json::object();
        json seeds = json::object();
        for (const auto& [ind, m] : table.industry_models) {
            json mj;
            mj["n"] = m.n_obs;
            mj["fallback"] = m.fallback;
            if (!m.fallback) {
                mj["lambda_min"] = m.cv.lambda_min;
                mj["n_nonzero"] = m.fit.n_nonzero;
                seeds[ind] = m.cv.seed;
            }
            models[ind] = mj;
        }
        tj["industries"] = models;
        run.manifest["seeds"]["industry_cv"] = seeds;
    }
    run.manifest["scores"] = tj;
}

void verb_score(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    auto [records, report] = load_and_filter(run.cfg, schema);
    const ScoreTable table = load_score_table(cfg_require<std::string>(run.cfg, "scores"));
    const auto [values, cov] = score_records(table, records, policy_of(run.cfg));

    const std::string col = cfg_get<std::string>(run.cfg, "column", "score");
    std::vector<std::string> cols = microdata_columns();
    cols.push_back(col);
    TableWriter w(run.note("scored.tsv"), cols);
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto row = microdata_row(records[i]);
        row.push_back(values[i] ? format_exact(*values[i]) : "");
        w.row_strings(row);
    }

    run.manifest["ingest"] = report;
    json sj;
    sj["kind"] = to_string(table.kind);
    sj["n_scored"] = cov.n_scored;
    sj["n_null"] = cov.n_null;
    sj["null_reasons"] = map_to_json(cov.null_reasons);
    run.manifest["scoring"] = sj;
}

const std::set<std::string>& ope_fields() {
    static const std::set<std::string> f = {"mu_x",      "sigma_x",  "delta0", "delta1",
                                            "gamma0",    "gamma1",   "sigma_eta", "sigma_nu",
                                            "lambda0",   "lambda1",  "sigma_psi"};
    return f;
}

OpeParams ope_params_of(const json& row, bool enforce_sign) {
    OpeParams p;
    p.mu_x = cfg_get<double>(row, "mu_x", 0);
    p.sigma_x = cfg_get<double>(row, "sigma_x", 1);
    p.delta0 = cfg_get<double>(row, "delta0", 0);
    p.delta1 = cfg_get<double>(row, "delta1", 0);
    p.gamma0 = cfg_get<double>(row, "gamma0", 0);
    p.gamma1 = cfg_get<double>(row, "gamma1", 0);
    p.sigma_eta = cfg_get<double>(row, "sigma_eta", 0);
    p.sigma_nu = cfg_get<double>(row, "sigma_nu", 0);
    p.lambda0 = cfg_get<double>(row, "lambda0", 0);
    p.lambda1 = cfg_get<double>(row, "lambda1", 0);
    p.sigma_psi = cfg_get<double>(row, "sigma_psi", 0);
    p.enforce_sign = enforce_sign;
    return p;
}

void verb_simulate_ope(Run& run) {
    const std::size_t n = cfg_require<std::size_t>(run.cfg, "n");
    const int n_bins = cfg_get<int>(run.cfg, "n_bins", 50);
    const std::uint64_t seed = cfg_get<std::uint64_t>(run.cfg, "seed", 1);
    const unsigned threads = cfg_get<unsigned>(run.cfg, "threads", 1);
    const bool enforce_sign = cfg_get<bool>(run.cfg, "enforce_sign", true);

    std::vector<OpeParams> cells;
    for (const json& row : expand_sweep(run.cfg, ope_fields()))
        cells.push_back(ope_params_of(row, enforce_sign));
    const auto rows = run_ope_sweep(cells, n, seed, n_bins, threads);

    TableWriter w(run.note("ope_results.tsv"),
                  {"mu_x", "sigma_x", "delta0", "delta1", "gamma0", "gamma1", "sigma_eta",
                   "sigma_nu", "lambda0", "lambda1", "sigma_psi", "seed", "plim_ope1",
                   "plim_ope3", "beta_hat_ope1", "beta_hat_ope2", "beta_hat_ope3"});
    for (const auto& r : rows) {
        const OpeParams& p = r.params;
        w.row_strings({format_double(p.mu_x), format_double(p.sigma_x), format_double(p.delta0),
                       format_double(p.delta1), format_double(p.gamma0), format_double(p.gamma1),
                       format_double(p.sigma_eta), format_double(p.sigma_nu),
                       format_double(p.lambda0), format_double(p.lambda1),
                       format_double(p.sigma_psi), std::to_string(r.seed),
                       format_double(r.plim1), format_double(r.plim3),
                       format_double(r.beta_hat1), format_double(r.beta_hat2),
                       format_double(r.beta_hat3)});
    }
    json seeds;
    seeds["master"] = seed;
    json cell_seeds = json::array();
    for (const auto& r : rows) cell_seeds.push_back(r.seed);
    seeds["cells"] = cell_seeds;
    run.manifest["seeds"] = seeds;
    run.manifest["n_cells"] = rows.size();
}

void verb_gaps(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    auto [records, report] = load_and_filter(run.cfg, schema);

    GapSpec spec;
    spec.dv = gap_dv_from_string(cfg_get<std::string>(run.cfg, "dv", "earnings"));
    if (run.cfg.contains("controls")) spec.controls = formula_of(run.cfg.at("controls"));
    spec.cluster_by_state = cfg_get<bool>(run.cfg, "cluster_by_state", false);

    ScoreTable table;
    const ScoreTable* table_ptr = nullptr;
    if (spec.dv != GapDv::earnings) {
        table = load_score_table(cfg_require<std::string>(run.cfg, "scores"));
        table_ptr = &table;
    }

    const GapResult res = run_gap_regression(records, spec, table_ptr);
    write_fit_table(res.fit, run.note("gap_fit.tsv"));
    TableWriter w(run.note("implied_ratios.tsv"), {"term", "ratio"});
    for (const auto& [term, ratio] : res.implied_ratios)
        w.row_strings({term, format_double(ratio)});

    run.manifest["ingest"] = report;
    json gj;
    gj["dv"] = cfg_get<std::string>(run.cfg, "dv", "earnings");
    gj["n_used"] = res.n_used;
    gj["n_dropped"] = res.n_dropped;
    gj["drop_reasons"] = map_to_json(res.drop_reasons);
    gj["se_type"] = res.fit.se_type;
    run.manifest["gaps"] = gj;
}

// shared setup for type-s and ratios: per-year comparison runs
struct YearRuns {
    std::vector<int> years;
    std::vector<ComparisonRun> runs;
    std::string proxy;
    json report = json::object();
};

YearRuns comparison_runs_of(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    if (!run.cfg.contains("proxies") || !run.cfg.at("proxies").is_array() ||
        run.cfg.at("proxies").empty())
        throw ConfigError("config key 'proxies' must be a non-empty array");

    std::vector<ScoreTable> tables;
    std::vector<std::string> names;
    tables.reserve(run.cfg.at("proxies").size());
    for (const auto& e : run.cfg.at("proxies")) {
        names.push_back(cfg_require<std::string>(e, "name"));
        tables.push_back(load_score_table(cfg_require<std::string>(e, "scores")));
    }
    std::vector<std::pair<std::string, const ScoreTable*>> proxies;
    for (std::size_t i = 0; i < tables.size(); ++i) proxies.emplace_back(names[i], &tables[i]);

    Formula controls;
    if (run.cfg.contains("controls")) controls = formula_of(run.cfg.at("controls"));
    const bool cluster = cfg_get<bool>(run.cfg, "cluster_by_state", false);

    YearRuns yr;
    yr.proxy = cfg_get<std::string>(run.cfg, "proxy", names.front());
    for (const auto& [year, input] : year_inputs(run.cfg)) {
        json c = run.cfg;
        c["input"] = input;
        auto [records, report] = load_and_filter(c, schema);
        yr.years.push_back(year);
        yr.runs.push_back(make_comparison_run(std::to_string(year), records, controls, proxies,
                                              default_category_map(), cluster));
        yr.report[std::to_string(year)] = report;
    }
    return yr;
}

std::vector<std::string> year_columns(const std::vector<int>& years) {
    std::vector<std::string> cols{"category"};
    for (int y : years) cols.push_back("y" + std::to_string(y));
    return cols;
}

void verb_type_s(Run& run) {
    YearRuns yr = comparison_runs_of(run);
    const double alpha = cfg_get<double>(run.cfg, "alpha", 0.05);
    const std::string defname =
        cfg_get<std::string>(run.cfg, "definition", "proxy_significant");
    TypeSDefinition def;
    if (defname == "proxy_significant")
        def = TypeSDefinition::proxy_significant;
    else if (defname == "both_significant")
        def = TypeSDefinition::both_significant;
    else
        throw ConfigError("unknown type S definition: " + defname);

    std::vector<CategoryRates> rates;
    std::set<std::string> categories;
    for (const auto& r : yr.runs) {
        rates.push_back(type_s_table(r, yr.proxy, alpha, def));
        for (const auto& [cat, v] : rates.back().by_category) categories.insert(cat);
    }

    TableWriter w(run.note("type_s.tsv"), year_columns(yr.years));
    for (const auto& cat : categories) {
        std::vector<std::string> row{cat};
        for (const auto& r : rates)
            row.push_back(r.by_category.count(cat) ? format_double(r.by_category.at(cat)) : "");
        w.row_strings(row);
    }
    std::vector<std::string> overall{"overall"};
    for (const auto& r : rates) overall.push_back(format_double(r.overall));
    w.row_strings(overall);

    run.manifest["inputs"] = yr.report;
    json tj;
    tj["proxy"] = yr.proxy;
    tj["alpha"] = alpha;
    tj["definition"] = defname;
    json terms = json::object();
    for (std::size_t i = 0; i < rates.size(); ++i)
        terms[std::to_string(yr.years[i])] = rates[i].n_total;
    tj["n_terms"] = terms;
    run.manifest["type_s"] = tj;
}

void verb_ratios(Run& run) {
    YearRuns yr = comparison_runs_of(run);
    const double min_abs_t = cfg_get<double>(run.cfg, "min_abs_t", 0.1);

    std::vector<RatioTable> tables;
    std::set<std::string> categories;
    for (const auto& r : yr.runs) {
        tables.push_back(ratio_table(r, yr.proxy, min_abs_t));
        for (const auto& [cat, v] : tables.back().mean_by_category) categories.insert(cat);
    }

    TableWriter w(run.note("ratio_means.tsv"), year_columns(yr.years));
    for (const auto& cat : categories) {
        std::vector<std::string> row{cat};
        for (const auto& t : tables)
            row.push_back(t.mean_by_category.count(cat)
                              ? format_double(t.mean_by_category.at(cat))
                              : "");
        w.row_strings(row);
    }
    std::vector<std::string> overall{"overall"};
    for (const auto& t : tables) overall.push_back(format_double(t.overall_mean));
    w.row_strings(overall);

    TableWriter all(run.note("all_ratios.tsv"), {"year", "ratio"});
    for (std::size_t i = 0; i < tables.size(); ++i)
        for (double v : tables[i].all_ratios)
            all.row_strings({std::to_string(yr.years[i]), format_exact(v)});

    run.manifest["inputs"] = yr.report;
    json rj;
    rj["proxy"] = yr.proxy;
    rj["min_abs_t"] = min_abs_t;
    json omitted = json::object();
    for (std::size_t i = 0; i < tables.size(); ++i)
        omitted[std::to_string(yr.years[i])] = tables[i].omitted_categories;
    rj["omitted_categories"] = omitted;
    run.manifest["ratios"] = rj;
}

void verb_density(Run& run) {
    const Table t = read_table(cfg_require<std::string>(run.cfg, "input"));
    const std::string col = cfg_get<std::string>(run.cfg, "column", "ratio");
    const int idx = t.column_index(col);
    if (idx < 0) throw DataError("density: no column named '" + col + "'");
    std::vector<double> values;
    values.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto v = parse_double(t.rows[r][static_cast<std::size_t>(idx)]);
        if (!v)
            throw DataError("density: non-numeric value in row " + std::to_string(r + 1));
        values.push_back(*v);
    }
    const double bw = cfg_get<double>(run.cfg, "bandwidth", 0.0);
    const RatioDensity d = ratio_density(values, bw);

    TableWriter w(run.note("density.tsv"), {"x", "density"});
    for (std::size_t i = 0; i < d.kde.grid.size(); ++i)
        w.row_strings({format_double(d.kde.grid[i]), format_double(d.kde.density[i])});

    json dj;
    dj["n"] = values.size();
    dj["bandwidth"] = d.kde.bandwidth;
    dj["integral"] = d.integral;
    dj["warnings"] = d.warnings;
    run.manifest["density"] = dj;
}

void verb_persistence(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    const ScoreTable base = load_score_table(cfg_require<std::string>(run.cfg, "scores"));
    std::map<int, std::vector<PersonRecord>> by_year;
    json reports = json::object();
    for (const auto& [year, input] : year_inputs(run.cfg)) {
        json c = run.cfg;
        c["input"] = input;
        auto [records, report] = load_and_filter(c, schema);
        by_year[year] = std::move(records);
        reports[std::to_string(year)] = report;
    }
    const auto stats = persistence_stats(base, by_year);

    TableWriter w(run.note("persistence.tsv"),
                  {"year", "r_squared", "spearman", "n_occupations", "skipped", "note"});
    for (const auto& s : stats) {
        w.row_strings({std::to_string(s.year),
                       s.skipped ? "" : format_double(s.r_squared),
                       s.skipped ? "" : format_double(s.spearman),
                       std::to_string(s.n_occupations), s.skipped ? "1" : "0", s.note});
    }
    run.manifest["inputs"] = reports;
}

void verb_mobility(Run& run) {
    const IngestSchema schema = schema_of(run.cfg);
    const int max_age = cfg_get<int>(run.cfg, "max_son_age_at_link", 15);
    auto [pairs, rep] =
        load_linked_pairs(cfg_require<std::string>(run.cfg, "input"), schema, max_age);

    if (!run.cfg.contains("scores") || !run.cfg.at("scores").is_array() ||
        run.cfg.at("scores").empty())
        throw ConfigError("config key 'scores' must be a non-empty array");
    const ScorePolicy policy = policy_of(run.cfg);
    std::vector<std::string> kinds;
    for (const auto& e : run.cfg.at("scores")) {
        const std::string name = cfg_require<std::string>(e, "name");
        const ScoreTable table = load_score_table(cfg_require<std::string>(e, "scores"));
        attach_scores(pairs, name, table, policy);
        kinds.push_back(name);
    }
    const bool log_transform = cfg_get<bool>(run.cfg, "log_transform", true);

    TableWriter w(run.note("elasticities.tsv"),
                  {"kind", "elasticity", "se", "n_pairs", "n_dropped"});
    json ej = json::object();
    for (const auto& kind : kinds) {
        const ElasticityResult res = estimate_elasticity(pairs, kind, log_transform);
        const int i = res.fit.term_index("father_score");
        w.row_strings({kind, format_double(res.elasticity), format_double(res.fit.se(i)),
                       std::to_string(res.n_pairs), std::to_string(res.n_dropped_incomplete)});
        ej[kind] = {{"elasticity", res.elasticity}, {"n_pairs", res.n_pairs}};
    }

    json pj;
    pj["n_parsed"] = rep.n_parsed;
    pj["n_rejected"] = rep.n_rejected;
    pj["reject_reasons"] = map_to_json(rep.reject_reasons);
    run.manifest["pairs"] = pj;
    run.manifest["elasticities"] = ej;
}

const std::set<std::string>& mobility_fields() {
    static const std::set<std::string> f = {"beta0",          "beta1",          "tilde_beta0",
                                            "tilde_beta1",    "sigma_father_y", "sigma_e_father",
                                            "sigma_nu",       "sigma_delta"};
    return f;
}

void verb_mobility_sim(Run& run) {
    const std::size_t n = cfg_require<std::size_t>(run.cfg, "n");
    const std::uint64_t seed = cfg_get<std::uint64_t>(run.cfg, "seed", 1);
    const bool enforce_range = cfg_get<bool>(run.cfg, "enforce_range", true);

    std::vector<MobilityErrorParams> cells;
    for (const json& row : expand_sweep(run.cfg, mobility_fields())) {
        MobilityErrorParams p;
        p.beta0 = cfg_get<double>(row, "beta0", 0);
        p.beta1 = cfg_get<double>(row, "beta1", 0.5);
        p.tilde_beta0 = cfg_get<double>(row, "tilde_beta0", 0);
        p.tilde_beta1 = cfg_get<double>(row, "tilde_beta1", 0);
        p.sigma_father_y = cfg_get<double>(row, "sigma_father_y", 1);
        p.sigma_e_father = cfg_get<double>(row, "sigma_e_father", 0);
        p.sigma_nu = cfg_get<double>(row, "sigma_nu", 0);
        p.sigma_delta = cfg_get<double>(row, "sigma_delta", 0);
        p.enforce_range = enforce_range;
        cells.push_back(p);
    }

    TableWriter w(run.note("mobility_sim.tsv"),
                  {"beta0", "beta1", "tilde_beta0", "tilde_beta1", "sigma_father_y",
                   "sigma_e_father", "sigma_nu", "sigma_delta", "seed", "beta_hat", "plim",
                   "cov_term", "note"});
    json cell_seeds = json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::uint64_t cell_seed = derive_seed(seed, i);
        cell_seeds.push_back(cell_seed);
        const MobilityErrorParams& p = cells[i];
        const MobilitySimResult r = simulate_mobility_bias(p, n, cell_seed);
        w.row_strings({format_double(p.beta0), format_double(p.beta1),
                       format_double(p.tilde_beta0), format_double(p.tilde_beta1),
                       format_double(p.sigma_father_y), format_double(p.sigma_e_father),
                       format_double(p.sigma_nu), format_double(p.sigma_delta),
                       std::to_string(cell_seed), format_double(r.beta_hat),
                       format_double(r.plim), format_double(r.cov_term), r.note});
    }
    run.manifest["seeds"] = {{"master", seed}, {"cells", cell_seeds}};
    run.manifest["n_cells"] = cells.size();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"occupational income scores and measurement-error diagnostics"};
    app.require_subcommand(1);

    struct Flags {
        std::string config, input, schema, out, scores, crosswalk, kind, dv;
        std::optional<std::uint64_t> seed;
        std::optional<unsigned> threads;
    } fl;

    const auto add_common = [&](CLI::App* sub, bool with_input) {
        sub->add_option("--config", fl.config, "JSON config file");
        sub->add_option("--out", fl.out, "output directory");
        if (with_input) sub->add_option("--input", fl.input, "input data file");
        sub->add_option("--seed", fl.seed, "master seed (overrides config)");
        sub->add_option("--threads", fl.threads, "parallelism cap");
        return sub;
    };
    const auto add_schema = [&](CLI::App* sub) {
        sub->add_option("--schema", fl.schema, "ingest schema JSON");
        return sub;
    };
    const auto add_scores = [&](CLI::App* sub) {
        sub->add_option("--scores", fl.scores, "score table directory");
        return sub;
    };

    add_schema(add_common(app.add_subcommand("ingest", "parse, screen, and write microdata"),
                          true));
    auto* cw = add_schema(add_common(
        app.add_subcommand("crosswalk", "remap occupation codes across schemes"), true));
    cw->add_option("--crosswalk", fl.crosswalk, "crosswalk file");
    auto* bs = add_schema(add_common(
        app.add_subcommand("build-scores", "construct a score table from base microdata"), true));
    bs->add_option("--kind", fl.kind, "occscore | lido");
    add_scores(add_schema(
        add_common(app.add_subcommand("score", "append score column to microdata"), true)));
    add_common(app.add_subcommand("simulate-ope", "measurement-error proxy simulations"), false);
    auto* gp = add_scores(add_schema(
        add_common(app.add_subcommand("gaps", "demographic gap regression"), true)));
    gp->add_option("--dv", fl.dv, "earnings | occscore | lido");
    add_schema(add_common(
        app.add_subcommand("type-s", "conflicting-sign rates by category"), true));
    add_schema(
        add_common(app.add_subcommand("ratios", "proxy/true coefficient ratios"), true));
    add_common(app.add_subcommand("density", "kernel density of a ratio column"), true);
    add_scores(add_schema(add_common(
        app.add_subcommand("persistence", "score persistence across census years"), true)));
    add_schema(add_common(
        app.add_subcommand("mobility", "intergenerational elasticities on linked pairs"), true));
    add_common(app.add_subcommand("mobility-sim", "correlated-error mobility bias simulation"),
               false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // usage errors map to the config exit code
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string verb = sub->get_name();

    Run run;
    try {
        run = make_run(verb, fl.config, fl.out);
        override_key(run.cfg, "input", fl.input);
        override_key(run.cfg, "schema", fl.schema);
        override_key(run.cfg, "scores", fl.scores);
        override_key(run.cfg, "crosswalk", fl.crosswalk);
        override_key(run.cfg, "kind", fl.kind);
        override_key(run.cfg, "dv", fl.dv);
        if (fl.seed) run.cfg["seed"] = *fl.seed;
        if (fl.threads) run.cfg["threads"] = *fl.threads;

        if (verb == "ingest")
            verb_ingest(run);
        else if (verb == "crosswalk")
            verb_crosswalk(run);
        else if (verb == "build-scores")
            verb_build_scores(run);
        else if (verb == "score")
            verb_score(run);
        else if (verb == "simulate-ope")
            verb_simulate_ope(run);
        else if (verb == "gaps")
            verb_gaps(run);
        else if (verb == "type-s")
            verb_type_s(run);
        else if (verb == "ratios")
            verb_ratios(run);
        else if (verb == "density")
            verb_density(run);
        else if (verb == "persistence")
            verb_persistence(run);
        else if (verb == "mobility")
            verb_mobility(run);
        else if (verb == "mobility-sim")
            verb_mobility_sim(run);
        else
            throw ConfigError("unknown verb: " + verb);

        run.finish();
    } catch (const ConfigError& e) {
        run.discard_outputs();
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        run.discard_outputs();
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        run.discard_outputs();
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        run.discard_outputs();
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 3;
    }
    return 0;
}
