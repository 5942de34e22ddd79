#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "occlab/io.hpp"
#include "occlab/scores.hpp"

namespace occlab {

// ============================================================================
// SCORE TABLE PERSISTENCE
//
// A score table is a directory:
//   score_meta.json            kind, base year, per-industry level metadata
//   occ_scores.tsv             (occupation, median)            occscore kind
//   lido_models.tsv            manifest: industry, file, n, lambda_min,
//                              n_nonzero, fallback               lido kind
//   model_<k>.tsv              (term, coefficient) per industry; fallback
//                              industries store occ_median:<code> terms
//
// Coefficients are written at full round-trip precision; loaded tables score
// records identically to the in-memory originals.
// ============================================================================

namespace detail {

inline nlohmann::json levels_to_json(const LidoLevels& lv) {
    nlohmann::json j;
    j["occ_ref"] = lv.occ_ref;
    j["sex_ref"] = lv.sex_ref;
    j["race_ref"] = lv.race_ref;
    j["state_ref"] = lv.state_ref;
    j["region_ref"] = lv.region_ref;
    j["occ_nonref"] = lv.occ_nonref;
    j["sex_nonref"] = lv.sex_nonref;
    j["race_nonref"] = lv.race_nonref;
    j["state_nonref"] = lv.state_nonref;
    j["region_nonref"] = lv.region_nonref;
    return j;
}

inline LidoLevels levels_from_json(const nlohmann::json& j) {
    LidoLevels lv;
    lv.occ_ref = j.at("occ_ref").get<std::string>();
    lv.sex_ref = j.at("sex_ref").get<std::string>();
    lv.race_ref = j.at("race_ref").get<std::string>();
    lv.state_ref = j.at("state_ref").get<std::string>();
    lv.region_ref = j.at("region_ref").get<std::string>();
    lv.occ_nonref = j.at("occ_nonref").get<std::vector<std::string>>();
    lv.sex_nonref = j.at("sex_nonref").get<std::vector<std::string>>();
    lv.race_nonref = j.at("race_nonref").get<std::vector<std::string>>();
    lv.state_nonref = j.at("state_nonref").get<std::vector<std::string>>();
    lv.region_nonref = j.at("region_nonref").get<std::vector<std::string>>();
    lv.occ_seen.insert(lv.occ_ref);
    for (const auto& c : lv.occ_nonref) lv.occ_seen.insert(c);
    lv.state_seen.insert(lv.state_ref);
    for (const auto& c : lv.state_nonref) lv.state_seen.insert(c);
    lv.region_seen.insert(lv.region_ref);
    for (const auto& c : lv.region_nonref) lv.region_seen.insert(c);
    return lv;
}

}  // namespace detail

inline void save_score_table(const ScoreTable& table, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json meta;
    meta["kind"] = to_string(table.kind);
    meta["base_year"] = table.base_year;

    if (table.kind == ScoreKind::occscore) {
        TableWriter w((fs::path(dir) / "occ_scores.tsv").string());
        w.header({"occupation", "median"});
        for (const auto& [occ, entry] : table.occ_medians)
            w.row_strings({occ, format_exact(entry.median)});
        nlohmann::json counts;
        for (const auto& [occ, entry] : table.occ_medians) counts[occ] = entry.n;
        meta["occ_n"] = counts;
    } else {
        TableWriter manifest((fs::path(dir) / "lido_models.tsv").string());
        manifest.header({"industry", "file", "n", "lambda_min", "n_nonzero", "fallback"});
        nlohmann::json jmodels = nlohmann::json::object();
        std::size_t idx = 0;
        for (const auto& [industry, m] : table.industry_models) {
            const std::string file = "model_" + std::to_string(idx++) + ".tsv";
            TableWriter w((fs::path(dir) / file).string());
            w.header({"term", "coefficient"});
            if (m.fallback) {
                for (const auto& [occ, v] : m.occ_median_log)
                    w.row_strings({"occ_median:" + occ, format_exact(v)});
            } else {
                w.row_strings({"(intercept)", format_exact(m.fit.intercept)});
                for (std::size_t j = 0; j < m.columns.size(); ++j) {
                    const double c = m.fit.coef(static_cast<Eigen::Index>(j));
                    if (c != 0) w.row_strings({m.columns[j].name, format_exact(c)});
                }
            }
            manifest.row_strings({industry, file, std::to_string(m.n_obs),
                                  format_exact(m.cv.lambda_min),
                                  std::to_string(m.fallback ? 0 : m.fit.n_nonzero),
                                  m.fallback ? "1" : "0"});
            nlohmann::json jm;
            jm["file"] = file;
            jm["fallback"] = m.fallback;
            jm["n_obs"] = m.n_obs;
            if (!m.fallback) {
                jm["levels"] = detail::levels_to_json(m.levels);
                jm["age_degree"] = [&] {
                    int d = 0;
                    for (const auto& c : m.columns)
                        if (c.kind == LidoColumn::Kind::age_power) d = std::max(d, c.power);
                    return d;
                }();
                jm["lambda_min"] = m.cv.lambda_min;
                jm["cv_seed"] = m.cv.seed;
            }
            jmodels[industry] = jm;
        }
        meta["models"] = jmodels;
    }
    write_file((fs::path(dir) / "score_meta.json").string(), meta.dump(2) + "\n");
}

inline ScoreTable load_score_table(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto meta = nlohmann::json::parse(read_file((fs::path(dir) / "score_meta.json").string()));
    ScoreTable table;
    table.kind = score_kind_from_string(meta.at("kind").get<std::string>());
    table.base_year = meta.at("base_year").get<int>();

    if (table.kind == ScoreKind::occscore) {
        const Table t = read_table((fs::path(dir) / "occ_scores.tsv").string());
        const int c_occ = t.require_column("occupation");
        const int c_med = t.require_column("median");
        const auto& counts = meta.contains("occ_n") ? meta["occ_n"] : nlohmann::json::object();
        for (const auto& row : t.rows) {
            const std::string& occ = row[static_cast<std::size_t>(c_occ)];
            auto v = parse_double(row[static_cast<std::size_t>(c_med)]);
            if (!v) throw DataError("bad median for occupation " + occ);
            OccMedian e{*v, 0};
            if (counts.contains(occ)) e.n = counts[occ].get<std::size_t>();
            table.occ_medians[occ] = e;
        }
        return table;
    }

    const auto& jmodels = meta.at("models");
    for (auto it = jmodels.begin(); it != jmodels.end(); ++it) {
        LidoModel m;
        m.industry = it.key();
        const auto& jm = it.value();
        m.fallback = jm.at("fallback").get<bool>();
        m.n_obs = jm.at("n_obs").get<std::size_t>();
        const Table t = read_table((fs::path(dir) / jm.at("file").get<std::string>()).string());
        const int c_term = t.require_column("term");
        const int c_coef = t.require_column("coefficient");
        std::map<std::string, double> coefs;
        for (const auto& row : t.rows) {
            auto v = parse_double(row[static_cast<std::size_t>(c_coef)]);
            if (!v) throw DataError("bad coefficient in " + m.industry);
            coefs[row[static_cast<std::size_t>(c_term)]] = *v;
        }
        if (m.fallback) {
            for (const auto& [term, v] : coefs) {
                if (term.rfind("occ_median:", 0) != 0)
                    throw DataError("unexpected term in fallback model: " + term);
                m.occ_median_log[term.substr(11)] = v;
            }
        } else {
            m.levels = detail::levels_from_json(jm.at("levels"));
            m.columns = lido_columns(m.levels, jm.at("age_degree").get<int>());
            m.fit.lambda = jm.at("lambda_min").get<double>();
            m.cv.lambda_min = m.fit.lambda;
            m.cv.seed = jm.value("cv_seed", std::uint64_t{0});
            m.fit.terms.clear();
            m.fit.coef = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.columns.size()));
            m.fit.coef_std = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.columns.size()));
            for (std::size_t j = 0; j < m.columns.size(); ++j) {
                m.fit.terms.push_back(m.columns[j].name);
                auto f = coefs.find(m.columns[j].name);
                if (f != coefs.end() && f->second != 0) {
                    m.fit.coef(static_cast<Eigen::Index>(j)) = f->second;
                    ++m.fit.n_nonzero;
                }
            }
            auto ic = coefs.find("(intercept)");
            if (ic == coefs.end()) throw DataError("model missing intercept: " + m.industry);
            m.fit.intercept = ic->second;
        }
        table.industry_models[m.industry] = std::move(m);
    }
    return table;
}

}  // namespace occlab
