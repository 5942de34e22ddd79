#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "occlab/common.hpp"
#include "occlab/microdata.hpp"

namespace occlab {

// ============================================================================
// DECLARATIVE CONFIG
//
// Schemas and run configs are JSON. Loaders here convert to the typed
// structs; anything malformed is a ConfigError naming the offending key.
// ============================================================================

inline nlohmann::json json_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("bad JSON in " + path + ": " + e.what());
    }
}

namespace detail {

inline Sex sex_from_name(const std::string& s) {
    if (s == "male") return Sex::male;
    if (s == "female") return Sex::female;
    throw ConfigError("unknown sex name: " + s);
}

inline Race race_from_name(const std::string& s) {
    if (s == "white") return Race::white;
    if (s == "black") return Race::black;
    if (s == "other") return Race::other;
    throw ConfigError("unknown race name: " + s);
}

}  // namespace detail

// Schema JSON shape:
//   columns: {field: column header}
//   sex_codes / race_codes: {file code: canonical name}
//   region_of_state: {state: region}, or regions_file: path to a two-column
//     table, resolved relative to the schema file
//   missing_values / true_codes / false_codes: string arrays (optional)
//   occupation_scheme: string; default_year: integer
inline IngestSchema load_schema(const std::string& path) {
    const nlohmann::json j = json_from_file(path);
    if (!j.is_object()) throw ConfigError("schema must be a JSON object: " + path);
    IngestSchema s;
    try {
        if (!j.contains("columns") || !j["columns"].is_object())
            throw ConfigError("schema missing 'columns' object");
        for (const auto& [field, col] : j["columns"].items())
            s.columns[field] = col.get<std::string>();
        if (j.contains("sex_codes"))
            for (const auto& [code, name] : j["sex_codes"].items())
                s.sex_codes[code] = detail::sex_from_name(name.get<std::string>());
        if (j.contains("race_codes"))
            for (const auto& [code, name] : j["race_codes"].items())
                s.race_codes[code] = detail::race_from_name(name.get<std::string>());
        if (j.contains("region_of_state"))
            for (const auto& [state, region] : j["region_of_state"].items())
                s.region_of_state[state] = region.get<std::string>();
        if (j.contains("regions_file")) {
            const auto base = std::filesystem::path(path).parent_path();
            const auto rf = base / j["regions_file"].get<std::string>();
            for (const auto& [state, region] : load_region_map(rf.string()))
                s.region_of_state[state] = region;
        }
        if (j.contains("missing_values")) {
            s.missing_values.clear();
            for (const auto& v : j["missing_values"]) s.missing_values.insert(v.get<std::string>());
        }
        if (j.contains("true_codes")) {
            s.true_codes.clear();
            for (const auto& v : j["true_codes"]) s.true_codes.insert(v.get<std::string>());
        }
        if (j.contains("false_codes")) {
            s.false_codes.clear();
            for (const auto& v : j["false_codes"]) s.false_codes.insert(v.get<std::string>());
        }
        if (j.contains("occupation_scheme"))
            s.occupation_scheme = j["occupation_scheme"].get<std::string>();
        if (j.contains("default_year")) s.default_year = j["default_year"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad schema " + path + ": " + e.what());
    }
    return s;
}

inline FilterSpec parse_filter_spec(const nlohmann::json& j) {
    FilterSpec f;
    if (j.is_null()) return f;
    if (!j.is_object()) throw ConfigError("filter spec must be a JSON object");
    try {
        if (j.contains("age_min")) f.age_min = j["age_min"].get<int>();
        if (j.contains("age_max")) f.age_max = j["age_max"].get<int>();
        if (j.contains("require_positive_earnings"))
            f.require_positive_earnings = j["require_positive_earnings"].get<bool>();
        if (j.contains("require_labor_force"))
            f.require_labor_force = j["require_labor_force"].get<bool>();
        if (j.contains("exclude_races"))
            for (const auto& v : j["exclude_races"])
                f.exclude_races.insert(detail::race_from_name(v.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad filter spec: ") + e.what());
    }
    return f;
}

}  // namespace occlab
