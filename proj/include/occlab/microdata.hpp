#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "occlab/common.hpp"
#include "occlab/io.hpp"

namespace occlab {

// ============================================================================
// MICRODATA MODEL
//
// One record per person-year. Earnings and industry are nullable; "absent"
// is represented as nullopt, never as 0, so log pipelines cannot pick up
// phantom zeros.
// ============================================================================

enum class Sex { male, female };
enum class Race { white, black, other };

inline std::string to_string(Sex s) { return s == Sex::male ? "male" : "female"; }
inline std::string to_string(Race r) {
    switch (r) {
        case Race::white: return "white";
        case Race::black: return "black";
        default: return "other";
    }
}

struct PersonRecord {
    std::string record_id;
    int year = 0;
    int age = 0;
    Sex sex = Sex::male;
    Race race = Race::white;
    std::string state;
    std::string region;  // derived from state via the region map
    std::string birthplace;
    bool nativity = true;  // domestic-born
    std::optional<std::string> industry;
    std::string occupation;
    std::optional<double> earnings;  // currency per year, >= 0 when present
    bool in_labor_force = true;
    bool farm_status = false;
    int family_size = 1;
    std::string marital_status;
    int n_families_in_household = 1;
    std::string relation_to_head;
    double weight = 1.0;
};

// ----------------------------------------------------------------------------
// Ingestion schema: column mapping plus code dictionaries. Loaded from a
// declarative JSON config (see load_schema in config.hpp); tests construct it
// directly.
// ----------------------------------------------------------------------------
struct IngestSchema {
    // field name -> column header in the input file; unmapped optional fields
    // take defaults, unmapped required fields are a schema error
    std::map<std::string, std::string> columns;
    std::map<std::string, Sex> sex_codes;
    std::map<std::string, Race> race_codes;
    std::map<std::string, std::string> region_of_state;  // state code -> region code
    std::set<std::string> missing_values = {"", "NA", "."};
    std::set<std::string> true_codes = {"1", "true", "yes"};
    std::set<std::string> false_codes = {"0", "false", "no"};
    std::string occupation_scheme;  // label checked against crosswalks
    int default_year = 0;           // used when no year column is mapped

    static const std::set<std::string>& required_fields() {
        static const std::set<std::string> f = {"age", "sex", "race", "state", "occupation"};
        return f;
    }
};

struct IngestReport {
    std::size_t n_parsed = 0;
    std::size_t n_rejected = 0;
    std::map<std::string, std::size_t> reject_reasons;
};

namespace detail {

struct RowReject {
    std::string reason;
};

inline std::optional<std::string> cell_of(const Table& t, const std::vector<std::string>& row,
                                          const IngestSchema& schema, const std::string& field) {
    auto it = schema.columns.find(field);
    if (it == schema.columns.end()) return std::nullopt;
    int idx = t.column_index(it->second);
    if (idx < 0) throw DataError("schema maps field '" + field + "' to missing column '" +
                                 it->second + "'");
    return std::string(trim(row[static_cast<std::size_t>(idx)]));
}

inline bool is_missing(const IngestSchema& s, const std::string& cell) {
    return s.missing_values.count(cell) > 0;
}

inline bool parse_flag(const IngestSchema& s, const std::string& cell, const std::string& field,
                       bool fallback) {
    if (is_missing(s, cell)) return fallback;
    if (s.true_codes.count(cell)) return true;
    if (s.false_codes.count(cell)) return false;
    throw RowReject{"unknown code: " + field};
}

}  // namespace detail

// validates the schema against a parsed table; fatal on any mismatch
inline void validate_schema(const Table& t, const IngestSchema& schema) {
    for (const auto& field : IngestSchema::required_fields()) {
        if (!schema.columns.count(field))
            throw DataError("schema missing required field mapping: " + field);
    }
    if (!t.columns.empty()) {
        for (const auto& [field, col] : schema.columns) {
            if (t.column_index(col) < 0)
                throw DataError("schema maps field '" + field + "' to missing column '" + col +
                                "'");
        }
    } else if (!t.rows.empty()) {
        throw DataError("file has rows but no header");
    }
}

// Parses a single row; returns the record or a rejection reason.
inline std::variant<PersonRecord, std::string> parse_record_row(const Table& t,
                                                                const std::vector<std::string>& row,
                                                                std::size_t row_number,
                                                                const IngestSchema& schema) {
    try {
        PersonRecord rec;
        const auto get = [&](const std::string& field) {
            return detail::cell_of(t, row, schema, field);
        };

        if (auto c = get("record_id"); c && !detail::is_missing(schema, *c))
            rec.record_id = *c;
        else
            rec.record_id = "r" + std::to_string(row_number + 1);

        if (auto c = get("year"); c && !detail::is_missing(schema, *c)) {
            auto v = parse_int(*c);
            if (!v) throw detail::RowReject{"bad integer: year"};
            rec.year = static_cast<int>(*v);
        } else {
            rec.year = schema.default_year;
        }

        {
            auto c = get("age");
            if (!c || detail::is_missing(schema, *c)) throw detail::RowReject{"missing age"};
            auto v = parse_int(*c);
            if (!v) throw detail::RowReject{"bad integer: age"};
            if (*v < 0) throw detail::RowReject{"negative age"};
            rec.age = static_cast<int>(*v);
        }
        {
            auto c = get("sex");
            if (!c || detail::is_missing(schema, *c)) throw detail::RowReject{"missing sex"};
            auto it = schema.sex_codes.find(*c);
            if (it == schema.sex_codes.end()) throw detail::RowReject{"unknown code: sex"};
            rec.sex = it->second;
        }
        {
            auto c = get("race");
            if (!c || detail::is_missing(schema, *c)) throw detail::RowReject{"missing race"};
            auto it = schema.race_codes.find(*c);
            if (it == schema.race_codes.end()) throw detail::RowReject{"unknown code: race"};
            rec.race = it->second;
        }
        {
            auto c = get("state");
            if (!c || detail::is_missing(schema, *c)) throw detail::RowReject{"missing state"};
            auto it = schema.region_of_state.find(*c);
            if (it == schema.region_of_state.end())
                throw detail::RowReject{"unknown code: state"};
            rec.state = *c;
            rec.region = it->second;
        }
        if (auto c = get("birthplace"); c && !detail::is_missing(schema, *c))
            rec.birthplace = *c;
        if (auto c = get("nativity"); c)
            rec.nativity = detail::parse_flag(schema, *c, "nativity", true);
        if (auto c = get("industry"); c && !detail::is_missing(schema, *c)) rec.industry = *c;
        {
            auto c = get("occupation");
            if (!c || detail::is_missing(schema, *c))
                throw detail::RowReject{"missing occupation"};
            rec.occupation = *c;
        }
        if (auto c = get("earnings"); c && !detail::is_missing(schema, *c)) {
            auto v = parse_double(*c);
            if (!v) throw detail::RowReject{"bad number: earnings"};
            if (*v < 0) throw detail::RowReject{"negative earnings"};
            rec.earnings = *v;
        }
        if (auto c = get("in_labor_force"); c)
            rec.in_labor_force = detail::parse_flag(schema, *c, "in_labor_force", true);
        if (auto c = get("farm_status"); c)
            rec.farm_status = detail::parse_flag(schema, *c, "farm_status", false);
        if (auto c = get("family_size"); c && !detail::is_missing(schema, *c)) {
            auto v = parse_int(*c);
            if (!v || *v < 0) throw detail::RowReject{"bad integer: family_size"};
            rec.family_size = static_cast<int>(*v);
        }
        if (auto c = get("marital_status"); c && !detail::is_missing(schema, *c))
            rec.marital_status = *c;
        if (auto c = get("n_families_in_household"); c && !detail::is_missing(schema, *c)) {
            auto v = parse_int(*c);
            if (!v || *v < 0)
                throw detail::RowReject{"bad integer: n_families_in_household"};
            rec.n_families_in_household = static_cast<int>(*v);
        }
        if (auto c = get("relation_to_head"); c && !detail::is_missing(schema, *c))
            rec.relation_to_head = *c;
        if (auto c = get("weight"); c && !detail::is_missing(schema, *c)) {
            auto v = parse_double(*c);
            if (!v) throw detail::RowReject{"bad number: weight"};
            if (*v <= 0) throw detail::RowReject{"nonpositive weight"};
            rec.weight = *v;
        }

        return rec;
    } catch (const detail::RowReject& rej) {
        return rej.reason;
    }
}

// Parses one file against the schema. Unparseable or invariant-violating rows
// are rejected with a reason, not fatal; a missing mapped column is fatal.
inline std::pair<std::vector<PersonRecord>, IngestReport> load_microdata(
    const std::string& path, const IngestSchema& schema) {
    const Table t = read_table(path);
    validate_schema(t, schema);

    std::vector<PersonRecord> out;
    IngestReport report;
    if (t.columns.empty()) return {out, report};

    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        auto parsed = parse_record_row(t, t.rows[r], r, schema);
        if (std::holds_alternative<PersonRecord>(parsed)) {
            out.push_back(std::move(std::get<PersonRecord>(parsed)));
            ++report.n_parsed;
        } else {
            ++report.n_rejected;
            ++report.reject_reasons[std::get<std::string>(parsed)];
        }
    }
    return {out, report};
}

// ----------------------------------------------------------------------------
// Sample filters
// ----------------------------------------------------------------------------
struct FilterSpec {
    int age_min = 0;
    int age_max = 200;
    bool require_positive_earnings = false;
    bool require_labor_force = false;
    std::set<Race> exclude_races;
};

struct FilterReport {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    // per-predicate violation counts; a record violating several predicates
    // increments each of them, so the counts can sum to more than n_excluded
    std::map<std::string, std::size_t> exclusions;
};

inline std::pair<std::vector<PersonRecord>, FilterReport> filter_sample(
    std::span<const PersonRecord> records, const FilterSpec& spec) {
    if (spec.age_min > spec.age_max) throw ConfigError("filter: age_min > age_max");
    std::vector<PersonRecord> out;
    FilterReport rep;
    rep.n_in = records.size();
    out.reserve(records.size());
    for (const auto& r : records) {
        bool keep = true;
        if (r.age < spec.age_min || r.age > spec.age_max) {
            ++rep.exclusions["age_range"];
            keep = false;
        }
        if (spec.require_positive_earnings && !(r.earnings && *r.earnings > 0)) {
            ++rep.exclusions["positive_earnings"];
            keep = false;
        }
        if (spec.require_labor_force && !r.in_labor_force) {
            ++rep.exclusions["labor_force"];
            keep = false;
        }
        if (spec.exclude_races.count(r.race)) {
            ++rep.exclusions["race"];
            keep = false;
        }
        if (keep) out.push_back(r);
    }
    rep.n_out = out.size();
    return {out, rep};
}

// ----------------------------------------------------------------------------
// Occupation crosswalks
// ----------------------------------------------------------------------------
inline constexpr const char* kAmbiguousToken = "AMBIGUOUS";

struct Crosswalk {
    std::string source_scheme;
    std::string target_scheme;
    // nullopt target marks an ambiguous source code
    std::map<std::string, std::optional<std::string>> entries;
    std::size_t n_ambiguous = 0;
};

// Two-column delimited file; header names the schemes.
inline Crosswalk load_crosswalk(const std::string& path) {
    const Table t = read_table(path);
    if (t.columns.size() != 2)
        throw DataError("crosswalk must have exactly 2 columns, got " +
                        std::to_string(t.columns.size()));
    Crosswalk xw;
    xw.source_scheme = t.columns[0];
    xw.target_scheme = t.columns[1];
    for (const auto& row : t.rows) {
        const std::string src(trim(row[0]));
        const std::string dst(trim(row[1]));
        if (xw.entries.count(src))
            throw DataError("duplicate source code in crosswalk: " + src);
        if (dst == kAmbiguousToken) {
            xw.entries[src] = std::nullopt;
            ++xw.n_ambiguous;
        } else {
            xw.entries[src] = dst;
        }
    }
    return xw;
}

struct CrosswalkReport {
    std::size_t n_mapped = 0;
    std::size_t n_ambiguous_excluded = 0;
    std::size_t n_unmapped_excluded = 0;
};

// Remaps occupation codes; ambiguous and unmapped codes drop the record.
// No field other than occupation changes.
inline std::pair<std::vector<PersonRecord>, CrosswalkReport> apply_crosswalk(
    std::span<const PersonRecord> records, const Crosswalk& xw,
    const std::string& records_scheme) {
    if (!records_scheme.empty() && records_scheme != xw.source_scheme)
        throw DataError("crosswalk source scheme '" + xw.source_scheme +
                        "' does not match records scheme '" + records_scheme + "'");
    std::vector<PersonRecord> out;
    CrosswalkReport rep;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto it = xw.entries.find(r.occupation);
        if (it == xw.entries.end()) {
            ++rep.n_unmapped_excluded;
            continue;
        }
        if (!it->second) {
            ++rep.n_ambiguous_excluded;
            continue;
        }
        out.push_back(r);
        out.back().occupation = *it->second;
        ++rep.n_mapped;
    }
    return {out, rep};
}

// State->region lookup from a two-column delimited file (state, region).
inline std::map<std::string, std::string> load_region_map(const std::string& path) {
    const Table t = read_table(path);
    if (t.columns.size() != 2) throw DataError("region map must have exactly 2 columns");
    std::map<std::string, std::string> m;
    for (const auto& row : t.rows) {
        const std::string state(trim(row[0]));
        if (m.count(state)) throw DataError("duplicate state in region map: " + state);
        m[state] = std::string(trim(row[1]));
    }
    return m;
}

}  // namespace occlab
