#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "occlab/common.hpp"

namespace occlab {

// ============================================================================
// DESIGN CONSTRUCTION
//
// A DataTable holds named numeric and factor columns; build_design expands a
// formula into a dense matrix with an intercept, dummy coding, and pairwise
// factor interactions. Column order is fully deterministic.
// ============================================================================

class DataTable {
  public:
    explicit DataTable(std::size_t n_rows) : n_(n_rows) {}

    void add_numeric(const std::string& name, std::vector<double> values) {
        check_new(name, values.size());
        numeric_[name] = std::move(values);
        order_.push_back(name);
    }

    void add_factor(const std::string& name, std::vector<std::string> codes) {
        check_new(name, codes.size());
        factors_[name] = std::move(codes);
        order_.push_back(name);
    }

    std::size_t n_rows() const { return n_; }
    bool has_numeric(const std::string& name) const { return numeric_.count(name) > 0; }
    bool has_factor(const std::string& name) const { return factors_.count(name) > 0; }

    const std::vector<double>& numeric(const std::string& name) const {
        auto it = numeric_.find(name);
        if (it == numeric_.end()) throw ConfigError("no numeric column: " + name);
        return it->second;
    }

    const std::vector<std::string>& factor(const std::string& name) const {
        auto it = factors_.find(name);
        if (it == factors_.end()) throw ConfigError("no factor column: " + name);
        return it->second;
    }

  private:
    void check_new(const std::string& name, std::size_t sz) {
        if (sz != n_) throw ConfigError("column '" + name + "' length mismatch");
        if (numeric_.count(name) || factors_.count(name))
            throw ConfigError("duplicate column: " + name);
    }
    std::size_t n_;
    std::map<std::string, std::vector<double>> numeric_;
    std::map<std::string, std::vector<std::string>> factors_;
    std::vector<std::string> order_;
};

struct Formula {
    std::vector<std::string> continuous;  // numeric columns, in order
    std::vector<std::string> factors;     // dummy-coded factors, in order
    std::vector<std::pair<std::string, std::string>> interactions;  // factor pairs, last
};

enum class ColumnKind { intercept, continuous, dummy, interaction };

struct DesignMatrix {
    Eigen::MatrixXd X;
    std::vector<std::string> names;
    std::vector<ColumnKind> kinds;
    std::vector<std::pair<std::string, std::string>> dropped_levels;  // (factor, reference)
    std::vector<std::string> warnings;

    std::size_t n_rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t n_cols() const { return static_cast<std::size_t>(X.cols()); }
};

namespace detail {

// reference level: most frequent; ties broken toward the smallest code
inline std::string reference_level(const std::vector<std::string>& codes) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : codes) ++counts[c];
    std::string ref;
    std::size_t best = 0;
    for (const auto& [code, n] : counts) {
        if (n > best) {
            best = n;
            ref = code;
        }
    }
    return ref;
}

inline std::vector<std::string> sorted_levels(const std::vector<std::string>& codes) {
    std::vector<std::string> lv(codes.begin(), codes.end());
    std::sort(lv.begin(), lv.end());
    lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
    return lv;
}

}  // namespace detail

inline DesignMatrix build_design(const DataTable& t, const Formula& f) {
    const std::size_t n = t.n_rows();
    if (n == 0) throw DataError("build_design: empty record set");

    DesignMatrix d;
    std::vector<std::vector<double>> cols;
    const auto push = [&](const std::string& name, ColumnKind kind, std::vector<double> v) {
        for (const auto& existing : d.names)
            if (existing == name) throw ConfigError("duplicate design column: " + name);
        d.names.push_back(name);
        d.kinds.push_back(kind);
        cols.push_back(std::move(v));
    };

    push("(intercept)", ColumnKind::intercept, std::vector<double>(n, 1.0));

    for (const auto& name : f.continuous) {
        push(name, ColumnKind::continuous, t.numeric(name));
    }

    // per factor: sorted levels minus the reference
    std::map<std::string, std::string> refs;
    std::map<std::string, std::vector<std::string>> nonref;
    for (const auto& fac : f.factors) {
        const auto& codes = t.factor(fac);
        const auto levels = detail::sorted_levels(codes);
        const std::string ref = detail::reference_level(codes);
        refs[fac] = ref;
        d.dropped_levels.emplace_back(fac, ref);
        if (levels.size() < 2) {
            d.warnings.push_back("factor '" + fac + "' has a single level; no dummies emitted");
            continue;
        }
        for (const auto& lv : levels) {
            if (lv == ref) continue;
            nonref[fac].push_back(lv);
            std::vector<double> col(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) col[i] = codes[i] == lv ? 1.0 : 0.0;
            push(fac + "=" + lv, ColumnKind::dummy, std::move(col));
        }
    }

    for (const auto& [fa, fb] : f.interactions) {
        const auto& ca = t.factor(fa);
        const auto& cb = t.factor(fb);
        std::string ra = refs.count(fa) ? refs[fa] : detail::reference_level(ca);
        std::string rb = refs.count(fb) ? refs[fb] : detail::reference_level(cb);
        auto la = nonref.count(fa) ? nonref[fa] : std::vector<std::string>{};
        auto lb = nonref.count(fb) ? nonref[fb] : std::vector<std::string>{};
        if (!refs.count(fa)) {
            for (const auto& lv : detail::sorted_levels(ca))
                if (lv != ra) la.push_back(lv);
        }
        if (!refs.count(fb)) {
            for (const auto& lv : detail::sorted_levels(cb))
                if (lv != rb) lb.push_back(lv);
        }
        for (const auto& va : la) {
            for (const auto& vb : lb) {
                std::vector<double> col(n, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    col[i] = (ca[i] == va && cb[i] == vb) ? 1.0 : 0.0;
                push(fa + "=" + va + "*" + fb + "=" + vb, ColumnKind::interaction,
                     std::move(col));
            }
        }
    }

    // drop exact duplicates and constant non-intercept columns
    std::vector<bool> keep(cols.size(), true);
    for (std::size_t j = 1; j < cols.size(); ++j) {
        bool constant = true;
        for (std::size_t i = 1; i < n && constant; ++i)
            if (cols[j][i] != cols[j][0]) constant = false;
        if (constant) {
            keep[j] = false;
            d.warnings.push_back("constant column dropped: " + d.names[j]);
            continue;
        }
        for (std::size_t k = 0; k < j; ++k) {
            if (!keep[k]) continue;
            if (cols[j] == cols[k]) {
                keep[j] = false;
                d.warnings.push_back("duplicate column dropped: " + d.names[j] + " == " +
                                     d.names[k]);
                break;
            }
        }
    }

    std::vector<std::string> names;
    std::vector<ColumnKind> kinds;
    std::size_t p = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) p += keep[j] ? 1 : 0;
    d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    std::size_t out = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (!keep[j]) continue;
        for (std::size_t i = 0; i < n; ++i)
            d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out)) = cols[j][i];
        names.push_back(d.names[j]);
        kinds.push_back(d.kinds[j]);
        ++out;
    }
    d.names = std::move(names);
    d.kinds = std::move(kinds);
    return d;
}

}  // namespace occlab
