#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "thr/errors.hpp"
#include "thr/evaluate.hpp"
#include "thr/reconcile.hpp"

namespace thr {

using nlohmann::json;

/// FNV-1a over the canonical (key-sorted) JSON dump; recorded in every
/// output file so a result row can be traced to its exact configuration.
inline std::string config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed,
                         const std::set<std::string>& required, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
    for (const auto& key : required)
        if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
}

inline Method parse_method(const json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "bottom_up") return Method::bottom_up();
        CovSpec spec;
        if (s == "ols") spec.kind = CovSpec::Kind::Identity;
        else if (s == "variance") spec.kind = CovSpec::Kind::VarianceScaling;
        else if (s == "structural") spec.kind = CovSpec::Kind::StructuralScaling;
        else if (s == "full") spec.kind = CovSpec::Kind::FullSample;
        else if (s == "shrinkage") spec.kind = CovSpec::Kind::Shrinkage; // auto lambda
        else if (s == "spectral") spec.kind = CovSpec::Kind::Spectral;   // cv hyperparameters
        else if (s == "theoretical_ar1") spec.kind = CovSpec::Kind::TheoreticalAr1;
        else throw ConfigError("unknown method '" + s + "'");
        return Method::mint(spec, s);
    }
    if (j.is_object() && j.size() == 1) {
        const auto it = j.begin();
        const std::string name = it.key();
        const json& opts = it.value();
        CovSpec spec;
        if (name == "shrinkage") {
            spec.kind = CovSpec::Kind::Shrinkage;
            require_keys(opts, {"lambda"}, {"lambda"}, "methods.shrinkage");
            if (opts["lambda"].is_string()) {
                if (opts["lambda"].get<std::string>() != "auto")
                    throw ConfigError("shrinkage lambda must be a number or \"auto\"");
            } else {
                spec.lambda = opts["lambda"].get<double>();
                if (!(*spec.lambda > 0.0 && *spec.lambda < 1.0))
                    throw ConfigError("shrinkage lambda must lie in (0,1)");
            }
        } else if (name == "spectral") {
            spec.kind = CovSpec::Kind::Spectral;
            require_keys(opts, {"nu", "n_eig"}, {}, "methods.spectral");
            if (opts.contains("nu") && !opts["nu"].is_string()) {
                spec.nu = opts["nu"].get<double>();
                if (!(*spec.nu >= 0.0 && *spec.nu <= 1.0))
                    throw ConfigError("spectral nu must lie in [0,1]");
            } else if (opts.contains("nu") && opts["nu"].get<std::string>() != "cv") {
                throw ConfigError("spectral nu must be a number or \"cv\"");
            }
            if (opts.contains("n_eig") && !opts["n_eig"].is_string()) {
                spec.n_eig = opts["n_eig"].get<int>();
                if (*spec.n_eig < 1) throw ConfigError("spectral n_eig must be >= 1");
            } else if (opts.contains("n_eig") && opts["n_eig"].get<std::string>() != "cv") {
                throw ConfigError("spectral n_eig must be an integer or \"cv\"");
            }
        } else {
            throw ConfigError("unknown method object '" + name + "'");
        }
        return Method::mint(spec, name);
    }
    throw ConfigError("method entries must be strings or single-key objects");
}

inline std::vector<Method> parse_methods(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("methods: expected a non-empty array");
    std::vector<Method> out;
    for (const auto& e : j) out.push_back(parse_method(e));
    return out;
}

inline std::vector<std::vector<int>> parse_ks_sets(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("ks: expected a non-empty array");
    std::vector<std::vector<int>> out;
    const bool nested = j.front().is_array();
    if (nested) {
        for (const auto& e : j) out.push_back(e.get<std::vector<int>>());
    } else {
        out.push_back(j.get<std::vector<int>>());
    }
    for (const auto& ks : out) static_cast<void>(TemporalHierarchy(ks)); // validates
    return out;
}

} // namespace detail

/// Parameters of a randomly drawn ARMA grid (stationary draws through the
/// partial-correlation map), as an alternative to an explicit phi grid.
struct ArmaDrawSpec {
    int p = 1;
    int q = 0;
    int n_draws = 100;
    int series_per_draw = 20;
};

/// Declarative simulation scenario. Every key is checked; unknown keys are
/// hard errors so a typo cannot silently change an experiment.
struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::vector<int> n_top;
    std::vector<double> phi; // empty when arma drawing is used
    std::optional<ArmaDrawSpec> arma;
    std::vector<double> sigma2;
    std::vector<std::vector<int>> ks_sets;
    std::vector<int> horizons;
    bool auto_select = false;
    int auto_max_p = 3;
    int auto_max_q = 3;
    int replications = 50;
    double train_frac = 0.75;
    std::vector<Method> methods;
    std::string hash; ///< config hash, filled by parse

    static ScenarioConfig parse(json j, std::optional<std::uint64_t> seed_override = {}) {
        detail::require_keys(
            j,
            {"seed", "n_top", "phi", "arma", "sigma2", "ks", "h", "mode", "replications",
             "train_frac", "methods", "auto_max_p", "auto_max_q", "aggregation"},
            {"n_top", "sigma2", "ks", "h", "mode", "replications", "train_frac", "methods"},
            "scenario config");
        ScenarioConfig c;
        if (seed_override) j["seed"] = *seed_override;
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("aggregation") && j["aggregation"].get<std::string>() != "flow")
            throw ConfigError("only flow aggregation is supported");
        c.n_top = j["n_top"].get<std::vector<int>>();
        if (c.n_top.empty()) throw ConfigError("n_top must be non-empty");
        if (j.contains("phi") == j.contains("arma"))
            throw ConfigError("exactly one of 'phi' and 'arma' must be given");
        if (j.contains("phi")) {
            c.phi = j["phi"].get<std::vector<double>>();
            if (c.phi.empty()) throw ConfigError("phi grid must be non-empty");
            for (double v : c.phi)
                if (!(std::abs(v) < 1.0)) throw ConfigError("phi values must satisfy |phi| < 1");
        } else {
            const json& a = j["arma"];
            detail::require_keys(a, {"p", "q", "n_draws", "series_per_draw"},
                                 {"p", "q", "n_draws", "series_per_draw"}, "arma");
            ArmaDrawSpec d;
            d.p = a["p"].get<int>();
            d.q = a["q"].get<int>();
            d.n_draws = a["n_draws"].get<int>();
            d.series_per_draw = a["series_per_draw"].get<int>();
            if (d.p < 0 || d.q < 0 || d.p + d.q == 0)
                throw ConfigError("arma draw orders must be non-negative with p+q >= 1");
            if (d.n_draws < 1 || d.series_per_draw < 1)
                throw ConfigError("arma draw counts must be >= 1");
            c.arma = d;
        }
        c.sigma2 = j["sigma2"].get<std::vector<double>>();
        for (double v : c.sigma2)
            if (!(v > 0.0)) throw ConfigError("sigma2 values must be positive");
        c.ks_sets = detail::parse_ks_sets(j["ks"]);
        c.horizons = j["h"].get<std::vector<int>>();
        for (int h : c.horizons)
            if (h < 1) throw ConfigError("horizons must be >= 1");
        const std::string mode = j["mode"].get<std::string>();
        if (mode == "auto") c.auto_select = true;
        else if (mode != "fixed") throw ConfigError("mode must be 'fixed' or 'auto'");
        if (j.contains("auto_max_p")) c.auto_max_p = j["auto_max_p"].get<int>();
        if (j.contains("auto_max_q")) c.auto_max_q = j["auto_max_q"].get<int>();
        c.replications = j["replications"].get<int>();
        if (c.replications < 1) throw ConfigError("replications must be >= 1");
        c.train_frac = j["train_frac"].get<double>();
        if (!(c.train_frac > 0.0 && c.train_frac < 1.0))
            throw ConfigError("train_frac must lie in (0,1)");
        c.methods = detail::parse_methods(j["methods"]);
        for (const Method& m : c.methods)
            if (m.kind == Method::Kind::Mint && m.cov.kind == CovSpec::Kind::TheoreticalAr1 &&
                c.arma)
                throw ConfigError("theoretical_ar1 requires an explicit phi grid");
        c.hash = config_hash(j);
        return c;
    }
};

/// Real-data run: a single bottom-level series from a CSV column.
struct DatasetSpec {
    std::string input;
    std::string value_column;
    std::vector<int> ks;
    double train_frac = 0.8;
    bool demean = true;
    int h = 1;
    bool auto_select = false;
    std::vector<int> bottom_order; // p,d,q when mode == fixed
    int auto_max_p = 3;
    int auto_max_q = 3;
    int auto_d = 0;
    std::vector<Method> methods;
    std::uint64_t seed = 0;
    std::string hash;

    static DatasetSpec parse(json j) {
        detail::require_keys(j,
                             {"input", "value_column", "ks", "train_frac", "demean", "h", "mode",
                              "bottom_order", "auto_max_p", "auto_max_q", "auto_d", "methods",
                              "seed", "aggregation"},
                             {"input", "value_column", "ks", "train_frac", "methods", "mode"},
                             "dataset config");
        DatasetSpec c;
        c.input = j["input"].get<std::string>();
        c.value_column = j["value_column"].get<std::string>();
        if (j.contains("aggregation") && j["aggregation"].get<std::string>() != "flow")
            throw ConfigError("only flow aggregation is supported");
        c.ks = j["ks"].get<std::vector<int>>();
        static_cast<void>(TemporalHierarchy(c.ks));
        c.train_frac = j["train_frac"].get<double>();
        if (!(c.train_frac > 0.0 && c.train_frac < 1.0))
            throw ConfigError("train_frac must lie in (0,1)");
        if (j.contains("demean")) c.demean = j["demean"].get<bool>();
        if (j.contains("h")) c.h = j["h"].get<int>();
        if (c.h < 1) throw ConfigError("h must be >= 1");
        const std::string mode = j["mode"].get<std::string>();
        if (mode == "auto") {
            c.auto_select = true;
        } else if (mode == "fixed") {
            if (!j.contains("bottom_order"))
                throw ConfigError("fixed mode requires 'bottom_order' [p,d,q]");
            c.bottom_order = j["bottom_order"].get<std::vector<int>>();
            if (c.bottom_order.size() != 3)
                throw ConfigError("bottom_order must be [p,d,q]");
        } else {
            throw ConfigError("mode must be 'fixed' or 'auto'");
        }
        if (j.contains("auto_max_p")) c.auto_max_p = j["auto_max_p"].get<int>();
        if (j.contains("auto_max_q")) c.auto_max_q = j["auto_max_q"].get<int>();
        if (j.contains("auto_d")) c.auto_d = j["auto_d"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        c.methods = detail::parse_methods(j["methods"]);
        c.hash = config_hash(j);
        return c;
    }
};

} // namespace thr
