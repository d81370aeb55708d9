#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lattice.hpp"
#include "model.hpp"
#include "piecewise.hpp"

namespace rxva {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolverSettings {
    std::size_t grid_points = 2000;
    LatticeMode lattice = LatticeMode::Auto;
};

struct OracleSettings {
    std::size_t paths = 100000;
    std::size_t dominance_paths = 10000;
    std::uint64_t seed = 20240601;
    bool antithetic = true;
    std::size_t im_paths = 100000;
    std::size_t im_grid_points = 50;
    unsigned workers = 1;
};

struct RunConfig {
    Market market;
    SolverSettings solver;
    OracleSettings oracle;
    std::string text; //!< raw file contents, hashed into the manifest
};

inline constexpr int kSchemaVersion = 1;

namespace detail {

using nlohmann::json;

[[noreturn]] inline void schema_fail(const std::string& where, const std::string& what) {
    throw ConfigError("config " + (where.empty() ? std::string("/") : where) + ": " + what);
}

inline const json& child(const json& j, const std::string& where, const char* key) {
    if (!j.is_object()) schema_fail(where, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) schema_fail(where + "/" + key, "missing required field");
    return *it;
}

inline double number(const json& j, const std::string& where) {
    if (!j.is_number()) schema_fail(where, "expected a number");
    return j.get<double>();
}

inline double number_at(const json& j, const std::string& where, const char* key) {
    return number(child(j, where, key), where + "/" + key);
}

inline double number_or(const json& j, const std::string& where, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    return number(j.at(key), where + "/" + key);
}

inline std::uint64_t count_or(const json& j, const std::string& where, const char* key, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        schema_fail(where + "/" + key, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

inline void known_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) schema_fail(where + "/" + it.key(), "unknown field");
    }
}

inline PiecewiseConstant step_function(const json& j, const std::string& where) {
    if (j.is_number()) return PiecewiseConstant(j.get<double>());
    if (!j.is_object()) schema_fail(where, "expected a number or {starts, values}");
    const auto& s = child(j, where, "starts");
    const auto& v = child(j, where, "values");
    if (!s.is_array() || !v.is_array()) schema_fail(where, "starts and values must be arrays");
    std::vector<double> starts, values;
    for (std::size_t k = 0; k < s.size(); ++k) starts.push_back(number(s[k], where + "/starts/" + std::to_string(k)));
    for (std::size_t k = 0; k < v.size(); ++k) values.push_back(number(v[k], where + "/values/" + std::to_string(k)));
    try {
        return PiecewiseConstant(starts, values);
    } catch (const std::exception& e) {
        schema_fail(where, e.what());
    }
}

inline Mask defaulted_set(const json& j, const std::string& where, int names) {
    if (!j.is_array()) schema_fail(where, "expected an array of 1-based entity ids");
    Mask m = 0;
    for (std::size_t k = 0; k < j.size(); ++k) {
        const std::string w = where + "/" + std::to_string(k);
        if (!j[k].is_number_integer()) schema_fail(w, "expected an integer entity id");
        const int id = j[k].get<int>();
        if (id < 1 || id > names) schema_fail(w, "entity id out of range");
        m |= Mask{1} << (id - 1);
    }
    return m;
}

inline IntensityTable intensity_table(const json& j, const std::string& where, int names) {
    IntensityTable t;
    t.base = step_function(j, where);
    if (j.is_object() && j.contains("overrides")) {
        const auto& o = j.at("overrides");
        if (!o.is_array()) schema_fail(where + "/overrides", "expected an array");
        for (std::size_t k = 0; k < o.size(); ++k) {
            const std::string w = where + "/overrides/" + std::to_string(k);
            t.overrides.emplace_back(defaulted_set(child(o[k], w, "defaulted"), w + "/defaulted", names),
                                     step_function(o[k], w));
        }
    }
    return t;
}

inline ContagionModel intensities(const json& j, const std::string& where, int names) {
    const auto& mode = child(j, where, "mode");
    if (!mode.is_string()) schema_fail(where + "/mode", "expected \"contagion\" or \"table\"");
    const std::string m = mode.get<std::string>();
    if (m == "contagion") {
        known_keys(j, where, {"mode", "a10", "a13", "a20", "a23", "a30", "a33", "a12", "a21", "a31", "a32"});
        ContagionParams p;
        p.a10 = number_at(j, where, "a10");
        p.a13 = number_or(j, where, "a13", 0.0);
        p.a20 = number_at(j, where, "a20");
        p.a23 = number_or(j, where, "a23", 0.0);
        p.a30 = number_at(j, where, "a30");
        p.a33 = number_or(j, where, "a33", 0.0);
        p.a12 = number_or(j, where, "a12", 0.0);
        p.a21 = number_or(j, where, "a21", 0.0);
        p.a31 = number_or(j, where, "a31", 0.0);
        p.a32 = number_or(j, where, "a32", 0.0);
        return ContagionModel::contagion(names, p);
    }
    if (m != "table") schema_fail(where + "/mode", "expected \"contagion\" or \"table\"");
    known_keys(j, where, {"mode", "investor", "counterparty", "reference", "references"});
    IntensityTable inv = intensity_table(child(j, where, "investor"), where + "/investor", names);
    std::optional<IntensityTable> cp;
    if (j.contains("counterparty")) cp = intensity_table(j.at("counterparty"), where + "/counterparty", names);
    std::vector<IntensityTable> refs;
    if (j.contains("references")) {
        const auto& r = j.at("references");
        if (!r.is_array() || static_cast<int>(r.size()) != names)
            schema_fail(where + "/references", "expected one table per contract");
        for (std::size_t k = 0; k < r.size(); ++k)
            refs.push_back(intensity_table(r[k], where + "/references/" + std::to_string(k), names));
    } else {
        const IntensityTable shared = intensity_table(child(j, where, "reference"), where + "/reference", names);
        refs.assign(static_cast<std::size_t>(names), shared);
    }
    return ContagionModel::tables(std::move(inv), std::move(cp), std::move(refs));
}

inline Portfolio portfolio(const json& j, const std::string& where) {
    known_keys(j, where, {"maturity", "loss_investor", "loss_counterparty", "gamma", "contracts", "homogeneous"});
    Portfolio p;
    p.maturity = number_at(j, where, "maturity");
    if (!(p.maturity > 0.0)) schema_fail(where + "/maturity", "must be positive");
    p.loss_investor = number_at(j, where, "loss_investor");
    p.loss_counterparty = number_at(j, where, "loss_counterparty");
    for (const char* k : {"loss_investor", "loss_counterparty"}) {
        const double v = number_at(j, where, k);
        if (v < 0.0 || v > 1.0) schema_fail(where + "/" + k, "loss rate outside [0, 1]");
    }
    int gamma = 1;
    if (j.contains("gamma")) {
        const auto& g = j.at("gamma");
        if (!g.is_number_integer() || (g.get<int>() != 1 && g.get<int>() != -1))
            schema_fail(where + "/gamma", "expected +1 or -1");
        gamma = g.get<int>();
    }
    auto contract = [&](const json& c, const std::string& w) {
        Contract ct;
        ct.spread = number_at(c, w, "spread");
        ct.loss = number_at(c, w, "loss");
        ct.direction = gamma;
        if (ct.spread < 0.0) schema_fail(w + "/spread", "must be nonnegative");
        if (ct.loss < 0.0) schema_fail(w + "/loss", "must be nonnegative");
        return ct;
    };
    if (j.contains("contracts") == j.contains("homogeneous"))
        schema_fail(where, "give exactly one of contracts or homogeneous");
    if (j.contains("contracts")) {
        const auto& cs = j.at("contracts");
        if (!cs.is_array()) schema_fail(where + "/contracts", "expected an array");
        for (std::size_t k = 0; k < cs.size(); ++k)
            p.contracts.push_back(contract(cs[k], where + "/contracts/" + std::to_string(k)));
    } else {
        const std::string w = where + "/homogeneous";
        const auto& h = j.at("homogeneous");
        const auto names = count_or(h, w, "names", 0);
        if (names > 16) schema_fail(w + "/names", "at most 16 names");
        const Contract ct = contract(h, w);
        p.contracts.assign(static_cast<std::size_t>(names), ct);
    }
    if (p.contracts.size() > 16) schema_fail(where + "/contracts", "at most 16 contracts");
    return p;
}

} // namespace detail

//! "line L, column C" for a byte offset into `text`.
inline std::string text_position(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
        if (text[k] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline RunConfig parse_config(const std::string& text) {
    using detail::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
        throw ConfigError("config parse error at " + text_position(text, at) + ": " + e.what());
    }
    if (!j.is_object()) detail::schema_fail("", "top level must be an object");
    detail::known_keys(j, "", {"schema_version", "description", "rates", "counterparty_band", "intensities",
                               "physical_intensities", "portfolio", "collateral", "solver", "oracle"});
    const auto& ver = detail::child(j, "", "schema_version");
    if (!ver.is_number_integer() || ver.get<int>() != kSchemaVersion)
        detail::schema_fail("/schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");

    RunConfig cfg;
    cfg.text = text;
    Market& mk = cfg.market;

    const auto& r = detail::child(j, "", "rates");
    detail::known_keys(r, "/rates", {"r_D", "r_f_plus", "r_f_minus", "r_m_plus", "r_m_minus"});
    mk.rates.r_D = detail::number_at(r, "/rates", "r_D");
    mk.rates.rf_plus = detail::number_or(r, "/rates", "r_f_plus", mk.rates.r_D);
    mk.rates.rf_minus = detail::number_or(r, "/rates", "r_f_minus", mk.rates.r_D);
    mk.rates.rm_plus = detail::number_or(r, "/rates", "r_m_plus", mk.rates.r_D);
    mk.rates.rm_minus = detail::number_or(r, "/rates", "r_m_minus", mk.rates.r_D);

    mk.portfolio = detail::portfolio(detail::child(j, "", "portfolio"), "/portfolio");
    const int n = mk.size();
    mk.q = detail::intensities(detail::child(j, "", "intensities"), "/intensities", n);
    if (j.contains("physical_intensities"))
        mk.p = detail::intensities(j.at("physical_intensities"), "/physical_intensities", n);

    const auto& b = detail::child(j, "", "counterparty_band");
    detail::known_keys(b, "/counterparty_band", {"mu_C_lower", "mu_C_upper", "mu_C_true", "rule"});
    if (b.contains("rule")) {
        if (!b.at("rule").is_string() || b.at("rule").get<std::string>() != "contagion")
            detail::schema_fail("/counterparty_band/rule", "only \"contagion\" is supported");
        if (mk.q.mode() != ContagionModel::Mode::Contagion)
            detail::schema_fail("/counterparty_band/rule", "needs contagion intensities");
        const auto& a = mk.q.params();
        mk.band.mu_lower = a.a20 + mk.rates.r_D;
        mk.band.mu_upper = a.a20 + mk.rates.r_D + n * a.a23;
    } else {
        mk.band.mu_lower = detail::number_at(b, "/counterparty_band", "mu_C_lower");
        mk.band.mu_upper = detail::number_at(b, "/counterparty_band", "mu_C_upper");
    }
    if (b.contains("mu_C_true")) mk.band.mu_true = detail::step_function(b.at("mu_C_true"), "/counterparty_band/mu_C_true");
    if (mk.band.mu_lower > mk.band.mu_upper)
        detail::schema_fail("/counterparty_band", "band inverted: mu_C_lower > mu_C_upper");

    if (j.contains("collateral")) {
        const auto& c = j.at("collateral");
        detail::known_keys(c, "/collateral", {"alpha", "beta", "q", "delta"});
        auto& t = mk.portfolio.collateral;
        t.alpha = detail::number_or(c, "/collateral", "alpha", t.alpha);
        t.beta = detail::number_or(c, "/collateral", "beta", t.beta);
        t.q = detail::number_or(c, "/collateral", "q", t.q);
        t.delta = detail::number_or(c, "/collateral", "delta", t.delta);
        if (t.alpha < 0.0 || t.alpha > 1.0) detail::schema_fail("/collateral/alpha", "outside [0, 1]");
        if (t.beta < 0.0) detail::schema_fail("/collateral/beta", "must be nonnegative");
        if (!(t.q > 0.0 && t.q < 1.0)) detail::schema_fail("/collateral/q", "outside (0, 1)");
        if (!(t.delta > 0.0)) detail::schema_fail("/collateral/delta", "must be positive");
    }

    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        detail::known_keys(s, "/solver", {"grid_points", "lattice"});
        cfg.solver.grid_points = detail::count_or(s, "/solver", "grid_points", cfg.solver.grid_points);
        if (cfg.solver.grid_points < 1) detail::schema_fail("/solver/grid_points", "must be positive");
        if (s.contains("lattice")) {
            const auto& l = s.at("lattice");
            const std::string v = l.is_string() ? l.get<std::string>() : "";
            if (v == "auto") cfg.solver.lattice = LatticeMode::Auto;
            else if (v == "full") cfg.solver.lattice = LatticeMode::Full;
            else if (v == "homogeneous") cfg.solver.lattice = LatticeMode::Homogeneous;
            else detail::schema_fail("/solver/lattice", "expected auto, full or homogeneous");
        }
    }

    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        detail::known_keys(o, "/oracle",
                           {"paths", "dominance_paths", "seed", "antithetic", "im_paths", "im_grid_points", "workers"});
        auto& s = cfg.oracle;
        s.paths = detail::count_or(o, "/oracle", "paths", s.paths);
        s.dominance_paths = detail::count_or(o, "/oracle", "dominance_paths", s.dominance_paths);
        s.seed = detail::count_or(o, "/oracle", "seed", s.seed);
        s.im_paths = detail::count_or(o, "/oracle", "im_paths", s.im_paths);
        s.im_grid_points = detail::count_or(o, "/oracle", "im_grid_points", s.im_grid_points);
        s.workers = static_cast<unsigned>(detail::count_or(o, "/oracle", "workers", s.workers));
        if (o.contains("antithetic")) {
            if (!o.at("antithetic").is_boolean()) detail::schema_fail("/oracle/antithetic", "expected a boolean");
            s.antithetic = o.at("antithetic").get<bool>();
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

} // namespace rxva
