// rxva: clean values, XVA bounds, oracle verification and sweeps for CDS portfolios.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rxva/clean.hpp"
#include "rxva/collateral.hpp"
#include "rxva/config.hpp"
#include "rxva/grid.hpp"
#include "rxva/io.hpp"
#include "rxva/lattice.hpp"
#include "rxva/model.hpp"
#include "rxva/oracle.hpp"
#include "rxva/strategy.hpp"
#include "rxva/sweep.hpp"
#include "rxva/xva.hpp"

namespace fs = std::filesystem;
using namespace rxva;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kAssumption = 3, kVerify = 4 };

struct Common {
    std::string config;
    std::string out_dir = ".";
    std::optional<std::size_t> grid_points;
    std::optional<std::size_t> paths;
    std::optional<std::uint64_t> seed;
    std::optional<int> gamma;
    std::optional<unsigned> workers;
    bool allow_violation = false;
    std::size_t stride = 1;
};

struct Run {
    RunConfig cfg;
    RunManifest manifest;
    AssumptionReport assumptions;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    const Market& market() const { return cfg.market; }
    fs::path out(const std::string& name) {
        manifest.outputs.push_back(name);
        return dir / name;
    }
    fs::path dir;
};

struct AssumptionFailure {
    std::vector<std::string> names;
};

Run prepare(const Common& c, const std::string& sub) {
    Run run;
    run.cfg = load_config(c.config);
    auto& cfg = run.cfg;
    if (c.grid_points) cfg.solver.grid_points = *c.grid_points;
    if (c.paths) cfg.oracle.paths = *c.paths;
    if (c.seed) cfg.oracle.seed = *c.seed;
    if (c.workers) cfg.oracle.workers = *c.workers;
    if (c.gamma) cfg.market.portfolio = cfg.market.portfolio.with_direction(*c.gamma);
    if (cfg.solver.grid_points < 1) throw ConfigError("--grid-points must be positive");

    run.assumptions = validate_assumptions(cfg.market);
    if (!run.assumptions.passed()) {
        for (const auto& f : run.assumptions.failures()) std::cerr << "assumption violated: " << f << '\n';
        if (!c.allow_violation) throw AssumptionFailure{run.assumptions.failures()};
        std::cerr << "continuing under --allow-assumption-violation\n";
    }

    // the hash covers everything that changes outputs
    std::string key = cfg.text + "|" + std::to_string(cfg.solver.grid_points) + "|" + std::to_string(cfg.oracle.paths) +
                      "|" + std::to_string(cfg.oracle.seed) + "|" +
                      std::to_string(cfg.market.portfolio.contracts.empty() ? 0
                                                                            : cfg.market.portfolio.contracts[0].direction);
    run.manifest.config_hash = hex64(fnv1a(key));
    run.manifest.seed = cfg.oracle.seed;
    run.manifest.grid_points = cfg.solver.grid_points;
    run.manifest.subcommand = sub;
    run.dir = c.out_dir;
    fs::create_directories(run.dir);
    return run;
}

std::shared_ptr<const TimeGrid> make_grid(const Run& run) {
    const Market& mk = run.market();
    return std::make_shared<const TimeGrid>(mk.maturity(), static_cast<int>(run.cfg.solver.grid_points),
                                            mk.breakpoints());
}

MarginModel make_margin(const Run& run, const Lattice& lat) {
    MarginSettings ms;
    ms.im_paths = run.cfg.oracle.im_paths;
    ms.im_times = run.cfg.oracle.im_grid_points;
    ms.seed = run.cfg.oracle.seed;
    ms.workers = run.cfg.oracle.workers;
    return MarginModel::build(run.market(), lat, ms);
}

ojson assumptions_json(const AssumptionReport& rep) {
    ojson a = ojson::array();
    for (const auto& c : rep.checks)
        a.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"strict", c.strict}, {"passed", c.passed}});
    return a;
}

void finish(Run& run) {
    run.manifest.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
    write_text(run.dir / RunManifest::file_name, run.manifest.to_json().dump(2) + "\n");
}

void write_report(Run& run, const std::string& name, ojson body) {
    ojson j;
    j["manifest"] = RunManifest::file_name;
    j["config_hash"] = run.manifest.config_hash;
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
    write_text(run.out(name), j.dump(2) + "\n");
}

std::vector<std::size_t> node_rows(const TimeGrid& g, std::size_t stride) {
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < g.nodes(); j += std::max<std::size_t>(stride, 1)) rows.push_back(j);
    if (rows.back() != g.nodes() - 1) rows.push_back(g.nodes() - 1);
    return rows;
}

int cmd_price(const Common& c) {
    Run run = prepare(c, "price");
    const Market& mk = run.market();
    const Lattice lat = Lattice::for_market(mk, run.cfg.solver.lattice);
    const auto grid = make_grid(run);
    const LatticeSurface v = clean_surface(mk, lat, grid, Orientation::Oriented);
    const MarginModel margin = make_margin(run, lat);

    {
        CsvWriter w(run.out("clean.csv"), run.manifest, {"time", "subset", "value"});
        for (std::size_t j : node_rows(*grid, c.stride))
            for (int s = 0; s < lat.states(); ++s) w.cell((*grid)[j]).cell(lat.label(s)).cell(v.value(s, 0, j)).end_row();
    }
    {
        CsvWriter w(run.out("margin.csv"), run.manifest, {"time", "subset", "vm", "im", "m"});
        for (std::size_t j : node_rows(*grid, c.stride))
            for (int s = 0; s < lat.states(); ++s) {
                const double t = (*grid)[j];
                const double vm = s == lat.states() - 1 ? 0.0 : margin.alpha() * v.value(s, 0, j);
                const double im = margin.initial(s, t);
                w.cell(t).cell(lat.label(s)).cell(vm).cell(im).cell(vm + im).end_row();
            }
    }
    // reversed-time crossings of the root clean value
    ojson crossings = ojson::array();
    for (std::size_t j = 0; j + 1 < grid->nodes(); ++j) {
        const double a = v.value(0, 0, j), b = v.value(0, 0, j + 1);
        if ((a < 0.0) != (b < 0.0)) {
            const double t = (*grid)[j] + ((*grid)[j + 1] - (*grid)[j]) * a / (a - b);
            crossings.push_back({{"time", t}, {"reversed_time", mk.maturity() - t}});
        }
    }
    ojson body;
    body["v_hat_0"] = v.value(0, 0, 0);
    body["states"] = lat.states();
    body["lattice"] = lat.is_homogeneous() ? "homogeneous" : "full";
    body["sign_changes"] = crossings;
    body["assumptions"] = assumptions_json(run.assumptions);
    write_report(run, "price.json", body);
    finish(run);
    std::cout << "v_hat_0 = " << fmt(v.value(0, 0, 0)) << '\n';
    return kOk;
}

int cmd_xva(const Common& c, const std::string& which) {
    Run run = prepare(c, "xva");
    const Market& mk = run.market();
    const Lattice lat = Lattice::for_market(mk, run.cfg.solver.lattice);
    const auto grid = make_grid(run);
    const MarginModel margin = make_margin(run, lat);
    const bool all = which == "all";
    std::optional<XvaSolution> act, up, lo;
    if (all || which == "actual") {
        if (!mk.has_true_counterparty()) throw ConfigError("--which actual needs counterparty_band/mu_C_true");
        act = solve_xva(mk, lat, grid, margin, Variant::Actual);
    }
    if (all && !mk.has_true_counterparty()) act.reset();
    if (all || which == "upper") up = solve_xva(mk, lat, grid, margin, Variant::Upper);
    if (all || which == "lower") lo = solve_xva(mk, lat, grid, margin, Variant::Lower);
    const XvaSolution& any = up ? *up : (act ? *act : *lo);

    auto cell = [](CsvWriter& w, const std::optional<XvaSolution>& s, int st, std::size_t j) {
        if (s) w.cell(s->u(st, j));
        else w.cell("");
    };
    {
        CsvWriter w(run.out("xva.csv"), run.manifest, {"time", "subset", "u_actual", "u_upper", "u_lower", "regime"});
        for (std::size_t j : node_rows(*grid, c.stride))
            for (int s = 0; s < lat.states(); ++s) {
                w.cell((*grid)[j]).cell(lat.label(s));
                cell(w, act, s, j);
                cell(w, up, s, j);
                cell(w, lo, s, j);
                w.cell(to_string(any.regime_at(s, j))).end_row();
            }
    }
    {
        CsvWriter w(run.out("regime.csv"), run.manifest, {"time", "subset", "regime_upper", "regime_lower"});
        for (std::size_t j : node_rows(*grid, c.stride))
            for (int s = 0; s + 1 < lat.states(); ++s) {
                w.cell((*grid)[j]).cell(lat.label(s));
                w.cell(up ? to_string(up->regime_at(s, j)) : "");
                w.cell(lo ? to_string(lo->regime_at(s, j)) : "");
                w.end_row();
            }
    }
    ojson strategies;
    auto strat = [&](const std::optional<XvaSolution>& s, const std::string& name) {
        if (!s) return;
        CsvWriter w(run.out("strategy_" + name + ".csv"), run.manifest,
                    {"time", "subset", "xi_ref_value", "xi_I_value", "xi_C_value", "xi_f_value", "psi_m_value"});
        for (std::size_t j : node_rows(*grid, c.stride))
            for (int st = 0; st + 1 < lat.states(); ++st) {
                const double t = (*grid)[j];
                const Mask J = lat.mask(st);
                const auto snap = strategy_snapshot(mk, lat, margin, *s, t, J, pre_default_accounts(mk, t, J));
                double ref = 0.0;
                for (int i = 0; i < mk.size(); ++i)
                    if (!(J & (Mask{1} << i))) {
                        ref = snap.xi_ref_value[static_cast<std::size_t>(i)];
                        break;
                    }
                w.cell(t).cell(lat.label(st)).cell(ref).cell(snap.xi_I_value).cell(snap.xi_C_value);
                w.cell(snap.xi_f_value).cell(snap.psi_m_value).end_row();
            }
        const auto snap0 = strategy_snapshot(mk, lat, margin, *s, 0.0, 0, pre_default_accounts(mk, 0.0));
        strategies[name] = {{"xi_ref_value", snap0.xi_ref_value.empty() ? 0.0 : snap0.xi_ref_value.front()},
                            {"xi_I_value", snap0.xi_I_value},
                            {"xi_C_value", snap0.xi_C_value},
                            {"xi_f_value", snap0.xi_f_value},
                            {"psi_m_value", snap0.psi_m_value},
                            {"xi_I_shares", snap0.xi_I},
                            {"xi_C_shares", snap0.xi_C}};
    };
    if (mk.size() > 0 && lat.states() > 1) {
        strat(act, "actual");
        strat(up, "upper");
        strat(lo, "lower");
    }
    // regime switches of the root state (calendar and reversed time)
    auto switches = [&](const std::optional<XvaSolution>& s) {
        ojson a = ojson::array();
        if (!s || lat.states() < 2) return a;
        for (std::size_t j = 0; j + 1 < grid->nodes(); ++j) {
            const Regime r0 = s->regime_at(0, j), r1 = s->regime_at(0, j + 1);
            if (r0 == r1 || r1 == Regime::Tie) continue;
            // locate the sign change of the jump-to-closeout by linear interpolation
            auto gap = [&](std::size_t k) {
                const double vv = s->vhat(0, k);
                return theta_C_adj(vv, margin.total(0, (*grid)[k], vv), mk.portfolio.loss_counterparty) - s->u(0, k);
            };
            const double g0 = gap(j), g1 = gap(j + 1);
            const double t = g0 == g1 ? (*grid)[j] : (*grid)[j] + ((*grid)[j + 1] - (*grid)[j]) * g0 / (g0 - g1);
            a.push_back({{"time", t}, {"reversed_time", mk.maturity() - t}, {"from", to_string(r0)},
                         {"to", to_string(r1)}});
        }
        return a;
    };
    ojson body;
    body["v_hat_0"] = any.vhat(0, 0);
    if (act) body["xva_actual_0"] = act->u(0, 0);
    if (up) body["xva_upper_0"] = up->u(0, 0);
    if (lo) body["xva_lower_0"] = lo->u(0, 0);
    body["regime_switches_upper"] = switches(up);
    body["regime_switches_lower"] = switches(lo);
    body["strategies_t0"] = strategies;
    body["assumptions"] = assumptions_json(run.assumptions);
    write_report(run, "xva.json", body);
    finish(run);
    if (act) std::cout << "xva_actual_0 = " << fmt(act->u(0, 0)) << '\n';
    if (up) std::cout << "xva_upper_0  = " << fmt(up->u(0, 0)) << '\n';
    if (lo) std::cout << "xva_lower_0  = " << fmt(lo->u(0, 0)) << '\n';
    return kOk;
}

int cmd_verify(const Common& c, bool dump_paths) {
    Run run = prepare(c, "verify");
    const Market& mk = run.market();
    const Lattice lat = Lattice::for_market(mk, run.cfg.solver.lattice);
    const auto grid = make_grid(run);
    const MarginModel margin = make_margin(run, lat);
    VerifySettings vs;
    vs.paths = run.cfg.oracle.paths;
    vs.dominance_paths = c.paths ? std::min(*c.paths, run.cfg.oracle.dominance_paths) : run.cfg.oracle.dominance_paths;
    vs.seed = run.cfg.oracle.seed;
    vs.antithetic = run.cfg.oracle.antithetic;
    vs.workers = run.cfg.oracle.workers;
    const VerifyReport rep = run_verification(mk, lat, margin, grid, vs, dump_paths);

    ojson checks = ojson::array();
    for (const auto& ch : rep.checks) {
        ojson v;
        for (const auto& [k, x] : ch.values) v[k] = x;
        checks.push_back({{"name", ch.name}, {"status", ch.status}, {"values", v}, {"note", ch.note}});
        std::cout << ch.status << "  " << ch.name << '\n';
    }
    ojson body;
    body["passed"] = rep.passed();
    body["violations"] = rep.violations();
    body["checks"] = checks;
    body["assumptions"] = assumptions_json(run.assumptions);
    write_report(run, "verify.json", body);
    if (dump_paths) {
        CsvWriter w(run.out("paths.csv"), run.manifest,
                    {"path", "end_reason", "end_time", "payoff_upper", "wealth_upper", "payoff_lower", "wealth_lower",
                     "wealth_upper_left_node", "min_wealth_upper"});
        for (const auto& p : rep.paths) {
            w.cell(static_cast<long long>(p.path)).cell(p.end_reason).cell(p.end_time).cell(p.payoff_upper);
            w.cell(p.wealth_upper).cell(p.payoff_lower).cell(p.wealth_lower).cell(p.wealth_upper_left);
            w.cell(p.min_wealth_upper).end_row();
        }
    }
    finish(run);
    return rep.passed() ? kOk : kVerify;
}

int cmd_sweep(const Common& c, const std::string& param, int points) {
    Run run = prepare(c, "sweep");
    const Market& mk = run.market();
    SweepSpec spec;
    spec.param = parse_sweep_param(param);
    try {
        spec.grid = default_sweep_grid(sweep_base_value(mk, spec.param), spec.param, points);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    spec.grid_points = run.cfg.solver.grid_points;
    spec.lattice = run.cfg.solver.lattice;
    spec.workers = run.cfg.oracle.workers;
    const auto rows = run_sweep(mk, spec);
    CsvWriter w(run.out("sweep_" + param + ".csv"), run.manifest,
                {"param", "xva_lower", "xva_actual", "xva_upper", "xi_ref_val", "xi_I_val", "xi_C_val", "xi_f_val",
                 "v_hat_0", "status"});
    std::size_t failed = 0;
    for (const auto& r : rows) {
        w.cell(r.param).cell(r.xva_lower).cell(r.xva_actual).cell(r.xva_upper).cell(r.xi_ref_val);
        w.cell(r.xi_I_val).cell(r.xi_C_val).cell(r.xi_f_val).cell(r.v_hat_0).cell(r.ok ? "ok" : r.status).end_row();
        failed += !r.ok;
    }
    finish(run);
    std::cout << rows.size() << " points, " << failed << " failed\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust XVA engine for CDS portfolios"};
    app.require_subcommand(1);
    Common c;
    std::string which = "all", param = "a20";
    int points = 21;
    bool dump_paths = false;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", c.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
        s->add_option("--out-dir", c.out_dir, "output directory");
        s->add_option("--grid-points", c.grid_points, "RK4 steps on [0, T] (default 2000)");
        s->add_option("--seed", c.seed, "Monte Carlo seed");
        s->add_option("--workers", c.workers, "worker threads");
        s->add_option("--gamma", c.gamma, "contract direction for every name")->check(CLI::IsMember({1, -1}));
        s->add_flag("--allow-assumption-violation", c.allow_violation, "price even if the rate ordering fails");
        s->add_option("--stride", c.stride, "write every k-th grid node");
    };
    auto* price = app.add_subcommand("price", "clean value and margin surfaces");
    common(price);
    auto* xva = app.add_subcommand("xva", "actual, upper and lower XVA with strategies");
    common(xva);
    xva->add_option("--which", which, "actual, upper, lower or all")
        ->check(CLI::IsMember({"actual", "upper", "lower", "all"}));
    auto* verify = app.add_subcommand("verify", "Monte Carlo oracle checks");
    common(verify);
    verify->add_option("--paths", c.paths, "paths for the expectation checks");
    verify->add_flag("--dump-paths", dump_paths, "write per-path wealth records");
    auto* sweep = app.add_subcommand("sweep", "comparative statics at t = 0");
    common(sweep);
    sweep->add_option("--param", param, "a20, a23, a33, a30, alpha or band_width")
        ->check(CLI::IsMember({"a20", "a23", "a33", "a30", "alpha", "band_width"}));
    sweep->add_option("--points", points, "grid points (default 21)")->check(CLI::Range(2, 10000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    try {
        if (*price) return cmd_price(c);
        if (*xva) return cmd_xva(c, which);
        if (*verify) return cmd_verify(c, dump_paths);
        if (*sweep) return cmd_sweep(c, param, points);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const AssumptionFailure&) {
        std::cerr << "error: assumption check failed (use --allow-assumption-violation to override)\n";
        return kAssumption;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInternal;
    }
    return kOk;
}
