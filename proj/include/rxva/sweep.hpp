#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "collateral.hpp"
#include "grid.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "simulate.hpp"
#include "strategy.hpp"
#include "xva.hpp"

namespace rxva {

enum class SweepParam { A20, A23, A33, A30, Alpha, BandWidth };

inline const char* to_string(SweepParam p) {
    switch (p) {
    case SweepParam::A20: return "a20";
    case SweepParam::A23: return "a23";
    case SweepParam::A33: return "a33";
    case SweepParam::A30: return "a30";
    case SweepParam::Alpha: return "alpha";
    case SweepParam::BandWidth: return "band_width";
    }
    return "?";
}

inline SweepParam parse_sweep_param(const std::string& s) {
    for (auto p : {SweepParam::A20, SweepParam::A23, SweepParam::A33, SweepParam::A30, SweepParam::Alpha,
                   SweepParam::BandWidth})
        if (s == to_string(p)) return p;
    throw std::invalid_argument("unknown sweep parameter '" + s + "'");
}

struct SweepSpec {
    SweepParam param = SweepParam::A20;
    std::vector<double> grid; //!< strictly increasing
    std::size_t grid_points = 2000;
    LatticeMode lattice = LatticeMode::Auto;
    unsigned workers = 1;
};

struct SweepRow {
    double param = 0.0;
    double xva_lower = 0.0, xva_actual = 0.0, xva_upper = 0.0;
    double xi_ref_val = 0.0, xi_I_val = 0.0, xi_C_val = 0.0, xi_f_val = 0.0; //!< robust strategy at t = 0
    double v_hat_0 = 0.0;
    bool ok = true;
    std::string status = "ok";
};

inline bool contagion_param(SweepParam p) {
    return p == SweepParam::A20 || p == SweepParam::A23 || p == SweepParam::A33 || p == SweepParam::A30;
}

//! Value of the swept parameter in a market.
inline double sweep_base_value(const Market& mk, SweepParam p) {
    if (contagion_param(p) && mk.q.mode() != ContagionModel::Mode::Contagion)
        throw std::invalid_argument(std::string("sweep over ") + to_string(p) + " needs contagion intensities");
    const auto& a = mk.q.params();
    switch (p) {
    case SweepParam::A20: return a.a20;
    case SweepParam::A23: return a.a23;
    case SweepParam::A33: return a.a33;
    case SweepParam::A30: return a.a30;
    case SweepParam::Alpha: return mk.portfolio.collateral.alpha;
    case SweepParam::BandWidth: return mk.band.mu_upper - mk.band.mu_lower;
    }
    return 0.0;
}

//! 21 points spanning +-50% around the base value (alpha clipped to [0, 1]).
inline std::vector<double> default_sweep_grid(double base, SweepParam p, int points = 21) {
    if (!(base > 0.0)) throw std::invalid_argument("default sweep grid needs a positive base value");
    double lo = 0.5 * base, hi = 1.5 * base;
    if (p == SweepParam::Alpha) hi = std::min(hi, 1.0);
    std::vector<double> g;
    for (int k = 0; k < points; ++k) g.push_back(lo + (hi - lo) * k / (points - 1));
    return g;
}

//! Market with the parameter replaced; the band follows the contagion rule for a20/a23.
inline Market with_sweep_value(const Market& base, SweepParam p, double x) {
    Market mk = base;
    auto a = mk.q.params();
    const double rD = mk.rates.r_D;
    const int n = mk.size();
    switch (p) {
    case SweepParam::A20: a.a20 = x; break;
    case SweepParam::A23: a.a23 = x; break;
    case SweepParam::A33: a.a33 = x; break;
    case SweepParam::A30: a.a30 = x; break;
    case SweepParam::Alpha: mk.portfolio.collateral.alpha = x; return mk;
    case SweepParam::BandWidth: mk.band.mu_upper = mk.band.mu_lower + x; return mk;
    }
    mk.q = ContagionModel::contagion(n, a);
    if (p == SweepParam::A20 || p == SweepParam::A23) {
        mk.band.mu_lower = a.a20 + rD;
        mk.band.mu_upper = a.a20 + rD + n * a.a23;
    }
    return mk;
}

inline SweepRow sweep_point(const Market& mk, double x, std::size_t grid_points, LatticeMode mode) {
    SweepRow row;
    row.param = x;
    try {
        const Lattice lat = Lattice::for_market(mk, mode);
        auto grid = std::make_shared<const TimeGrid>(mk.maturity(), static_cast<int>(grid_points), mk.breakpoints());
        const MarginModel margin = MarginModel::build(mk, lat);
        const XvaTriple tri = solve_all(mk, lat, grid, margin);
        row.xva_upper = tri.upper.u(0, 0);
        row.xva_lower = tri.lower.u(0, 0);
        row.xva_actual = tri.actual ? tri.actual->u(0, 0) : std::nan("");
        row.v_hat_0 = tri.upper.vhat(0, 0);
        const auto snap = strategy_snapshot(mk, lat, margin, tri.upper, 0.0, 0, pre_default_accounts(mk, 0.0));
        row.xi_ref_val = snap.xi_ref_value.empty() ? 0.0 : snap.xi_ref_value.front();
        row.xi_I_val = snap.xi_I_value;
        row.xi_C_val = snap.xi_C_value;
        row.xi_f_val = snap.xi_f_value;
    } catch (const std::exception& e) {
        row.ok = false;
        row.status = std::string("failed: ") + e.what();
    }
    return row;
}

inline std::vector<SweepRow> run_sweep(const Market& base, const SweepSpec& spec) {
    for (std::size_t k = 1; k < spec.grid.size(); ++k)
        if (!(spec.grid[k] > spec.grid[k - 1])) throw std::invalid_argument("sweep grid must be strictly increasing");
    return map_paths<SweepRow>(spec.grid.size(), spec.workers, [&](std::size_t k) {
        const double x = spec.grid[k];
        Market mk;
        try {
            mk = with_sweep_value(base, spec.param, x);
        } catch (const std::exception& e) {
            SweepRow row;
            row.param = x;
            row.ok = false;
            row.status = std::string("failed: ") + e.what();
            return row;
        }
        return sweep_point(mk, x, spec.grid_points, spec.lattice);
    });
}

//! Nonstrict monotonicity across adjacent rows; direction +1 nondecreasing, -1 nonincreasing, 0 constant.
template <class Get>
bool monotone(const std::vector<SweepRow>& rows, Get&& get, int direction, double slack = 1e-10) {
    for (std::size_t k = 1; k < rows.size(); ++k) {
        if (!rows[k].ok || !rows[k - 1].ok) return false;
        const double d = get(rows[k]) - get(rows[k - 1]);
        if (direction > 0 && d < -slack) return false;
        if (direction < 0 && d > slack) return false;
        if (direction == 0 && std::abs(d) > slack) return false;
    }
    return true;
}

} // namespace rxva
