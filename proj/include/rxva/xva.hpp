#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "clean.hpp"
#include "collateral.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "surface.hpp"

namespace rxva {

enum class Variant { Actual, Upper, Lower };
enum class Regime : std::int8_t { High, Low, Tie };

inline const char* to_string(Variant v) {
    switch (v) {
    case Variant::Actual: return "actual";
    case Variant::Upper: return "upper";
    case Variant::Lower: return "lower";
    }
    return "?";
}

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::High: return "HI";
    case Regime::Low: return "LO";
    case Regime::Tie: return "TIE";
    }
    return "?";
}

//! Funding-adjusted XVA driver; `sum_loss` is the oriented loss of the surviving names.
inline double driver_f_tilde(const Rates& r, double xva, double z, double zI, double zC, double M, double sum_loss) {
    const double a = xva + z + zI + zC + sum_loss - M;
    return -(r.rf_plus * pos(a) - r.rf_minus * neg(a) - r.r_D * (z + zI + zC) + r.rm_plus * pos(M) -
             r.rm_minus * neg(M) - r.r_D * sum_loss);
}

struct CheckDriverArgs {
    double u = 0.0;
    double child_sum = 0.0;      //!< sum of child XVA values over surviving names
    double child_weighted = 0.0; //!< hazard-weighted sum of child XVA values
    double hazard_sum = 0.0;     //!< total reference hazard of surviving names
    double alive = 0.0;          //!< number of surviving names
    double vhat = 0.0;           //!< oriented clean value
    double m = 0.0;              //!< collateral
    double sum_loss = 0.0;
    double h_I = 0.0;
    double h_C = 0.0;
    double loss_I = 0.0;
    double loss_C = 0.0;
};

//! Reversed-time slope of the pre-default XVA.
inline double driver_g_check(const Rates& r, const CheckDriverArgs& a) {
    const double zI = theta_I_adj(a.vhat, a.m, a.loss_I) - a.u;
    const double zC = theta_C_adj(a.vhat, a.m, a.loss_C) - a.u;
    return a.h_I * zI + a.h_C * zC + (a.child_weighted - a.hazard_sum * a.u) +
           driver_f_tilde(r, a.u, a.child_sum - a.alive * a.u, zI, zC, a.m, a.sum_loss);
}

struct SwitchChoice {
    double mu = 0.0;
    bool tie = false;
};

//! Band extreme selected by the upper or lower driver from the jump-to-closeout sign.
inline SwitchChoice switching_rate(double closeout_gap, double mu_lower, double mu_upper, Variant mode) {
    if (mode == Variant::Actual) throw std::invalid_argument("switching_rate needs upper or lower mode");
    const bool up = mode == Variant::Upper;
    if (closeout_gap > 0.0) return {up ? mu_upper : mu_lower, false};
    if (closeout_gap < 0.0) return {up ? mu_lower : mu_upper, false};
    return {up ? mu_upper : mu_lower, true};
}

inline SwitchChoice switching_rate(double vhat, double m, double u, double loss_C, double mu_lower, double mu_upper,
                                   Variant mode) {
    return switching_rate(theta_C_adj(vhat, m, loss_C) - u, mu_lower, mu_upper, mode);
}

//! Node regime: which band extreme the rule selects (for `actual`, the upper rule).
inline Regime classify(double closeout_gap, Variant mode) {
    if (closeout_gap == 0.0) return Regime::Tie;
    const bool high = mode == Variant::Lower ? closeout_gap < 0.0 : closeout_gap > 0.0;
    return high ? Regime::High : Regime::Low;
}

//! Oriented clean value (component 0) and XVA (component 1) per state.
struct XvaSolution {
    Variant variant = Variant::Upper;
    LatticeSurface surface;
    std::vector<Regime> regime; //!< node-major, one entry per state

    double vhat(int state, std::size_t j) const { return surface.value(state, 0, j); }
    double u(int state, std::size_t j) const { return surface.value(state, 1, j); }
    double vhat_at(int state, double t) const { return surface.at(state, 0, t); }
    double u_at(int state, double t) const { return surface.at(state, 1, t); }
    Regime regime_at(int state, std::size_t j) const {
        return regime[j * static_cast<std::size_t>(surface.states()) + static_cast<std::size_t>(state)];
    }
};

struct StageInputs {
    double vhat, m, sum_loss, h_I, child_sum, child_weighted, hazard_sum, alive;
};

inline StageInputs stage_inputs(const Market& mk, const Lattice& lat, const MarginModel& margin, int s, double t,
                                double t_mid, const double* y, int width) {
    StageInputs in{};
    const Mask J = lat.mask(s);
    in.vhat = y[s * width];
    in.m = margin.total(s, t, in.vhat);
    in.h_I = mk.q.investor(t_mid, J);
    for (const Edge& e : lat.edges(s)) {
        const Contract& c = mk.portfolio.contracts[static_cast<std::size_t>(e.entity)];
        const double h = mk.q.reference(e.entity, t_mid, J);
        const double child = y[e.child * width + 1];
        in.sum_loss += e.multiplicity * c.direction * c.loss;
        in.child_sum += e.multiplicity * child;
        in.child_weighted += e.multiplicity * h * child;
        in.hazard_sum += e.multiplicity * h;
        in.alive += e.multiplicity;
    }
    return in;
}

//! Counterparty Q-intensity used by a variant at one stage.
inline double counterparty_hazard(const Market& mk, Variant which, double t_mid, Mask J, double closeout_gap) {
    if (which == Variant::Actual) return mk.counterparty_true(t_mid, J);
    const auto choice = switching_rate(closeout_gap, mk.band.mu_lower, mk.band.mu_upper, which);
    return choice.mu - mk.rates.r_D;
}

inline XvaSolution solve_xva(const Market& mk, const Lattice& lat, std::shared_ptr<const TimeGrid> grid,
                             const MarginModel& margin, Variant which, bool dense = false) {
    grid->require_aligned(mk.breakpoints());
    if (which == Variant::Actual && !mk.has_true_counterparty())
        throw std::invalid_argument("actual XVA requires mu_C_true");
    if (which != Variant::Actual) counterparty_band_rates(mk);
    const double lI = mk.portfolio.loss_investor, lC = mk.portfolio.loss_counterparty;
    const int terminal = lat.states() - 1;

    XvaSolution sol;
    sol.variant = which;
    sol.surface = LatticeSurface(grid, lat.states(), 2, {"v_hat", "u"});
    if (dense) sol.surface.enable_dense();
    rk4_backward(sol.surface, [&](double t, double t_mid, const double* y, double* dy) {
        for (int s = 0; s < lat.states(); ++s) {
            dy[2 * s] = clean_slope(mk, lat, s, t_mid, y, 2, Orientation::Oriented);
            if (s == terminal) {
                dy[2 * s + 1] = 0.0;
                continue;
            }
            const StageInputs in = stage_inputs(mk, lat, margin, s, t, t_mid, y, 2);
            const double u = y[2 * s + 1];
            const double gap = theta_C_adj(in.vhat, in.m, lC) - u;
            CheckDriverArgs a{u,       in.child_sum, in.child_weighted, in.hazard_sum, in.alive, in.vhat, in.m,
                              in.sum_loss, in.h_I,   0.0,               lI,            lC};
            a.h_C = counterparty_hazard(mk, which, t_mid, lat.mask(s), gap);
            dy[2 * s + 1] = driver_g_check(mk.rates, a);
        }
    });

    const auto& g = *grid;
    sol.regime.resize(g.nodes() * static_cast<std::size_t>(lat.states()));
    for (std::size_t j = 0; j < g.nodes(); ++j)
        for (int s = 0; s < lat.states(); ++s) {
            const double v = sol.vhat(s, j);
            const double gap = theta_C_adj(v, margin.total(s, g[j], v), lC) - sol.u(s, j);
            sol.regime[j * static_cast<std::size_t>(lat.states()) + static_cast<std::size_t>(s)] =
                classify(gap, which);
        }
    return sol;
}

struct XvaTriple {
    std::optional<XvaSolution> actual;
    XvaSolution upper;
    XvaSolution lower;
};

inline XvaTriple solve_all(const Market& mk, const Lattice& lat, std::shared_ptr<const TimeGrid> grid,
                           const MarginModel& margin, bool dense = false) {
    XvaTriple out;
    if (mk.has_true_counterparty()) out.actual = solve_xva(mk, lat, grid, margin, Variant::Actual, dense);
    out.upper = solve_xva(mk, lat, grid, margin, Variant::Upper, dense);
    out.lower = solve_xva(mk, lat, grid, margin, Variant::Lower, dense);
    return out;
}

struct PartyDefault {
    Party who = Party::Counterparty;
    double time = 0.0;
};

//! Robust XVA as a function of (t, defaulted set, first trading-party default).
class RobustXva {
public:
    RobustXva(const Market& mk, const Lattice& lat, const MarginModel& margin, const XvaSolution& upper)
        : mk_(&mk), lat_(&lat), margin_(&margin), upper_(&upper) {}

    double operator()(double t, Mask J, std::optional<PartyDefault> event = std::nullopt) const {
        if (t < 0.0 || t > mk_->maturity()) throw std::out_of_range("rXVA query outside [0, T]");
        const int s = lat_->state_of(J);
        if (event && t >= event->time) {
            if (event->who == Party::Reference) throw std::invalid_argument("closeout event must be I or C");
            const double v = upper_->vhat_at(s, event->time);
            const double m = margin_->total(s, event->time, v);
            return event->who == Party::Counterparty ? theta_C_adj(v, m, mk_->portfolio.loss_counterparty)
                                                     : theta_I_adj(v, m, mk_->portfolio.loss_investor);
        }
        if (s == lat_->states() - 1) return 0.0;
        return upper_->u_at(s, t);
    }

private:
    const Market* mk_;
    const Lattice* lat_;
    const MarginModel* margin_;
    const XvaSolution* upper_;
};

} // namespace rxva
