#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "collateral.hpp"
#include "lattice.hpp"
#include "model.hpp"
#include "xva.hpp"

namespace rxva {

struct RateChoice {
    double rate = 0.0;
    bool tie = false;
};

//! Treasury rate for a funding balance y; zero balance maps to the lending rate.
inline RateChoice funding_rate_select(const Rates& r, double y) {
    if (y < 0.0) return {r.rf_minus, false};
    if (y > 0.0) return {r.rf_plus, false};
    return {r.rf_plus, true};
}

inline double collateral_rate(const Rates& r, double m) { return m < 0.0 ? r.rm_minus : r.rm_plus; }

//! Account prices used as share denominators.
struct AccountValues {
    std::vector<double> ref; //!< B_i(t-), one per reference name
    double investor = 1.0;
    double counterparty = 1.0;
    double funding = 1.0;
    double collateral = 1.0;
};

//! Deterministic pre-default account prices at t, accrued in state J since t = 0.
inline AccountValues pre_default_accounts(const Market& mk, double t, Mask J = 0) {
    AccountValues a;
    const double rD = mk.rates.r_D;
    std::vector<double> knots{0.0};
    for (double b : mk.breakpoints())
        if (b < t) knots.push_back(b);
    knots.push_back(t);
    // exact for step functions: value at each segment start times its length
    const auto grid_int = [&](auto&& rate) {
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < knots.size(); ++k) acc += rate(knots[k]) * (knots[k + 1] - knots[k]);
        return acc;
    };
    for (int i = 0; i < mk.size(); ++i)
        a.ref.push_back(std::exp(grid_int([&](double s) { return mk.q.reference(i, s, J & ~(Mask{1} << i)) + rD; })));
    a.investor = std::exp(grid_int([&](double s) { return mk.q.investor(s, J) + rD; }));
    a.counterparty = mk.has_true_counterparty()
                         ? std::exp(grid_int([&](double s) { return mk.counterparty_true(s, J) + rD; }))
                         : std::exp(mk.band.mu_lower * t);
    a.funding = std::exp(mk.rates.rf_plus * t);
    a.collateral = std::exp(mk.rates.rm_plus * t);
    return a;
}

//! Holdings at (t, J): share counts and their values (shares x account price).
struct StrategySnapshot {
    double time = 0.0;
    Mask defaulted = 0;
    std::vector<double> xi_ref;       //!< shares, zero for defaulted names
    std::vector<double> xi_ref_value; //!< U^(J) - U^({i} ∪ J)
    double xi_I = 0.0, xi_I_value = 0.0;
    double xi_C = 0.0, xi_C_value = 0.0;
    double xi_f = 0.0, xi_f_value = 0.0;
    double psi_m = 0.0, psi_m_value = 0.0; //!< psi_m_value = -M
    double target = 0.0;                   //!< the XVA value the holdings replicate

    //! Portfolio value; equals `target` by construction.
    double wealth() const {
        double w = xi_I_value + xi_C_value + xi_f_value - psi_m_value;
        for (double v : xi_ref_value) w += v;
        return w;
    }

    double xi_ref_for(int entity) const {
        if (entity < 1 || entity > static_cast<int>(xi_ref.size())) throw std::out_of_range("entity id");
        if (defaulted & (Mask{1} << (entity - 1))) throw std::invalid_argument("entity already defaulted");
        return xi_ref[static_cast<std::size_t>(entity - 1)];
    }
};

//! Replicating holdings built from one XVA solution (upper gives the robust strategy,
//! actual the replication strategy, lower the sub-replication strategy).
inline StrategySnapshot strategy_snapshot(const Market& mk, const Lattice& lat, const MarginModel& margin,
                                          const XvaSolution& sol, double t, Mask J, const AccountValues& acc) {
    StrategySnapshot snap;
    snap.time = t;
    snap.defaulted = J;
    const int n = mk.size();
    snap.xi_ref.assign(static_cast<std::size_t>(n), 0.0);
    snap.xi_ref_value.assign(static_cast<std::size_t>(n), 0.0);
    const int s = lat.state_of(J);
    if (s == lat.states() - 1) return snap;

    const double U = sol.u_at(s, t);
    const double v = sol.vhat_at(s, t);
    const double M = margin.total(s, t, v);
    const double lI = mk.portfolio.loss_investor, lC = mk.portfolio.loss_counterparty;
    snap.target = U;

    double ref_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const Mask bit = Mask{1} << i;
        if (J & bit) continue;
        const int child = lat.state_of(J | bit);
        const double child_u = child == lat.states() - 1 ? 0.0 : sol.u_at(child, t);
        const double val = U - child_u;
        snap.xi_ref_value[static_cast<std::size_t>(i)] = val;
        snap.xi_ref[static_cast<std::size_t>(i)] = val / acc.ref[static_cast<std::size_t>(i)];
        ref_sum += val;
    }
    snap.xi_I_value = lI * pos(v - M) + U;
    snap.xi_C_value = -lC * neg(v - M) + U;
    snap.xi_f_value = -U - ref_sum + lC * neg(v - M) - lI * pos(v - M) - M;
    snap.psi_m_value = -M;
    snap.xi_I = snap.xi_I_value / acc.investor;
    snap.xi_C = snap.xi_C_value / acc.counterparty;
    snap.xi_f = snap.xi_f_value / acc.funding;
    snap.psi_m = snap.psi_m_value / acc.collateral;
    return snap;
}

} // namespace rxva
