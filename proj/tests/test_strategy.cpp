#include <cmath>

#include <gtest/gtest.h>

#include <rxva/strategy.hpp>

#include "support.hpp"

using namespace rxva;

namespace {

struct Solved {
    Market m;
    Lattice lat;
    MarginModel mm;
    XvaSolution up;
};

Solved solve(Market m, int steps, Variant which = Variant::Upper) {
    Solved s{m, Lattice::for_market(m, LatticeMode::Auto), {}, {}};
    s.mm = MarginModel::build(s.m, s.lat);
    s.up = solve_xva(s.m, s.lat, test::grid_for(s.m, steps), s.mm, which, true);
    return s;
}

Market collateralised_portfolio() {
    ContagionParams a;
    a.a10 = 0.05;
    a.a13 = 0.02;
    a.a20 = 0.08;
    a.a23 = 0.02;
    a.a30 = 0.05;
    a.a33 = 0.04;
    Market m = test::contagion_market(3, a, 0.001, 0.02, 0.6, 1.5);
    m.rates.rf_plus = 0.03;
    m.rates.rf_minus = 0.02;
    m.portfolio.collateral.alpha = 0.4;
    return m;
}

} // namespace

TEST(Strategy, WealthIdentity) {
    const auto s = solve(collateralised_portfolio(), 300);
    for (double t : {0.0, 0.37, 0.9, 1.49})
        for (Mask J : {Mask{0}, Mask{0b010}, Mask{0b101}}) {
            const auto snap = strategy_snapshot(s.m, s.lat, s.mm, s.up, t, J, pre_default_accounts(s.m, t, J));
            EXPECT_NEAR(snap.wealth(), snap.target, 1e-9);
            EXPECT_NEAR(snap.psi_m_value, -s.mm.total(s.lat.state_of(J), t, s.up.vhat_at(s.lat.state_of(J), t)),
                        1e-15);
        }
}

TEST(Strategy, SharesTimesPricesGiveValues) {
    const auto s = solve(collateralised_portfolio(), 300);
    const double t = 0.6;
    const auto acc = pre_default_accounts(s.m, t, 0);
    const auto snap = strategy_snapshot(s.m, s.lat, s.mm, s.up, t, 0, acc);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(snap.xi_ref[i] * acc.ref[i], snap.xi_ref_value[i], 1e-14);
    EXPECT_NEAR(snap.xi_I * acc.investor, snap.xi_I_value, 1e-14);
    EXPECT_NEAR(snap.xi_C * acc.counterparty, snap.xi_C_value, 1e-14);
    EXPECT_NEAR(snap.xi_f * acc.funding, snap.xi_f_value, 1e-14);
    EXPECT_THROW(snap.xi_ref_for(4), std::out_of_range);
}

TEST(Strategy, DefaultedNameHoldsNothing) {
    const auto s = solve(collateralised_portfolio(), 200);
    const auto snap = strategy_snapshot(s.m, s.lat, s.mm, s.up, 0.5, 0b001, pre_default_accounts(s.m, 0.5, 0b001));
    EXPECT_EQ(snap.xi_ref[0], 0.0);
    EXPECT_THROW(snap.xi_ref_for(1), std::invalid_argument);
    EXPECT_NO_THROW(snap.xi_ref_for(2));
}

TEST(Strategy, CounterpartyPositionSignTracksRegime) {
    const auto s = solve(test::load("fig2.json").market, 1000);
    const auto& g = s.up.surface.grid();
    for (std::size_t j = 0; j < g.nodes(); j += 10) {
        const auto snap = strategy_snapshot(s.m, s.lat, s.mm, s.up, g[j], 0, pre_default_accounts(s.m, g[j]));
        const Regime r = s.up.regime_at(0, j);
        if (r == Regime::Tie) continue;
        EXPECT_EQ(snap.xi_C < 0.0, r == Regime::High) << "t=" << g[j];
    }
}

TEST(Strategy, ZeroEverythingGivesZeroTreasury) {
    Market m = test::single_name(0.0, PiecewiseConstant(0.1), 0.1, 0.1, 0.0, 0.0, 1.0);
    const auto s = solve(m, 50);
    const auto snap = strategy_snapshot(s.m, s.lat, s.mm, s.up, 0.2, 0, pre_default_accounts(s.m, 0.2));
    EXPECT_EQ(snap.xi_f_value, 0.0);
    EXPECT_EQ(snap.psi_m, 0.0);
}

TEST(Strategy, SingleNameReferenceValueIsXva) {
    const auto s = solve(test::load("fig2.json").market, 500);
    for (double t : {0.0, 1.0, 2.5}) {
        const auto snap = strategy_snapshot(s.m, s.lat, s.mm, s.up, t, 0, pre_default_accounts(s.m, t));
        EXPECT_NEAR(snap.xi_ref_value[0], s.up.u_at(0, t), 1e-15);
    }
}

TEST(Strategy, FundingRateSelector) {
    const Rates r{0.01, 0.05, 0.02, 0.0, 0.0};
    EXPECT_EQ(funding_rate_select(r, -1.0).rate, 0.02);
    EXPECT_EQ(funding_rate_select(r, 1.0).rate, 0.05);
    const auto tie = funding_rate_select(r, 0.0);
    EXPECT_EQ(tie.rate, 0.05);
    EXPECT_TRUE(tie.tie);
}

TEST(Strategy, AccountsGrowAtDefaultableRates) {
    const Market m = test::load("fig2.json").market;
    const auto a = pre_default_accounts(m, 2.5);
    EXPECT_NEAR(std::log(a.ref[0]), 0.301 * 2.0 + 0.101 * 0.5, 1e-12);
    EXPECT_NEAR(std::log(a.investor), 0.201 * 2.5, 1e-12);
    EXPECT_NEAR(std::log(a.counterparty), 0.2001 * 2.5, 1e-12);
}
