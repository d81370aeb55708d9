#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <rxva/oracle.hpp>

#include "support.hpp"

using namespace rxva;

namespace {

Market figure_two() { return test::load("fig2.json").market; }

double max_gap(const XvaSolution& a, const XvaSolution& b, int states) {
    double worst = 0.0;
    for (std::size_t j = 0; j < a.surface.grid().nodes(); ++j)
        for (int s = 0; s < states; ++s) worst = std::max(worst, std::abs(a.u(s, j) - b.u(s, j)));
    return worst;
}

} // namespace

TEST(Driver, ZeroRatesAndLossesVanish) {
    const Rates r{};
    EXPECT_EQ(driver_f_tilde(r, 0.3, -0.2, 1.1, -0.7, 0.0, 0.0), 0.0);
}

TEST(Driver, FundingBranches) {
    const Rates r{0.01, 0.05, 0.02, 0.03, 0.04};
    // a = xva + z + zI + zC + sum_loss - M
    const double pos_case = driver_f_tilde(r, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6);
    EXPECT_NEAR(pos_case, -(0.05 * 1.1 - 0.01 * 0.9 + 0.03 * 0.5 - 0.01 * 0.6), 1e-15);
    const double neg_case = driver_f_tilde(r, -1.0, 0.0, 0.0, 0.0, -0.5, 0.0);
    EXPECT_NEAR(neg_case, -(-0.02 * 0.5 - 0.04 * 0.5), 1e-15);
}

TEST(Driver, ZeroFixedPoint) {
    CheckDriverArgs a;
    a.alive = 1.0;
    a.hazard_sum = 0.1;
    a.h_I = 0.2;
    a.h_C = 0.3;
    a.loss_I = a.loss_C = 0.5;
    EXPECT_EQ(driver_g_check(Rates{}, a), 0.0);
}

TEST(Driver, SingleNameForm) {
    // N = 1 with a defaulted child of zero XVA reduces to the single-name driver
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 0.3);
    for (int k = 0; k < 200; ++k) {
        const Rates r{p(gen), p(gen), p(gen), p(gen), p(gen)};
        const double ucheck = u(gen), v = u(gen), m = u(gen), L = std::abs(u(gen));
        const double h1 = p(gen), hI = p(gen), hC = p(gen);
        CheckDriverArgs a{ucheck, 0.0, 0.0, h1, 1.0, v, m, L, hI, hC, 0.5, 0.5};
        const double tI = -0.5 * pos(v - m), tC = 0.5 * neg(v - m);
        const double x = ucheck + (-ucheck) + (tI - ucheck) + (tC - ucheck) + L - m;
        const double ftilde = -(r.rf_plus * pos(x) - r.rf_minus * neg(x) -
                                r.r_D * (-ucheck + tI - ucheck + tC - ucheck) + r.rm_plus * pos(m) -
                                r.rm_minus * neg(m) - r.r_D * L);
        const double single = hI * (tI - ucheck) + hC * (tC - ucheck) - h1 * ucheck + ftilde;
        EXPECT_NEAR(driver_g_check(r, a), single, 1e-14);
    }
}

TEST(Switching, UpperAndLowerSelection) {
    EXPECT_EQ(switching_rate(0.3, 0.1, 0.2, Variant::Upper).mu, 0.2);
    EXPECT_EQ(switching_rate(-0.3, 0.1, 0.2, Variant::Upper).mu, 0.1);
    EXPECT_EQ(switching_rate(0.3, 0.1, 0.2, Variant::Lower).mu, 0.1);
    EXPECT_EQ(switching_rate(-0.3, 0.1, 0.2, Variant::Lower).mu, 0.2);
    const auto tie = switching_rate(0.0, 0.1, 0.2, Variant::Upper);
    EXPECT_TRUE(tie.tie);
    EXPECT_EQ(tie.mu, 0.2);
    EXPECT_THROW(switching_rate(0.1, 0.1, 0.2, Variant::Actual), std::invalid_argument);
}

TEST(Switching, Classification) {
    EXPECT_EQ(classify(0.1, Variant::Upper), Regime::High);
    EXPECT_EQ(classify(-0.1, Variant::Upper), Regime::Low);
    EXPECT_EQ(classify(-0.1, Variant::Lower), Regime::High);
    EXPECT_EQ(classify(0.0, Variant::Lower), Regime::Tie);
}

TEST(Xva, BandCollapseGivesIdenticalSurfaces) {
    ContagionParams a;
    a.a10 = 0.05;
    a.a13 = 0.02;
    a.a20 = 0.07;
    a.a30 = 0.03;
    a.a33 = 0.02;
    for (int n : {1, 3, 5}) {
        auto m = test::contagion_market(n, a, 0.001, 0.02, 0.5, 1.0);
        m.rates.rf_plus = 0.03;
        m.rates.rf_minus = 0.02;
        m.portfolio.collateral.alpha = 0.5;
        m = collapse_band(m, a.a20 + 0.001);
        const Lattice lat = Lattice::for_market(m, LatticeMode::Auto);
        const auto g = test::grid_for(m, 400);
        const auto mm = MarginModel::build(m, lat);
        const auto tri = solve_all(m, lat, g, mm);
        ASSERT_TRUE(tri.actual.has_value());
        EXPECT_LT(max_gap(*tri.actual, tri.upper, lat.states()), 1e-10) << n;
        EXPECT_LT(max_gap(*tri.actual, tri.lower, lat.states()), 1e-10) << n;
    }
}

TEST(Xva, OrderingOnFigureTwo) {
    const Market m = figure_two();
    const Lattice lat = Lattice::for_market(m, LatticeMode::Auto);
    const auto g = test::grid_for(m, 2000);
    const auto mm = MarginModel::build(m, lat);
    const auto tri = solve_all(m, lat, g, mm);
    for (std::size_t j = 0; j < g->nodes(); ++j) {
        EXPECT_GE(tri.actual->u(0, j) - tri.lower.u(0, j), -1e-10);
        EXPECT_GE(tri.upper.u(0, j) - tri.actual->u(0, j), -1e-10);
    }
    EXPECT_LT(tri.lower.u(0, 0), tri.upper.u(0, 0));
}

TEST(XvaProperty, NestedBandsWiden) {
    ContagionParams a;
    a.a10 = 0.05;
    a.a20 = 0.1;
    a.a30 = 0.04;
    a.a33 = 0.03;
    auto base = test::contagion_market(3, a, 0.001, 0.02, 0.5, 1.0);
    base.portfolio.collateral.alpha = 0.3;
    const Lattice lat = Lattice::for_market(base, LatticeMode::Auto);
    const auto g = test::grid_for(base, 300);
    const auto mm = MarginModel::build(base, lat);
    double prev_lo = 0.0, prev_hi = 0.0;
    for (int k = 0; k < 6; ++k) {
        Market m = base;
        m.band.mu_lower = 0.101 - 0.01 * k;
        m.band.mu_upper = 0.101 + 0.01 * k;
        const double lo = solve_xva(m, lat, g, mm, Variant::Lower).u(0, 0);
        const double hi = solve_xva(m, lat, g, mm, Variant::Upper).u(0, 0);
        if (k > 0) {
            EXPECT_LE(lo, prev_lo + 1e-12);
            EXPECT_GE(hi, prev_hi - 1e-12);
        }
        prev_lo = lo;
        prev_hi = hi;
    }
}

TEST(XvaProperty, UpperDriverDominatesEveryBandRate) {
    // at every node the upper rate times the closeout gap dominates any rate in the band
    const Market m = figure_two();
    const Lattice lat = Lattice::for_market(m, LatticeMode::Auto);
    const auto g = test::grid_for(m, 500);
    const auto mm = MarginModel::build(m, lat);
    const auto up = solve_xva(m, lat, g, mm, Variant::Upper);
    const auto lo = solve_xva(m, lat, g, mm, Variant::Lower);
    for (std::size_t j = 0; j < g->nodes(); j += 5) {
        const double gap_up = theta_C_adj(up.vhat(0, j), 0.0, 0.5) - up.u(0, j);
        const double gap_lo = theta_C_adj(lo.vhat(0, j), 0.0, 0.5) - lo.u(0, j);
        const double h_up = counterparty_hazard(m, Variant::Upper, (*g)[j], 0, gap_up);
        const double h_lo = counterparty_hazard(m, Variant::Lower, (*g)[j], 0, gap_lo);
        for (double mu = m.band.mu_lower; mu <= m.band.mu_upper + 1e-12; mu += 0.01) {
            const double h = mu - m.rates.r_D;
            EXPECT_GE(h_up * gap_up, h * gap_up - 1e-15);
            EXPECT_LE(h_lo * gap_lo, h * gap_lo + 1e-15);
        }
    }
}

TEST(Xva, ValueEquationConsistency) {
    // joint system for the clean value and the full value process, integrated here with
    // its own RK4 on the same nodes; the difference must reproduce the XVA surface
    Market m = test::single_name(0.002, PiecewiseConstant({0.0, 1.0}, {0.1, 0.3}), 0.2, 0.18, 0.5, 4.0, 2.0);
    m.rates.rf_plus = 0.04;
    m.rates.rf_minus = 0.01;
    m.rates.rm_plus = 0.003;
    m.rates.rm_minus = 0.001;
    m.portfolio.collateral.alpha = 0.3;
    m.band.mu_true = PiecewiseConstant(0.182);
    const Lattice lat = Lattice::full(1);
    const auto g = test::grid_for(m, 1000);
    const auto mm = MarginModel::build(m, lat);
    const auto sol = solve_xva(m, lat, g, mm, Variant::Actual);

    const auto& r = m.rates;
    const double L = 4.0, S = 0.5, lI = 0.5, lC = 0.5;
    auto rhs = [&](double t, double t_mid, const double y[2], double dy[2]) {
        const double v = y[0], ubar = y[1];
        const double h1 = m.q.reference(0, t_mid, 0), hI = m.q.investor(t_mid, 0), hC = 0.182 - r.r_D;
        const double M = 0.3 * v + mm.initial(0, t);
        const double thI = v - lI * pos(v - M), thC = v + lC * neg(v - M);
        const double z1 = L - ubar, zI = thI - ubar, zC = thC - ubar;
        const double a = ubar + z1 + zI + zC - M;
        const double f = -(r.rf_plus * pos(a) - r.rf_minus * neg(a) - r.r_D * (z1 + zI + zC) + r.rm_plus * pos(M) -
                           r.rm_minus * neg(M) + S);
        dy[0] = -r.r_D * v - S + h1 * (L - v);
        dy[1] = hI * (thI - ubar) + hC * (thC - ubar) + h1 * (L - ubar) + f;
    };
    double y[2] = {0.0, 0.0};
    for (std::size_t j = g->steps(); j-- > 0;) {
        const double hi = (*g)[j + 1], lo = (*g)[j], h = hi - lo, mid = 0.5 * (hi + lo);
        double k1[2], k2[2], k3[2], k4[2], tmp[2];
        rhs(hi, mid, y, k1);
        for (int i = 0; i < 2; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(mid, mid, tmp, k2);
        for (int i = 0; i < 2; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(mid, mid, tmp, k3);
        for (int i = 0; i < 2; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(lo, mid, tmp, k4);
        for (int i = 0; i < 2; ++i) y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        ASSERT_NEAR(y[0], sol.vhat(0, j), 1e-12);
        ASSERT_NEAR(y[1] - y[0], sol.u(0, j), 1e-8) << "node " << j;
    }
}

TEST(Xva, RobustQueries) {
    const Market m = figure_two();
    const Lattice lat = Lattice::for_market(m, LatticeMode::Auto);
    const auto g = test::grid_for(m, 1000);
    const auto mm = MarginModel::build(m, lat);
    const auto up = solve_xva(m, lat, g, mm, Variant::Upper, true);
    const RobustXva rx(m, lat, mm, up);
    EXPECT_DOUBLE_EQ(rx(0.0, 0), up.u(0, 0));
    EXPECT_EQ(rx(1.0, 1), 0.0);
    // counterparty default at 0.5 where the clean value is positive leaves nothing to recover
    const double v = up.vhat_at(0, 0.5);
    ASSERT_GT(v, 0.0);
    EXPECT_EQ(rx(0.7, 0, PartyDefault{Party::Counterparty, 0.5}), 0.0);
    EXPECT_NEAR(rx(0.7, 0, PartyDefault{Party::Investor, 0.5}), -0.5 * v, 1e-15);
    EXPECT_THROW(rx(3.5, 0), std::out_of_range);
}

TEST(Xva, TerminalStateStaysZero) {
    const Market m = test::load("benchmark_n5.json").market;
    const Lattice lat = Lattice::full(5);
    const auto g = test::grid_for(m, 100);
    const auto mm = MarginModel::build(m, lat);
    const auto sol = solve_xva(m, lat, g, mm, Variant::Upper);
    for (std::size_t j = 0; j < g->nodes(); ++j) EXPECT_EQ(sol.u(31, j), 0.0);
}
