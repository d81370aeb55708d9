#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace rxva;

namespace {

double clean_at(const Market& m, int steps, double t = 0.0) {
    const Lattice lat = Lattice::for_market(m, LatticeMode::Auto);
    const auto s = clean_surface(m, lat, test::grid_for(m, steps), Orientation::Seller, true);
    return s.at(0, 0, t);
}

} // namespace

TEST(CleanValue, ProtectionLegOnly) {
    const auto m = test::single_name(0.0, PiecewiseConstant(0.1), 0.1, 0.1, 0.0, 0.5, 1.0);
    const double oracle = test::clean_by_quadrature(0.0, PiecewiseConstant(0.1), 0.0, 0.5, 1.0, 0.0);
    EXPECT_NEAR(oracle, 0.0475813, 5e-8);
    EXPECT_NEAR(clean_at(m, 1000), oracle, 1e-10);
}

TEST(CleanValue, PremiumLegOnly) {
    const auto m = test::single_name(0.0, PiecewiseConstant(0.1), 0.1, 0.1, 0.02, 0.0, 1.0);
    const double oracle = test::clean_by_quadrature(0.0, PiecewiseConstant(0.1), 0.02, 0.0, 1.0, 0.0);
    EXPECT_NEAR(oracle, -0.0190325, 5e-8);
    EXPECT_NEAR(clean_at(m, 1000), oracle, 1e-10);
}

TEST(CleanValue, ZeroAtMaturity) {
    const auto m = test::single_name(0.01, PiecewiseConstant(0.1), 0.1, 0.1, 0.02, 0.5, 2.0);
    EXPECT_EQ(clean_at(m, 100, 2.0), 0.0);
    EXPECT_EQ(clean_closed_form_single(0.01, PiecewiseConstant(0.1), 0.02, 0.5, 2.0, 2.0), 0.0);
}

TEST(CleanValue, CalendarProfileChangesSignOnce) {
    const PiecewiseConstant h({0.0, 1.0}, {0.0999, 0.2999});
    const auto m = test::single_name(0.001, h, 0.2, 0.2, 2.0, 10.0, 3.0);
    const Lattice lat = Lattice::full(1);
    const auto g = test::grid_for(m, 3000);
    const auto s = clean_surface(m, lat, g, Orientation::Seller);
    int changes = 0;
    for (std::size_t j = 1; j + 1 < g->nodes(); ++j)
        if ((s.value(0, 0, j) > 0.0) != (s.value(0, 0, j + 1) > 0.0)) ++changes;
    EXPECT_EQ(changes, 1);
}

TEST(CleanValue, RandomPiecewiseClosedForm) {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int draw = 0; draw < 20; ++draw) {
        const double T = 0.5 + 4.5 * u(gen);
        const double cut = T * (0.2 + 0.6 * u(gen));
        const PiecewiseConstant h({0.0, cut}, {0.5 * u(gen), 0.5 * u(gen)});
        const double rD = 0.05 * u(gen), S = 0.1 * u(gen), L = u(gen);
        const auto m = test::single_name(rD, h, 0.1, 0.1, S, L, T);
        const auto g = test::grid_for(m, 1000);
        const auto s = clean_surface(m, Lattice::full(1), g, Orientation::Seller);
        double worst = 0.0;
        for (std::size_t j = 0; j < g->nodes(); j += 37)
            worst = std::max(worst, std::abs(s.value(0, 0, j) - clean_closed_form_single(rD, h, S, L, T, (*g)[j])));
        EXPECT_LT(worst, 1e-8);
        EXPECT_NEAR(clean_closed_form_single(rD, h, S, L, T, 0.0), test::clean_by_quadrature(rD, h, S, L, T, 0.0),
                    1e-9);
    }
}

TEST(CleanValue, LinearWithoutContagion) {
    // independent names: the portfolio value is the sum of single-name values
    ContagionParams a;
    a.a30 = 0.04;
    const auto m = test::contagion_market(3, a, 0.01, 0.03, 0.6, 2.0);
    const double single = clean_closed_form_single(0.01, PiecewiseConstant(0.04), 0.03, 0.6, 2.0, 0.0);
    EXPECT_NEAR(clean_at(m, 1000), 3.0 * single, 1e-10);
}

TEST(CleanValue, ContagionMatchesMatrixExponential) {
    ContagionParams a;
    a.a30 = 0.01;
    a.a33 = 0.01;
    for (int n : {1, 3, 5}) {
        const auto m = test::contagion_market(n, a, 1e-4, 0.02, 0.5, 1.0);
        EXPECT_NEAR(clean_at(m, 500), test::homogeneous_clean_expm(n, a, 1e-4, 0.02, 0.5, 1.0), 1e-12) << n;
    }
}

TEST(CleanValue, HomogeneousEqualsFullEnumeration) {
    ContagionParams a;
    a.a30 = 0.03;
    a.a33 = 0.05;
    const auto m = test::contagion_market(4, a, 0.002, 0.02, 0.5, 2.0);
    const auto g = test::grid_for(m, 400);
    const auto full = clean_surface(m, Lattice::full(4), g);
    const auto hom = clean_surface(m, Lattice::homogeneous(4), g);
    for (std::size_t j = 0; j < g->nodes(); ++j)
        for (Mask J = 0; J < 16; ++J)
            EXPECT_NEAR(full.value(static_cast<int>(J), 0, j), hom.value(cardinality(J), 0, j), 1e-13);
}

TEST(CleanValue, AllDefaultedStateIsZero) {
    ContagionParams a;
    a.a30 = 0.2;
    const auto m = test::contagion_market(3, a, 0.01, 0.02, 0.5, 1.0);
    const auto g = test::grid_for(m, 50);
    const auto s = clean_surface(m, Lattice::full(3), g);
    for (std::size_t j = 0; j < g->nodes(); ++j) EXPECT_EQ(s.value(7, 0, j), 0.0);
}

TEST(CleanValue, EmptyPortfolio) {
    ContagionParams a;
    a.a30 = 0.2;
    const auto m = test::contagion_market(0, a, 0.01, 0.02, 0.5, 1.0);
    const auto g = test::grid_for(m, 20);
    const auto s = clean_surface(m, Lattice::full(0), g);
    for (std::size_t j = 0; j < g->nodes(); ++j) EXPECT_EQ(s.value(0, 0, j), 0.0);
}

TEST(CleanValue, OrientationFlipsSign) {
    auto m = test::single_name(0.01, PiecewiseConstant(0.1), 0.1, 0.1, 0.02, 0.5, 1.0, -1);
    const Lattice lat = Lattice::full(1);
    const auto g = test::grid_for(m, 100);
    const double seller = clean_surface(m, lat, g, Orientation::Seller).value(0, 0, 0);
    const double oriented = clean_surface(m, lat, g, Orientation::Oriented).value(0, 0, 0);
    EXPECT_DOUBLE_EQ(oriented, -seller);
}
