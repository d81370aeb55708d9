#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <rxva/clean.hpp>
#include <rxva/collateral.hpp>
#include <rxva/config.hpp>
#include <rxva/grid.hpp>
#include <rxva/lattice.hpp>
#include <rxva/model.hpp>
#include <rxva/xva.hpp>

namespace rxva::test {

inline RunConfig load(const std::string& name) {
    return load_config(std::string(RXVA_SOURCE_DIR) + "/configs/" + name);
}

//! One reference name with table intensities and a constant counterparty table.
inline Market single_name(double rD, const PiecewiseConstant& h_ref, double h_inv, double h_cpty, double spread,
                          double loss, double T, int gamma = +1) {
    Market m;
    m.rates = {rD, rD, rD, rD, rD};
    m.q = ContagionModel::tables({PiecewiseConstant(h_inv), {}}, IntensityTable{PiecewiseConstant(h_cpty), {}},
                                 {IntensityTable{h_ref, {}}});
    m.band = {h_cpty + rD, h_cpty + rD, std::nullopt};
    m.portfolio.contracts = {{spread, loss, gamma}};
    m.portfolio.maturity = T;
    m.portfolio.loss_investor = 0.5;
    m.portfolio.loss_counterparty = 0.5;
    m.portfolio.collateral.alpha = 0.0;
    m.portfolio.collateral.beta = 0.0;
    return m;
}

//! Homogeneous contagion portfolio; band follows the counterparty parameters.
inline Market contagion_market(int n, const ContagionParams& a, double rD, double spread, double loss, double T,
                               int gamma = +1) {
    Market m;
    m.rates = {rD, rD, rD, rD, rD};
    m.q = ContagionModel::contagion(n, a);
    m.band = {a.a20 + rD, a.a20 + rD + n * a.a23, std::nullopt};
    m.portfolio.contracts.assign(static_cast<std::size_t>(n), Contract{spread, loss, gamma});
    m.portfolio.maturity = T;
    m.portfolio.loss_investor = 0.5;
    m.portfolio.loss_counterparty = 0.5;
    return m;
}

inline std::shared_ptr<const TimeGrid> grid_for(const Market& m, int steps) {
    return std::make_shared<const TimeGrid>(m.maturity(), steps, m.breakpoints());
}

//! Composite Simpson rule with `n` (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    if (b <= a) return 0.0;
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int k = 1; k < n; ++k) acc += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

//! Single-name clean value by quadrature of the discounted legs, panel-wise between jumps.
inline double clean_by_quadrature(double rD, const PiecewiseConstant& h, double spread, double loss, double T,
                                  double t) {
    std::vector<double> knots{t};
    for (double s : h.starts())
        if (s > t && s < T) knots.push_back(s);
    knots.push_back(T);
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double a = knots[k], b = knots[k + 1];
        const double rate = h(a);
        const double pre = h.integral(t, a) + rD * (a - t);
        acc += simpson([&](double u) { return std::exp(-pre - (rate + rD) * (u - a)) * (loss * rate - spread); }, a,
                       b);
    }
    return acc;
}

//! Dense matrix exponential by scaling and squaring of a Taylor series.
inline std::vector<double> expm(std::vector<double> a, int n) {
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) row += std::abs(a[static_cast<std::size_t>(i * n + j)]);
        norm = std::max(norm, row);
    }
    int squarings = 0;
    while (norm > 0.25) {
        norm *= 0.5;
        ++squarings;
    }
    for (auto& x : a) x = std::ldexp(x, -squarings);
    auto mul = [n](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> z(static_cast<std::size_t>(n * n), 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k)
                for (int j = 0; j < n; ++j)
                    z[static_cast<std::size_t>(i * n + j)] +=
                        x[static_cast<std::size_t>(i * n + k)] * y[static_cast<std::size_t>(k * n + j)];
        return z;
    };
    std::vector<double> result(static_cast<std::size_t>(n * n), 0.0), term(result);
    for (int i = 0; i < n; ++i) result[static_cast<std::size_t>(i * n + i)] = term[static_cast<std::size_t>(i * n + i)] = 1.0;
    for (int k = 1; k <= 24; ++k) {
        term = mul(term, a);
        for (auto& x : term) x /= k;
        for (std::size_t i = 0; i < result.size(); ++i) result[i] += term[i];
    }
    for (int s = 0; s < squarings; ++s) result = mul(result, result);
    return result;
}

//! Homogeneous contagion clean value at t = 0 from the exact flow of the linear
//! system over default counts k = 0..N, augmented with a constant component.
inline double homogeneous_clean_expm(int n, const ContagionParams& a, double rD, double spread, double loss,
                                     double T) {
    const int dim = n + 2; // counts 0..n plus the constant 1
    std::vector<double> gen(static_cast<std::size_t>(dim * dim), 0.0);
    auto at = [&](int i, int j) -> double& { return gen[static_cast<std::size_t>(i * dim + j)]; };
    const int one = n + 1;
    for (int k = 0; k < n; ++k) {
        const double alive = n - k;
        const double h = a.a30 + a.a33 * k;
        at(k, k) = -rD - alive * h;
        at(k, k + 1) = alive * h;
        at(k, one) = alive * (h * loss - spread);
    }
    at(n, n) = -rD;
    for (auto& x : gen) x *= T;
    const auto flow = expm(gen, dim);
    return flow[static_cast<std::size_t>(0 * dim + one)];
}

} // namespace rxva::test
