#pragma once

#include <cmath>
#include <memory>

#include "lattice.hpp"
#include "model.hpp"
#include "surface.hpp"

namespace rxva {

enum class Orientation {
    Seller,  //!< loss leg minus spread leg, contract directions ignored
    Oriented //!< each contract weighted by its direction
};

inline double contract_sign(const Contract& c, Orientation o) {
    return o == Orientation::Oriented ? static_cast<double>(c.direction) : 1.0;
}

//! Reversed-time slope of the clean value at one state.
inline double clean_slope(const Market& m, const Lattice& lat, int s, double t_mid, const double* y, int width,
                          Orientation o) {
    const double v = y[s * width];
    const Mask J = lat.mask(s);
    double acc = -m.rates.r_D * v;
    for (const Edge& e : lat.edges(s)) {
        const Contract& c = m.portfolio.contracts[static_cast<std::size_t>(e.entity)];
        const double sign = contract_sign(c, o);
        const double h = m.q.reference(e.entity, t_mid, J);
        acc += e.multiplicity * (-sign * c.spread + h * (sign * c.loss + y[e.child * width] - v));
    }
    return acc;
}

//! Clean value surface for every lattice state, zero at maturity.
inline LatticeSurface clean_surface(const Market& m, const Lattice& lat, std::shared_ptr<const TimeGrid> grid,
                                    Orientation o = Orientation::Seller, bool dense = false) {
    grid->require_aligned(m.breakpoints());
    LatticeSurface s(grid, lat.states(), 1, {"v_hat"});
    if (dense) s.enable_dense();
    rk4_backward(s, [&](double, double t_mid, const double* y, double* dy) {
        for (int k = 0; k < lat.states(); ++k) dy[k] = clean_slope(m, lat, k, t_mid, y, 1, o);
    });
    return s;
}

//! Single-name clean value at t from exact piecewise exponential primitives.
inline double clean_closed_form_single(double r_D, const PiecewiseConstant& hazard, double spread, double loss,
                                       double T, double t) {
    if (t >= T) return 0.0;
    std::vector<double> knots{t};
    for (double s : hazard.starts())
        if (s > t && s < T) knots.push_back(s);
    knots.push_back(T);
    double survival = 1.0; // exp(-∫_t^a (h + r_D))
    double annuity = 0.0, protection = 0.0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double a = knots[k], b = knots[k + 1], len = b - a;
        const double h = hazard(a);
        const double rate = h + r_D;
        const double piece = rate > 0.0 ? -std::expm1(-rate * len) / rate : len;
        annuity += survival * piece;
        protection += survival * h * piece;
        survival *= std::exp(-rate * len);
    }
    return loss * protection - spread * annuity;
}

} // namespace rxva
