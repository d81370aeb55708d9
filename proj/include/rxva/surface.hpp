#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "grid.hpp"
#include "lattice.hpp"

namespace rxva {

//! Node values of a lattice ODE system, `width` components per state, with optional
//! end-of-step slopes for cubic Hermite evaluation between nodes.
class LatticeSurface {
public:
    LatticeSurface() = default;
    LatticeSurface(std::shared_ptr<const TimeGrid> grid, int states, int width, std::vector<std::string> meaning)
        : grid_(std::move(grid)), states_(states), width_(width), meaning_(std::move(meaning)),
          values_(grid_->nodes() * dim(), 0.0) {}

    const TimeGrid& grid() const { return *grid_; }
    std::shared_ptr<const TimeGrid> grid_ptr() const { return grid_; }
    int states() const { return states_; }
    int width() const { return width_; }
    std::size_t dim() const { return static_cast<std::size_t>(states_) * static_cast<std::size_t>(width_); }
    const std::vector<std::string>& meaning() const { return meaning_; }

    double* node(std::size_t j) { return values_.data() + j * dim(); }
    const double* node(std::size_t j) const { return values_.data() + j * dim(); }
    double value(int state, int comp, std::size_t j) const { return node(j)[index(state, comp)]; }

    bool dense() const { return !slope_lo_.empty(); }
    void enable_dense() {
        slope_lo_.assign(grid_->steps() * dim(), 0.0);
        slope_hi_.assign(grid_->steps() * dim(), 0.0);
    }
    //! Reversed-time slopes at the left and right end of step j.
    double* slope_lo(std::size_t j) { return slope_lo_.data() + j * dim(); }
    double* slope_hi(std::size_t j) { return slope_hi_.data() + j * dim(); }

    //! Value at calendar time t; cubic Hermite when dense, linear otherwise.
    double at(int state, int comp, double t) const {
        const std::size_t j = grid_->locate(t);
        const std::size_t k = index(state, comp);
        const double a = (*grid_)[j], b = (*grid_)[j + 1], h = b - a;
        const double y0 = node(j)[k], y1 = node(j + 1)[k];
        const double x = (t - a) / h;
        if (!dense()) return y0 + (y1 - y0) * x;
        // calendar slope is minus the reversed-time slope
        const double d0 = -slope_lo_[j * dim() + k] * h, d1 = -slope_hi_[j * dim() + k] * h;
        const double x2 = x * x, x3 = x2 * x;
        return (2 * x3 - 3 * x2 + 1) * y0 + (x3 - 2 * x2 + x) * d0 + (-2 * x3 + 3 * x2) * y1 + (x3 - x2) * d1;
    }

    std::size_t index(int state, int comp) const {
        return static_cast<std::size_t>(state) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(comp);
    }

private:
    std::shared_ptr<const TimeGrid> grid_;
    int states_ = 0;
    int width_ = 0;
    std::vector<std::string> meaning_;
    std::vector<double> values_;
    std::vector<double> slope_lo_;
    std::vector<double> slope_hi_;
};

//! Classical RK4 from t = T (zero terminal value) down to t = 0.
//! rhs(t_stage, t_mid, y, dy) returns the reversed-time derivative; t_mid is the
//! step midpoint, at which step-constant intensities are evaluated.
template <class Rhs>
void rk4_backward(LatticeSurface& s, Rhs&& rhs) {
    const auto& g = s.grid();
    const std::size_t n = s.dim();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    std::fill(s.node(g.steps()), s.node(g.steps()) + n, 0.0);
    for (std::size_t j = g.steps(); j-- > 0;) {
        const double hi = g[j + 1], lo = g[j], h = hi - lo, mid = 0.5 * (hi + lo);
        const double* y = s.node(j + 1);
        double* out = s.node(j);
        rhs(hi, mid, y, k1.data());
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        rhs(mid, mid, tmp.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        rhs(mid, mid, tmp.data(), k3.data());
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        rhs(lo, mid, tmp.data(), k4.data());
        for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (s.dense()) {
            std::copy(k1.begin(), k1.end(), s.slope_hi(j));
            rhs(lo, mid, out, s.slope_lo(j));
        }
    }
}

} // namespace rxva
