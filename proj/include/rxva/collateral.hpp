#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "lattice.hpp"
#include "model.hpp"
#include "piecewise.hpp"
#include "simulate.hpp"

namespace rxva {

inline double pos(double x) { return x > 0.0 ? x : 0.0; }
inline double neg(double x) { return x < 0.0 ? -x : 0.0; }

enum class Closeout { Investor, Counterparty, InvestorAdjustment, CounterpartyAdjustment };

//! theta_I, theta_C and their XVA parts (value minus clean value).
inline double closeout_theta(Closeout kind, double vhat, double m, double loss_I, double loss_C) {
    switch (kind) {
    case Closeout::Investor: return vhat - loss_I * pos(vhat - m);
    case Closeout::Counterparty: return vhat + loss_C * neg(vhat - m);
    case Closeout::InvestorAdjustment: return -loss_I * pos(vhat - m);
    case Closeout::CounterpartyAdjustment: return loss_C * neg(vhat - m);
    }
    return 0.0;
}

inline double theta_I_adj(double vhat, double m, double loss_I) {
    return closeout_theta(Closeout::InvestorAdjustment, vhat, m, loss_I, 0.0);
}
inline double theta_C_adj(double vhat, double m, double loss_C) {
    return closeout_theta(Closeout::CounterpartyAdjustment, vhat, m, 0.0, loss_C);
}

//! alpha * gamma * v_hat for a seller-oriented clean value.
inline double variation_margin(double vhat_seller, double alpha, int gamma) { return alpha * gamma * vhat_seller; }

//! beta * max(0, L + S ln(q) / h) when q > exp(-h delta), else 0 (constant physical intensity, gamma = -1).
inline double initial_margin_closed_form(double h, double spread, double loss, double q, double delta, double beta) {
    if (!(q > std::exp(-h * delta))) return 0.0;
    return beta * std::max(0.0, loss + spread * std::log(q) / h);
}

//! Smallest K in [lo, hi] with tail(K) <= level, for nonincreasing `tail` and tail(hi) <= level.
template <class Tail>
double bisect_quantile(Tail&& tail, double lo, double hi, double level) {
    if (tail(lo) <= level) return lo;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) return hi;
        (tail(mid) <= level ? hi : lo) = mid;
        if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) return hi;
    }
    throw std::runtime_error("initial margin bisection did not converge");
}

//! Single-name initial margin: beta times the positive part of the q-quantile of the
//! loss over the margin window [t, (t + delta) ^ T] under physical intensity `hp`.
inline double initial_margin_var(const PiecewiseConstant& hp, double spread, double loss, double q, double delta,
                                 double beta, int gamma, double t, double T) {
    if (!(q > 0.0 && q < 1.0) || !(delta > 0.0) || beta < 0.0 || spread < 0.0 || loss < 0.0)
        throw std::invalid_argument("initial margin: invalid inputs");
    if (beta == 0.0) return 0.0;
    const double window = std::min(t + delta, T) - t;
    if (!(window > 0.0)) return 0.0;
    const double level = 1.0 - q;
    auto survive = [&](double x) { return std::exp(-hp.integral(t, t + x)); };
    double var = 0.0;
    if (gamma < 0) {
        // loss = L - S * u on default at t + u within the window, -S * window otherwise
        auto tail = [&](double K) {
            if (K >= loss) return 0.0;
            const double x = spread > 0.0 ? std::min((loss - K) / spread, window) : window;
            return 1.0 - survive(x);
        };
        var = bisect_quantile(tail, 0.0, loss, level);
    } else {
        if (loss >= spread * T) return 0.0;
        // loss = S * window without default, S * u - L on default at t + u
        const double top = spread * window;
        const double pw = survive(window);
        auto tail = [&](double K) {
            if (K >= top) return 0.0;
            double p = pw;
            const double x = (K + loss) / spread;
            if (x < window) p += survive(std::max(x, 0.0)) - pw;
            return p;
        };
        var = bisect_quantile(tail, 0.0, top, level);
    }
    return beta * std::max(0.0, var);
}

struct MarginSettings {
    std::size_t im_paths = 100000;
    std::size_t im_times = 50;
    std::uint64_t seed = 7;
    unsigned workers = 1;
};

//! Collateral M^(J)(t) = VM + IM; VM is linear in the oriented clean value and IM
//! depends only on (t, state).
class MarginModel {
public:
    MarginModel() = default;

    static MarginModel build(const Market& m, const Lattice& lat, const MarginSettings& opt = {}) {
        MarginModel mm;
        mm.alpha_ = m.portfolio.collateral.alpha;
        mm.terminal_ = lat.states() - 1;
        mm.homogeneous_ = lat.is_homogeneous();
        const auto& c = m.portfolio.collateral;
        if (c.beta == 0.0 || m.size() == 0) return mm;
        mm.T_ = m.maturity();
        if (m.size() == 1) {
            mm.kind_ = Kind::Single;
            const auto& ct = m.portfolio.contracts.front();
            const auto& pm = m.physical();
            if (pm.mode() == ContagionModel::Mode::Table) {
                mm.hp_ = std::make_shared<PiecewiseConstant>(table_for_single(pm));
            } else {
                mm.hp_ = std::make_shared<PiecewiseConstant>(pm.reference(0, 0.0, 0));
            }
            mm.single_ = ct;
            mm.terms_ = c;
            return mm;
        }
        mm.kind_ = Kind::Table;
        mm.build_table(m, lat, opt);
        return mm;
    }

    double alpha() const { return alpha_; }

    double initial(int state, double t) const {
        if (state == terminal_) return 0.0;
        switch (kind_) {
        case Kind::None: return 0.0;
        case Kind::Single:
            return initial_margin_var(*hp_, single_.spread, single_.loss, terms_.q, terms_.delta, terms_.beta,
                                      single_.direction, t, T_);
        case Kind::Table: return table_at(state, t);
        }
        return 0.0;
    }

    //! Total collateral given the oriented clean value of the state.
    double total(int state, double t, double vhat) const {
        if (state == terminal_) return 0.0;
        return alpha_ * vhat + initial(state, t);
    }

    bool zero() const { return alpha_ == 0.0 && kind_ == Kind::None; }

private:
    enum class Kind { None, Single, Table };

    static PiecewiseConstant table_for_single(const ContagionModel& pm) {
        // physical table for the lone reference name in the empty state
        std::vector<double> starts{0.0};
        for (double s : pm.breakpoints(1e9)) starts.push_back(s);
        std::vector<double> values;
        for (double s : starts) values.push_back(pm.reference(0, s, 0));
        return {starts, values};
    }

    void build_table(const Market& m, const Lattice& lat, const MarginSettings& opt) {
        const auto& c = m.portfolio.collateral;
        const std::size_t nt = std::max<std::size_t>(opt.im_times, 2);
        for (std::size_t k = 0; k <= nt; ++k) times_.push_back(T_ * static_cast<double>(k) / static_cast<double>(nt));
        const HazardSource src = HazardSource::physical(m);
        const int states = lat.states();
        table_.assign(static_cast<std::size_t>(states) * times_.size(), 0.0);
        for (int s = 0; s + 1 < states; ++s) {
            for (std::size_t k = 0; k < times_.size(); ++k) {
                const double t = times_[k];
                const double end = std::min(t + c.delta, T_);
                if (!(end > t)) continue;
                SimulationSpec spec{t, lat.mask(s), end, false, false};
                const std::uint64_t stream = (static_cast<std::uint64_t>(s) << 32) | k;
                auto losses = map_paths<double>(opt.im_paths, opt.workers, [&](std::size_t i) {
                    PathRng rng(opt.seed, stream, i, false);
                    ScenarioPath p = simulate_path(src, spec, rng);
                    double x = 0.0;
                    for (int e = 0; e < m.size(); ++e) {
                        if (lat.mask(s) & (Mask{1} << e)) continue;
                        const auto& ct = m.portfolio.contracts[static_cast<std::size_t>(e)];
                        const double tau = p.tau_ref[static_cast<std::size_t>(e)];
                        const double stop = std::min(tau, end);
                        x += ct.direction * ((tau <= end ? ct.loss : 0.0) - ct.spread * (stop - t));
                    }
                    return -x;
                });
                std::sort(losses.begin(), losses.end());
                const auto idx = static_cast<std::size_t>(
                    std::ceil(c.q * static_cast<double>(losses.size())) - 1.0);
                table_[static_cast<std::size_t>(s) * times_.size() + k] =
                    c.beta * std::max(0.0, losses[std::min(idx, losses.size() - 1)]);
            }
        }
    }

    double table_at(int state, double t) const {
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
        k = std::min(k, times_.size() - 2);
        const double x = (t - times_[k]) / (times_[k + 1] - times_[k]);
        const double* row = table_.data() + static_cast<std::size_t>(state) * times_.size();
        return row[k] + (row[k + 1] - row[k]) * x;
    }

    double alpha_ = 0.0;
    int terminal_ = 0;
    bool homogeneous_ = false;
    Kind kind_ = Kind::None;
    double T_ = 0.0;
    std::shared_ptr<PiecewiseConstant> hp_;
    Contract single_;
    CollateralTerms terms_;
    std::vector<double> times_;
    std::vector<double> table_;
};

} // namespace rxva
