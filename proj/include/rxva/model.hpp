#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "piecewise.hpp"

namespace rxva {

//! Defaulted reference entities; bit (i-1) marks entity i.
using Mask = std::uint32_t;

inline int cardinality(Mask m) { return std::popcount(m); }

struct Rates {
    double r_D = 0.0;
    double rf_plus = 0.0;
    double rf_minus = 0.0;
    double rm_plus = 0.0;
    double rm_minus = 0.0;
};

struct CounterpartyBand {
    double mu_lower = 0.0;
    double mu_upper = 0.0;
    std::optional<PiecewiseConstant> mu_true;
};

struct Contract {
    double spread = 0.0;
    double loss = 0.0;
    int direction = +1;
};

struct CollateralTerms {
    double alpha = 0.0;
    double beta = 0.0;
    double q = 0.99;
    double delta = 10.0 / 252.0;
};

struct Portfolio {
    std::vector<Contract> contracts;
    double maturity = 1.0;
    double loss_investor = 0.0;
    double loss_counterparty = 0.0;
    CollateralTerms collateral;

    int size() const { return static_cast<int>(contracts.size()); }

    bool identical_contracts() const {
        for (const auto& c : contracts) {
            const auto& f = contracts.front();
            if (c.spread != f.spread || c.loss != f.loss || c.direction != f.direction) return false;
        }
        return true;
    }

    Portfolio with_direction(int gamma) const {
        Portfolio p = *this;
        for (auto& c : p.contracts) c.direction = gamma;
        return p;
    }
};

enum class Party { Reference, Investor, Counterparty };

//! Entity id; reference entities are 1-based.
struct Entity {
    Party party = Party::Reference;
    int index = 0;

    static Entity reference(int i) { return {Party::Reference, i}; }
    static Entity investor() { return {Party::Investor, 0}; }
    static Entity counterparty() { return {Party::Counterparty, 0}; }
};

struct ContagionParams {
    double a10 = 0.0, a13 = 0.0;
    double a20 = 0.0, a23 = 0.0;
    double a30 = 0.0, a33 = 0.0;
    // Accepted for completeness; they only act after the investor or counterparty default.
    double a12 = 0.0, a21 = 0.0, a31 = 0.0, a32 = 0.0;
};

//! Time table for one entity, optionally replaced for specific defaulted subsets.
struct IntensityTable {
    PiecewiseConstant base;
    std::vector<std::pair<Mask, PiecewiseConstant>> overrides;

    const PiecewiseConstant& at(Mask J) const {
        for (const auto& [mask, table] : overrides)
            if (mask == J) return table;
        return base;
    }

    template <class F>
    void for_each_table(F&& f) const {
        f(base);
        for (const auto& o : overrides) f(o.second);
    }
};

class ContagionModel {
public:
    enum class Mode { Contagion, Table };

    static ContagionModel contagion(int n, ContagionParams p) {
        ContagionModel m;
        m.mode_ = Mode::Contagion;
        m.n_ = n;
        m.params_ = p;
        return m;
    }

    static ContagionModel tables(IntensityTable investor, std::optional<IntensityTable> counterparty,
                                 std::vector<IntensityTable> refs) {
        ContagionModel m;
        m.mode_ = Mode::Table;
        m.n_ = static_cast<int>(refs.size());
        m.investor_ = std::move(investor);
        m.counterparty_ = std::move(counterparty);
        m.refs_ = std::move(refs);
        return m;
    }

    Mode mode() const { return mode_; }
    int size() const { return n_; }
    const ContagionParams& params() const { return params_; }

    //! Reference entity intensity, 0-based index, entity assumed alive.
    double reference(int i, double t, Mask J) const {
        if (mode_ == Mode::Contagion) return params_.a30 + params_.a33 * cardinality(J & ~(Mask{1} << i));
        return refs_[static_cast<std::size_t>(i)].at(J)(t);
    }

    double investor(double t, Mask J) const {
        if (mode_ == Mode::Contagion) return params_.a10 + params_.a13 * cardinality(J);
        return investor_.at(J)(t);
    }

    bool has_counterparty() const { return mode_ == Mode::Contagion || counterparty_.has_value(); }

    double counterparty(double t, Mask J) const {
        if (mode_ == Mode::Contagion) return params_.a20 + params_.a23 * cardinality(J);
        if (!counterparty_) throw std::logic_error("intensity table has no counterparty entry");
        return counterparty_->at(J)(t);
    }

    double intensity(Entity who, double t, Mask J) const {
        switch (who.party) {
        case Party::Investor: return investor(t, J);
        case Party::Counterparty: return counterparty(t, J);
        case Party::Reference:
            if (who.index < 1 || who.index > n_) throw std::out_of_range("reference entity id out of range");
            if (J & (Mask{1} << (who.index - 1)))
                throw std::invalid_argument("entity " + std::to_string(who.index) + " already defaulted");
            return reference(who.index - 1, t, J);
        }
        return 0.0;
    }

    //! Jump times strictly inside (0, T).
    std::vector<double> breakpoints(double T) const {
        std::vector<double> out;
        auto collect = [&](const PiecewiseConstant& f) {
            for (double s : f.starts())
                if (s > 0.0 && s < T) out.push_back(s);
        };
        if (mode_ == Mode::Table) {
            investor_.for_each_table(collect);
            if (counterparty_) counterparty_->for_each_table(collect);
            for (const auto& r : refs_) r.for_each_table(collect);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    //! Reference intensities identical across names and depending on J only through |J|.
    bool count_only() const {
        if (mode_ == Mode::Contagion) return true;
        if (!investor_.overrides.empty()) return false;
        if (counterparty_ && !counterparty_->overrides.empty()) return false;
        for (const auto& r : refs_)
            if (!r.overrides.empty() || !(r.base == refs_.front().base)) return false;
        return true;
    }

    //! Smallest and largest values over all reachable states.
    std::pair<double, double> reference_range(int i) const {
        if (mode_ == Mode::Contagion) {
            double a = params_.a30, b = params_.a30 + params_.a33 * std::max(0, n_ - 1);
            return {std::min(a, b), std::max(a, b)};
        }
        return table_range(refs_[static_cast<std::size_t>(i)]);
    }

    std::pair<double, double> investor_range() const {
        if (mode_ == Mode::Contagion) return linear_range(params_.a10, params_.a13);
        return table_range(investor_);
    }

    std::pair<double, double> counterparty_range() const {
        if (mode_ == Mode::Contagion) return linear_range(params_.a20, params_.a23);
        if (!counterparty_) throw std::logic_error("intensity table has no counterparty entry");
        return table_range(*counterparty_);
    }

private:
    std::pair<double, double> linear_range(double base, double slope) const {
        double a = base, b = base + slope * n_;
        return {std::min(a, b), std::max(a, b)};
    }

    static std::pair<double, double> table_range(const IntensityTable& t) {
        double lo = t.base.min_value(), hi = t.base.max_value();
        for (const auto& o : t.overrides) {
            lo = std::min(lo, o.second.min_value());
            hi = std::max(hi, o.second.max_value());
        }
        return {lo, hi};
    }

    Mode mode_ = Mode::Contagion;
    int n_ = 0;
    ContagionParams params_;
    IntensityTable investor_;
    std::optional<IntensityTable> counterparty_;
    std::vector<IntensityTable> refs_;
};

struct Market {
    Rates rates;
    CounterpartyBand band;
    ContagionModel q;
    std::optional<ContagionModel> p;
    Portfolio portfolio;

    int size() const { return portfolio.size(); }
    double maturity() const { return portfolio.maturity; }

    const ContagionModel& physical() const { return p ? *p : q; }

    bool has_true_counterparty() const { return band.mu_true.has_value() || q.has_counterparty(); }

    //! Q-intensity of the counterparty used by the actual run and the oracle.
    double counterparty_true(double t, Mask J) const {
        if (band.mu_true) return (*band.mu_true)(t)-rates.r_D;
        return q.counterparty(t, J);
    }

    bool homogeneous() const { return q.count_only() && portfolio.identical_contracts(); }

    //! Grid breakpoints: intensity jumps plus margin-window kinks when initial margin is active.
    std::vector<double> breakpoints() const {
        const double T = maturity();
        std::vector<double> out = q.breakpoints(T);
        if (band.mu_true)
            for (double s : band.mu_true->starts())
                if (s > 0.0 && s < T) out.push_back(s);
        const auto& c = portfolio.collateral;
        if (c.beta > 0.0) {
            auto push = [&](double s) {
                if (s > 0.0 && s < T) out.push_back(s);
            };
            push(T - c.delta);
            for (double s : physical().breakpoints(T + c.delta)) {
                push(s);
                push(s - c.delta);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

//! (h_lower, h_upper) = band - r_D.
inline std::pair<double, double> counterparty_band_rates(const Market& m) {
    if (m.band.mu_lower > m.band.mu_upper)
        throw std::invalid_argument("counterparty band inverted: mu_C_lower > mu_C_upper");
    return {m.band.mu_lower - m.rates.r_D, m.band.mu_upper - m.rates.r_D};
}

struct AssumptionCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool strict = true;
    bool passed = false;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }

    std::vector<std::string> failures() const {
        std::vector<std::string> out;
        for (const auto& c : checks)
            if (!c.passed) out.push_back(c.name);
        return out;
    }
};

inline AssumptionReport validate_assumptions(const Market& m) {
    AssumptionReport rep;
    auto less = [&](std::string name, double lhs, double rhs) {
        rep.checks.push_back({std::move(name), lhs, rhs, true, lhs < rhs});
    };
    auto less_eq = [&](std::string name, double lhs, double rhs) {
        rep.checks.push_back({std::move(name), lhs, rhs, false, lhs <= rhs});
    };
    const auto& r = m.rates;
    const int n = m.size();
    const bool multi = n > 1;

    auto bound_checks = [&](const std::string& who, double mu_min) {
        less("r_D < " + who, r.r_D, mu_min);
        less("r_f_plus < " + who, r.rf_plus, mu_min);
        if (multi) less("r_f_minus < " + who, r.rf_minus, mu_min);
    };

    const int distinct = m.q.count_only() ? std::min(n, 1) : n;
    for (int i = 0; i < distinct; ++i)
        bound_checks("mu_" + std::to_string(i + 1), m.q.reference_range(i).first + r.r_D);
    bound_checks("mu_I", m.q.investor_range().first + r.r_D);
    bound_checks("mu_C_lower", m.band.mu_lower);

    less_eq("mu_C_lower <= mu_C_upper", m.band.mu_lower, m.band.mu_upper);
    if (m.band.mu_true) {
        less_eq("mu_C_lower <= mu_C_true", m.band.mu_lower, m.band.mu_true->min_value());
        less_eq("mu_C_true <= mu_C_upper", m.band.mu_true->max_value(), m.band.mu_upper);
    } else if (m.q.has_counterparty()) {
        auto [lo, hi] = m.q.counterparty_range();
        less_eq("mu_C_lower <= mu_C_true", m.band.mu_lower, lo + r.r_D);
        less_eq("mu_C_true <= mu_C_upper", hi + r.r_D, m.band.mu_upper);
    }
    return rep;
}

} // namespace rxva
