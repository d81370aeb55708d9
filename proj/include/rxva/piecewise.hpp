#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rxva {

//! Right-continuous step function: values[j] holds on [starts[j], starts[j+1]).
class PiecewiseConstant {
public:
    PiecewiseConstant() : starts_{0.0}, values_{0.0} {}
    explicit PiecewiseConstant(double value) : starts_{0.0}, values_{value} {}
    PiecewiseConstant(std::vector<double> starts, std::vector<double> values)
        : starts_(std::move(starts)), values_(std::move(values)) {
        if (starts_.empty() || starts_.size() != values_.size())
            throw std::invalid_argument("piecewise table needs matching non-empty times/values");
        if (starts_.front() != 0.0)
            throw std::invalid_argument("piecewise table must start at t=0");
        for (std::size_t j = 1; j < starts_.size(); ++j)
            if (!(starts_[j] > starts_[j - 1]))
                throw std::invalid_argument("piecewise table times must be strictly increasing");
    }

    double operator()(double t) const {
        auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
        std::size_t j = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
        return values_[j];
    }

    //! Integral over [a, b], a <= b.
    double integral(double a, double b) const {
        double acc = 0.0;
        for (std::size_t j = 0; j < starts_.size(); ++j) {
            double lo = std::max(a, starts_[j]);
            double hi = j + 1 < starts_.size() ? std::min(b, starts_[j + 1]) : b;
            if (hi > lo) acc += values_[j] * (hi - lo);
        }
        return acc;
    }

    //! First jump strictly after t, or `fallback` if none.
    double next_break(double t, double fallback) const {
        auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
        return it == starts_.end() ? fallback : std::min(*it, fallback);
    }

    double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
    double max_value() const { return *std::max_element(values_.begin(), values_.end()); }
    bool is_constant() const { return values_.size() == 1; }

    PiecewiseConstant shifted(double delta) const {
        auto v = values_;
        for (auto& x : v) x += delta;
        return {starts_, v};
    }

    const std::vector<double>& starts() const { return starts_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const PiecewiseConstant&) const = default;

private:
    std::vector<double> starts_;
    std::vector<double> values_;
};

} // namespace rxva
