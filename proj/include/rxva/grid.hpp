#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rxva {

//! Time nodes 0 = t_0 < ... < t_M = T, every breakpoint a node.
class TimeGrid {
public:
    TimeGrid() = default;

    //! At least `steps` intervals, none longer than T/steps.
    TimeGrid(double T, int steps, const std::vector<double>& breaks) {
        if (!(T > 0.0)) throw std::invalid_argument("maturity must be positive");
        if (steps < 1) throw std::invalid_argument("grid needs at least one step");
        max_step_ = T / steps;
        std::vector<double> knots{0.0};
        for (double b : breaks)
            if (b > 0.0 && b < T) knots.push_back(b);
        knots.push_back(T);
        std::sort(knots.begin(), knots.end());
        knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
        t_.push_back(0.0);
        for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
            const double a = knots[k], b = knots[k + 1];
            const int n = std::max(1, static_cast<int>(std::ceil((b - a) / max_step_ - 1e-9)));
            for (int j = 1; j < n; ++j) t_.push_back(a + (b - a) * j / n);
            t_.push_back(b);
        }
    }

    const std::vector<double>& times() const { return t_; }
    std::size_t nodes() const { return t_.size(); }
    std::size_t steps() const { return t_.size() - 1; }
    double maturity() const { return t_.back(); }
    double operator[](std::size_t j) const { return t_[j]; }
    double max_step() const { return max_step_; }

    //! Step index j with t in [t_j, t_{j+1}]; the last step for t = T.
    std::size_t locate(double t) const {
        if (t < 0.0 || t > t_.back()) throw std::out_of_range("time outside [0, T]");
        auto it = std::upper_bound(t_.begin(), t_.end(), t);
        std::size_t j = static_cast<std::size_t>(it - t_.begin());
        return std::min(j == 0 ? 0 : j - 1, steps() - 1);
    }

    bool contains_node(double s) const {
        auto it = std::lower_bound(t_.begin(), t_.end(), s);
        return it != t_.end() && std::abs(*it - s) <= 1e-12 * std::max(1.0, s);
    }

    //! Throws if any breakpoint is not a node or a step exceeds the declared maximum.
    void require_aligned(const std::vector<double>& breaks) const {
        for (double b : breaks)
            if (b > 0.0 && b < maturity() && !contains_node(b))
                throw std::invalid_argument("grid misaligned with intensity breakpoint");
        for (std::size_t j = 0; j < steps(); ++j)
            if (t_[j + 1] - t_[j] > max_step_ * (1.0 + 1e-9))
                throw std::invalid_argument("grid too coarse");
    }

private:
    std::vector<double> t_;
    double max_step_ = 0.0;
};

} // namespace rxva
