#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <thread>
#include <vector>

#include "model.hpp"

namespace rxva {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

//! Per-path generator; antithetic pairs (2m, 2m+1) share a stream with mirrored uniforms.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t path, bool antithetic)
        : eng_(splitmix64(splitmix64(seed ^ splitmix64(stream)) + (antithetic ? path / 2 : path))),
          mirror_(antithetic && (path & 1u)) {}

    //! Uniform on the open interval (0, 1).
    double uniform() {
        const double u = (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
        return mirror_ ? 1.0 - u : u;
    }

    double exponential() { return -std::log(uniform()); }

private:
    std::mt19937_64 eng_;
    bool mirror_;
};

//! Intensities seen by the simulator under one measure.
class HazardSource {
public:
    //! Valuation measure with the true counterparty intensity.
    static HazardSource valuation(const Market& m) { return HazardSource(m, m.q, true); }
    //! Physical measure (reference names only matter for margining).
    static HazardSource physical(const Market& m) { return HazardSource(m, m.physical(), false); }

    int names() const { return model_->size(); }
    double reference(int i, double t, Mask J) const { return model_->reference(i, t, J); }
    double investor(double t, Mask J) const { return model_->investor(t, J); }
    double counterparty(double t, Mask J) const {
        if (valuation_) return market_->counterparty_true(t, J);
        return model_->has_counterparty() ? model_->counterparty(t, J) : 0.0;
    }
    double next_break(double t, double horizon) const {
        auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        return it == breaks_.end() ? horizon : std::min(*it, horizon);
    }

private:
    HazardSource(const Market& m, const ContagionModel& model, bool valuation)
        : market_(&m), model_(&model), valuation_(valuation) {
        const double far = m.maturity() * 4.0 + 1.0;
        breaks_ = model.breakpoints(far);
        if (valuation && m.band.mu_true)
            for (double s : m.band.mu_true->starts())
                if (s > 0.0) breaks_.push_back(s);
        std::sort(breaks_.begin(), breaks_.end());
    }

    const Market* market_;
    const ContagionModel* model_;
    bool valuation_;
    std::vector<double> breaks_;
};

struct DefaultEvent {
    double time = 0.0;
    Entity who;
};

struct ScenarioPath {
    std::vector<double> tau_ref;
    double tau_I = kNever;
    double tau_C = kNever;
    std::vector<DefaultEvent> events; //!< chronological
};

struct SimulationSpec {
    double t0 = 0.0;
    Mask start = 0;
    double horizon = 1.0;
    bool parties = true;       //!< simulate investor and counterparty
    bool stop_at_party = true; //!< end the path at the first trading-party default
};

//! Exact default-time sampling: each entity defaults when its cumulated intensity
//! crosses an independent unit exponential; intensities are re-read after every
//! default and at every table breakpoint.
inline ScenarioPath simulate_path(const HazardSource& src, const SimulationSpec& spec, PathRng& rng) {
    const int n = src.names();
    ScenarioPath path;
    path.tau_ref.assign(static_cast<std::size_t>(n), kNever);
    // thresholds in a fixed order: references 1..N, investor, counterparty
    std::vector<double> threshold(static_cast<std::size_t>(n) + 2), cum(static_cast<std::size_t>(n) + 2, 0.0);
    for (auto& e : threshold) e = rng.exponential();
    std::vector<char> alive(static_cast<std::size_t>(n) + 2, 1);
    Mask J = spec.start;
    for (int i = 0; i < n; ++i)
        if (J & (Mask{1} << i)) alive[static_cast<std::size_t>(i)] = 0;
    if (!spec.parties) alive[static_cast<std::size_t>(n)] = alive[static_cast<std::size_t>(n) + 1] = 0;

    std::vector<double> rate(static_cast<std::size_t>(n) + 2, 0.0);
    double t = spec.t0;
    while (t < spec.horizon) {
        const double seg_end = src.next_break(t, spec.horizon);
        for (int e = 0; e < n + 2; ++e) {
            auto k = static_cast<std::size_t>(e);
            if (!alive[k]) continue;
            rate[k] = e < n ? src.reference(e, t, J) : (e == n ? src.investor(t, J) : src.counterparty(t, J));
        }
        int hit = -1;
        double wait = kNever;
        for (int e = 0; e < n + 2; ++e) {
            auto k = static_cast<std::size_t>(e);
            if (!alive[k] || !(rate[k] > 0.0)) continue;
            const double w = (threshold[k] - cum[k]) / rate[k];
            if (w < wait) {
                wait = w;
                hit = e;
            }
        }
        if (hit < 0 || t + wait >= seg_end) {
            for (int e = 0; e < n + 2; ++e)
                if (alive[static_cast<std::size_t>(e)])
                    cum[static_cast<std::size_t>(e)] += rate[static_cast<std::size_t>(e)] * (seg_end - t);
            t = seg_end;
            continue;
        }
        for (int e = 0; e < n + 2; ++e)
            if (alive[static_cast<std::size_t>(e)]) cum[static_cast<std::size_t>(e)] += rate[static_cast<std::size_t>(e)] * wait;
        t += wait;
        alive[static_cast<std::size_t>(hit)] = 0;
        if (hit < n) {
            path.tau_ref[static_cast<std::size_t>(hit)] = t;
            J |= Mask{1} << hit;
            path.events.push_back({t, Entity::reference(hit + 1)});
        } else if (hit == n) {
            path.tau_I = t;
            path.events.push_back({t, Entity::investor()});
            if (spec.stop_at_party) break;
        } else {
            path.tau_C = t;
            path.events.push_back({t, Entity::counterparty()});
            if (spec.stop_at_party) break;
        }
    }
    return path;
}

//! Evaluates f(i) for i in [0, n) over `workers` threads; results are index-ordered,
//! so any reduction over them is independent of the worker count.
template <class R, class F>
std::vector<R> map_paths(std::size_t n, unsigned workers, F&& f) {
    std::vector<R> out(n);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) out[i] = f(i);
        });
    for (auto& th : pool) th.join();
    return out;
}

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

//! Mean and standard error; with `paired`, consecutive samples are averaged first.
inline Estimate summarize(const std::vector<double>& x, bool paired) {
    std::vector<double> s;
    if (paired) {
        for (std::size_t i = 0; i + 1 < x.size(); i += 2) s.push_back(0.5 * (x[i] + x[i + 1]));
    } else {
        s = x;
    }
    Estimate e;
    e.samples = x.size();
    if (s.empty()) return e;
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    e.mean = mean;
    e.std_error = s.size() > 1 ? std::sqrt(var / static_cast<double>(s.size() - 1) / static_cast<double>(s.size())) : 0.0;
    return e;
}

} // namespace rxva
