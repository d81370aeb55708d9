#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"

namespace rxva {

//! Transition J -> J ∪ {entity}; `multiplicity` counts exchangeable names sharing the edge.
struct Edge {
    int child = 0;
    int entity = 0; // 0-based reference index representing the edge
    double multiplicity = 1.0;
};

enum class LatticeMode { Auto, Full, Homogeneous };

//! Default-state lattice: 2^N subsets, or N+1 cardinalities for exchangeable portfolios.
class Lattice {
public:
    static Lattice full(int n) {
        if (n < 0 || n > 16) throw std::invalid_argument("full enumeration supports 0..16 names");
        Lattice l;
        l.n_ = n;
        l.homogeneous_ = false;
        const int s = 1 << n;
        l.masks_.resize(static_cast<std::size_t>(s));
        l.edges_.resize(static_cast<std::size_t>(s));
        for (int m = 0; m < s; ++m) {
            l.masks_[static_cast<std::size_t>(m)] = static_cast<Mask>(m);
            for (int i = 0; i < n; ++i)
                if (!(m & (1 << i))) l.edges_[static_cast<std::size_t>(m)].push_back({m | (1 << i), i, 1.0});
        }
        return l;
    }

    static Lattice homogeneous(int n) {
        if (n < 0 || n > 31) throw std::invalid_argument("homogeneous lattice supports 0..31 names");
        Lattice l;
        l.n_ = n;
        l.homogeneous_ = true;
        for (int k = 0; k <= n; ++k) {
            l.masks_.push_back(k == 0 ? 0u : static_cast<Mask>((std::uint64_t{1} << k) - 1));
            std::vector<Edge> e;
            if (k < n) e.push_back({k + 1, k, static_cast<double>(n - k)});
            l.edges_.push_back(std::move(e));
        }
        return l;
    }

    static Lattice for_market(const Market& m, LatticeMode mode) {
        const bool hom = m.homogeneous();
        if (mode == LatticeMode::Homogeneous && !hom)
            throw std::invalid_argument("homogeneous lattice requested for a non-exchangeable portfolio");
        if (mode == LatticeMode::Homogeneous || (mode == LatticeMode::Auto && hom)) return homogeneous(m.size());
        return full(m.size());
    }

    int names() const { return n_; }
    int states() const { return static_cast<int>(masks_.size()); }
    bool is_homogeneous() const { return homogeneous_; }
    //! Representative defaulted subset of a state.
    Mask mask(int s) const { return masks_[static_cast<std::size_t>(s)]; }
    int defaulted(int s) const { return cardinality(mask(s)); }
    int alive(int s) const { return n_ - defaulted(s); }
    const std::vector<Edge>& edges(int s) const { return edges_[static_cast<std::size_t>(s)]; }
    int root() const { return 0; }

    int state_of(Mask J) const {
        if (homogeneous_) return cardinality(J);
        return static_cast<int>(J);
    }

    //! CSV label: bitmask in full mode, k in homogeneous mode.
    std::string label(int s) const {
        return homogeneous_ ? "k" + std::to_string(s) : std::to_string(mask(s));
    }

private:
    int n_ = 0;
    bool homogeneous_ = false;
    std::vector<Mask> masks_;
    std::vector<std::vector<Edge>> edges_;
};

} // namespace rxva
