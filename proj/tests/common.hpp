#pragma once

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <deque>
#include <vector>

#include "nlsc/radial.hpp"

namespace testing_support {

constexpr double pi = std::numbers::pi;

// Ground states are reused across cases; solving one costs a fraction of a second.
inline const nlsc::RadialProfile& ground_state(int n, double p, nlsc::RadialGrid grid = {}) {
    struct Entry {
        int n;
        double p;
        double r_max;
        int m;
        nlsc::RadialProfile U;
    };
    static std::deque<Entry> cache;  // stable references on growth
    for (const auto& e : cache)
        if (e.n == n && e.p == p && e.r_max == grid.r_max && e.m == grid.m) return e.U;
    cache.push_back({n, p, grid.r_max, grid.m, nlsc::solve_ground_state(n, p, grid)});
    return cache.back().U;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing_support
