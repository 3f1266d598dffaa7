#pragma once

// Reference implementations used only by tests. They follow the textbook
// definitions directly and share no code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace iqarag::oracle {

struct Vec {
    std::vector<double> v;
};

inline double naive_l2(const std::vector<float>& a, const std::vector<float>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
        s += d * d;
    }
    return static_cast<double>(std::sqrt(s));
}

inline int naive_bin(double mos) {
    if (mos >= 0.8) return 5;
    if (mos >= 0.6) return 4;
    if (mos >= 0.4) return 3;
    if (mos >= 0.2) return 2;
    return 1;
}

struct OracleAnchor {
    std::size_t row;
    int bin;
};

// Quadratic brute force: repeatedly pick the unused row with the smallest
// (distance, row) pair, k times; then walk bins 1..5 and take the first hit.
inline std::vector<OracleAnchor> brute_force_retrieve(const std::vector<std::vector<float>>& refs,
                                                      const std::vector<double>& mos,
                                                      const std::vector<float>& query, std::size_t k,
                                                      std::vector<std::size_t>* order_out = nullptr) {
    const std::size_t n = refs.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = naive_l2(refs[i], query);
    std::vector<bool> used(n, false);
    std::vector<std::size_t> order;
    for (std::size_t step = 0; step < std::min(k, n); ++step) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            if (best == n || dist[i] < dist[best]) best = i;
        }
        used[best] = true;
        order.push_back(best);
    }
    if (order_out) *order_out = order;

    std::vector<OracleAnchor> anchors;
    for (int bin = 1; bin <= 5; ++bin) {
        for (std::size_t r : order) {
            if (naive_bin(mos[r]) == bin) {
                anchors.push_back({r, bin});
                break;
            }
        }
    }
    return anchors;
}

// Textbook two-pass Pearson.
inline std::optional<double> two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

// rank_i = #{j : x_j < x_i} + (#{j : x_j == x_i} + 1) / 2
inline std::vector<double> counting_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0, equal = 0;
        for (double v : x) {
            if (v < x[i]) ++less;
            if (v == x[i]) ++equal;
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

inline std::optional<double> two_pass_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return two_pass_pearson(counting_ranks(x), counting_ranks(y));
}

}  // namespace iqarag::oracle
