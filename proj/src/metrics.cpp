#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "iqarag/error.hpp"
#include "iqarag/evalkit.hpp"

namespace iqarag {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ValidationError("length mismatch: " + std::to_string(a.size()) + " predictions vs " +
                              std::to_string(b.size()) + " ground-truth values");
    }
    if (a.size() < 2) throw ValidationError("correlation needs at least two pairs");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ValidationError("non-finite value in correlation input");
    }
}

// Single-pass Welford co-moments.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x[i] - mx);
        syy += dy * (y[i] - my);
        sxy += dx * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

bool constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double logistic(const Eigen::Vector4d& b, double x) {
    return b[1] + (b[0] - b[1]) / (1.0 + std::exp(-(x - b[2]) / std::abs(b[3])));
}

// Levenberg-Marquardt on the standard four-parameter logistic
// f(x) = b1 + (b0 - b1) / (1 + exp(-(x - b2) / |b3|)).
Eigen::Vector4d fit_logistic(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    const double xmean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double xvar = 0.0;
    for (double v : x) xvar += (v - xmean) * (v - xmean);
    const double xstd = std::sqrt(xvar / static_cast<double>(x.size()));

    Eigen::Vector4d beta(*ymax, *ymin, xmean, xstd > 0.0 ? xstd : 1.0);
    auto sse = [&](const Eigen::Vector4d& b) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = y[static_cast<std::size_t>(i)] - logistic(b, x[static_cast<std::size_t>(i)]);
            s += r * r;
        }
        return s;
    };

    double lambda = 1e-3;
    double cost = sse(beta);
    Eigen::MatrixXd jac(n, 4);
    Eigen::VectorXd res(n);
    for (int iter = 0; iter < 200; ++iter) {
        const double scale = std::abs(beta[3]);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double xi = x[static_cast<std::size_t>(i)];
            const double e = std::exp(-(xi - beta[2]) / scale);
            const double s = 1.0 / (1.0 + e);
            const double ds = s * s * e;  // d s / d u with u = (x - b2) / |b3|
            res[i] = y[static_cast<std::size_t>(i)] - logistic(beta, xi);
            jac(i, 0) = s;
            jac(i, 1) = 1.0 - s;
            jac(i, 2) = (beta[0] - beta[1]) * ds * (-1.0 / scale);
            jac(i, 3) = (beta[0] - beta[1]) * ds * (-(xi - beta[2]) / (scale * beta[3]));
        }
        const Eigen::Matrix4d jtj = jac.transpose() * jac;
        const Eigen::Vector4d jtr = jac.transpose() * res;

        bool improved = false;
        while (lambda < 1e12) {
            Eigen::Matrix4d a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Vector4d step = a.ldlt().solve(jtr);
            Eigen::Vector4d next = beta + step;
            if (next[3] == 0.0) next[3] = 1e-12;
            const double next_cost = sse(next);
            if (std::isfinite(next_cost) && next_cost < cost) {
                const double gain = cost - next_cost;
                beta = next;
                cost = next_cost;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (gain < 1e-15 * (1.0 + cost)) return beta;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) break;
    }
    return beta;
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // Positions i..j-1 (0-based) share rank mean((i+1)..j).
        const double shared = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = shared;
        i = j;
    }
    return ranks;
}

std::optional<double> plcc(std::span<const double> pred, std::span<const double> gt) {
    check_pair(pred, gt);
    if (constant(pred) || constant(gt)) return std::nullopt;
    return pearson(pred, gt);
}

std::optional<double> srcc(std::span<const double> pred, std::span<const double> gt) {
    check_pair(pred, gt);
    if (constant(pred) || constant(gt)) return std::nullopt;
    const auto rp = fractional_ranks(pred);
    const auto rg = fractional_ranks(gt);
    return pearson(rp, rg);
}

std::optional<double> plcc_logistic(std::span<const double> pred, std::span<const double> gt) {
    check_pair(pred, gt);
    if (constant(pred) || constant(gt)) return std::nullopt;
    const auto beta = fit_logistic(pred, gt);
    std::vector<double> mapped(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) mapped[i] = logistic(beta, pred[i]);
    if (constant(mapped)) return std::nullopt;
    return pearson(mapped, gt);
}

}  // namespace iqarag
