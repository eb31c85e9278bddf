#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <vector>

namespace prodcredit {

struct GaussLegendreRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

// Nodes by Newton iteration on Legendre polynomials; cached per order.
inline const GaussLegendreRule& gauss_legendre(int n) {
    static std::map<int, GaussLegendreRule> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    GaussLegendreRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    return cache.emplace(n, std::move(rule)).first->second;
}

template <typename Fn>
double integrate_gl(Fn&& f, double a, double b, int n_nodes) {
    if (a == b) return 0.0;
    const auto& rule = gauss_legendre(n_nodes);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    }
    return acc * half;
}

// Trapezoid over sampled values on an equally spaced grid.
inline double trapezoid(std::span<const double> values, double step) {
    if (values.size() < 2) return 0.0;
    double acc = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) acc += values[i];
    return acc * step;
}

}  // namespace prodcredit
