#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fmt/format.h>
#include <span>
#include <vector>

#include "prodcredit/distribution.hpp"
#include "prodcredit/errors.hpp"
#include "prodcredit/rng.hpp"
#include "prodcredit/util.hpp"

namespace prodcredit::sovereign {

// State tax income per year, sampled on a time axis. Linear interpolation
// between nodes; querying outside the axis is a range error.
struct TaxProcess {
    std::vector<double> times;
    std::vector<double> values;  // currency / year, >= 0

    void validate() const {
        if (times.size() < 1 || times.size() != values.size())
            throw ValidationError("tax process: times/values must align and be non-empty");
        for (std::size_t i = 1; i < times.size(); ++i)
            if (!(times[i] > times[i - 1]))
                throw ValidationError("tax process: times must be strictly increasing");
        for (double v : values)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ValidationError("tax process: values must be finite and >= 0");
    }

    double at(double t) const {
        if (t < times.front() - 1e-12 || t > times.back() + 1e-12)
            throw DomainError(fmt::format(
                "tax process: t={} outside covered range [{}, {}]", t, times.front(),
                times.back()));
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return values.front();
        if (it == times.end()) return values.back();
        const std::size_t j = it - times.begin();
        const double w = (t - times[j - 1]) / (times[j] - times[j - 1]);
        return values[j - 1] * (1.0 - w) + values[j] * w;
    }
};

// Growth rate of tax revenue f_p(t, s) on a rectangular (t, s) grid with
// t <= s <= max maturity. Rates may be negative.
struct GrowthSurface {
    std::vector<double> t_axis;
    std::vector<double> s_axis;
    std::vector<std::vector<double>> rates;  // rates[i][j] = f_p(t_i, s_j)

    void validate() const {
        if (t_axis.empty() || s_axis.size() < 2)
            throw ValidationError("growth surface: needs >= 1 observation time and >= 2 maturities");
        if (rates.size() != t_axis.size())
            throw ValidationError("growth surface: one rate row per observation time");
        for (const auto& row : rates) {
            if (row.size() != s_axis.size())
                throw ValidationError("growth surface: row length must match maturity axis");
            for (double v : row)
                if (!std::isfinite(v))
                    throw ValidationError("growth surface: non-finite rate");
        }
        for (std::size_t i = 1; i < t_axis.size(); ++i)
            if (!(t_axis[i] > t_axis[i - 1]))
                throw ValidationError("growth surface: t axis must be strictly increasing");
        for (std::size_t j = 1; j < s_axis.size(); ++j)
            if (!(s_axis[j] > s_axis[j - 1]))
                throw ValidationError("growth surface: s axis must be strictly increasing");
    }

    // Builds a constant-growth surface on a uniform axis.
    static GrowthSurface constant(double rate, double t, double s_max, int n_nodes) {
        GrowthSurface g;
        g.t_axis = {t};
        g.s_axis.resize(n_nodes);
        const double h = s_max / (n_nodes - 1);
        for (int j = 0; j < n_nodes; ++j) g.s_axis[j] = j * h;
        g.rates = {std::vector<double>(n_nodes, rate)};
        return g;
    }

    double rate_at(std::size_t row, double s) const {
        const auto it = std::upper_bound(s_axis.begin(), s_axis.end(), s);
        if (it == s_axis.begin()) return rates[row].front();
        if (it == s_axis.end()) return rates[row].back();
        const std::size_t j = it - s_axis.begin();
        const double w = (s - s_axis[j - 1]) / (s_axis[j] - s_axis[j - 1]);
        return rates[row][j - 1] * (1.0 - w) + rates[row][j] * w;
    }
};

struct BondQuote {
    double t = 0.0;
    double maturity = 0.0;
    double share = 0.01;  // fraction of tax revenue promised
    double price = 0.0;
};

namespace detail {

inline std::size_t growth_row(const GrowthSurface& g, double t) {
    for (std::size_t i = 0; i < g.t_axis.size(); ++i)
        if (std::abs(g.t_axis[i] - t) <= 1e-9) return i;
    throw DomainError(fmt::format(
        "growth surface: observation time {} not on the surface's t axis", t));
}

// Trapezoid of f_p(t, .) over [t, T] along the s axis, with interpolated
// partial end intervals. Exact for surfaces linear in s.
inline double integrated_growth(const GrowthSurface& g, std::size_t row, double a,
                                double b) {
    if (b < a) throw DomainError("growth integral: maturity before observation time");
    if (a < g.s_axis.front() - 1e-12 || b > g.s_axis.back() + 1e-12)
        throw DomainError(fmt::format(
            "growth integral: [{}, {}] outside maturity axis [{}, {}]", a, b,
            g.s_axis.front(), g.s_axis.back()));
    if (b == a) return 0.0;
    double acc = 0.0;
    double prev_s = a;
    double prev_f = g.rate_at(row, a);
    for (std::size_t j = 0; j < g.s_axis.size(); ++j) {
        const double s = g.s_axis[j];
        if (s <= a) continue;
        const double upto = std::min(s, b);
        const double f = g.rate_at(row, upto);
        acc += 0.5 * (prev_f + f) * (upto - prev_s);
        prev_s = upto;
        prev_f = f;
        if (s >= b) break;
    }
    if (prev_s < b) acc += 0.5 * (prev_f + g.rate_at(row, b)) * (b - prev_s);
    return acc;
}

}  // namespace detail

// Price of a claim on `share` of tax revenue over [t, T]: current tax intake
// carried forward at the observed growth of the tax-generating economy.
inline BondQuote price_bond(const TaxProcess& tax, const GrowthSurface& growth,
                            double t, double maturity, double share = 0.01) {
    tax.validate();
    growth.validate();
    if (maturity < t) throw DomainError("price_bond: maturity must be >= t");
    const std::size_t row = detail::growth_row(growth, t);
    const double integral = detail::integrated_growth(growth, row, t, maturity);
    return {t, maturity, share, share * tax.at(t) * std::exp(integral)};
}

// Prices here rise with positive growth, so the raw log-price slope IS the
// growth rate; classical discount-bond forwards carry the opposite sign.
// The flag selects which sign convention the caller gets back.
enum class ForwardConvention { growth, discount };

// Implied growth slice from a quote strip at fixed t: the log-price slope in
// maturity. Central differences inside, one-sided at the strip's ends.
inline std::vector<std::pair<double, double>> implied_forward(
    std::span<const BondQuote> quotes,
    ForwardConvention convention = ForwardConvention::growth) {
    if (quotes.size() < 3)
        throw ValidationError("implied_forward: need at least 3 maturities");
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        if (!(quotes[i].price > 0.0))
            throw DomainError(fmt::format(
                "implied_forward: non-positive price at maturity {}", quotes[i].maturity));
        if (std::abs(quotes[i].t - quotes[0].t) > 1e-12)
            throw ValidationError("implied_forward: quotes must share the observation time");
        if (i > 0 && !(quotes[i].maturity > quotes[i - 1].maturity))
            throw ValidationError("implied_forward: maturities must be strictly increasing");
    }
    std::vector<double> logp(quotes.size());
    for (std::size_t i = 0; i < quotes.size(); ++i) logp[i] = std::log(quotes[i].price);

    std::vector<std::pair<double, double>> out(quotes.size());
    const std::size_t last = quotes.size() - 1;
    out[0] = {quotes[0].maturity,
              (logp[1] - logp[0]) / (quotes[1].maturity - quotes[0].maturity)};
    for (std::size_t i = 1; i < last; ++i)
        out[i] = {quotes[i].maturity,
                  (logp[i + 1] - logp[i - 1]) /
                      (quotes[i + 1].maturity - quotes[i - 1].maturity)};
    out[last] = {quotes[last].maturity,
                 (logp[last] - logp[last - 1]) /
                     (quotes[last].maturity - quotes[last - 1].maturity)};
    if (convention == ForwardConvention::discount)
        for (auto& [maturity, rate] : out) rate = -rate;
    return out;
}

struct GammaEstimate {
    double t = 0.0;
    double maturity = 0.0;
    double gamma = 0.0;
    double std_error = 0.0;  // delta-method propagation through the reciprocal
    std::size_t n_samples = 0;
};

// Reciprocal of the lenders' expected demanded share of state income over
// [t, T]: the smaller the demanded share, the larger the trust measure.
inline GammaEstimate demand_measure(const Distribution& beliefs, double t,
                                    double maturity, int n_samples,
                                    std::uint64_t seed) {
    if (n_samples < 1) throw ValidationError("demand_measure: n_samples must be >= 1");
    auto gen = rng::stream_for(seed, 0);
    std::vector<double> draws(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const double theta = beliefs.sample(gen);
        if (!(theta > 0.0))
            throw DomainError(fmt::format(
                "demand_measure: belief sample {} is not strictly positive", theta));
        draws[i] = theta;
    }
    const double mean = mean_of(draws);
    if (!(mean > 0.0)) throw DomainError("demand_measure: belief mean must be positive");
    std::vector<double> sq(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i)
        sq[i] = (draws[i] - mean) * (draws[i] - mean);
    const double var = n_samples > 1 ? neumaier_sum(sq) / (n_samples - 1.0) : 0.0;
    const double se_mean = std::sqrt(var / n_samples);
    return {t, maturity, 1.0 / mean, se_mean / (mean * mean),
            static_cast<std::size_t>(n_samples)};
}

// Log-derivative of the demand measure in t at fixed maturity, with the same
// stencil policy as implied_forward.
inline std::vector<double> demand_rate(std::span<const double> times,
                                       std::span<const double> gamma_values) {
    if (times.size() != gamma_values.size() || times.size() < 3)
        throw ValidationError("demand_rate: need >= 3 aligned (time, value) pairs");
    std::vector<double> logg(gamma_values.size());
    for (std::size_t i = 0; i < gamma_values.size(); ++i) {
        if (!(gamma_values[i] > 0.0))
            throw DomainError(fmt::format("demand_rate: non-positive value at t={}",
                                          times[i]));
        logg[i] = std::log(gamma_values[i]);
    }
    std::vector<double> out(times.size());
    const std::size_t last = times.size() - 1;
    out[0] = (logg[1] - logg[0]) / (times[1] - times[0]);
    for (std::size_t i = 1; i < last; ++i)
        out[i] = (logg[i + 1] - logg[i - 1]) / (times[i + 1] - times[i - 1]);
    out[last] = (logg[last] - logg[last - 1]) / (times[last] - times[last - 1]);
    return out;
}

}  // namespace prodcredit::sovereign
