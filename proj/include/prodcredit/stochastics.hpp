#pragma once

#include <cmath>
#include <cstdint>
#include <fmt/format.h>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "prodcredit/distribution.hpp"
#include "prodcredit/errors.hpp"
#include "prodcredit/rng.hpp"
#include "prodcredit/util.hpp"

namespace prodcredit::stochastics {

// Equally spaced grid on [t_start, t_end] with n_steps intervals.
struct TimeGrid {
    double t_start = 0.0;
    double t_end = 1.0;
    int n_steps = 1;

    double step() const { return (t_end - t_start) / n_steps; }
    double time(int k) const { return t_start + k * step(); }
    int n_points() const { return n_steps + 1; }

    void validate() const {
        if (!(t_end > t_start))
            throw ValidationError("time grid: t_end must exceed t_start");
        if (n_steps < 1)
            throw ValidationError("time grid: n_steps must be >= 1");
    }
};

using Coefficient = std::function<double(double t, double x)>;

// State-dependent drift and per-factor volatilities of a diffusion.
struct DiffusionSpec {
    double x0 = 0.0;
    Coefficient drift;
    std::vector<Coefficient> volatilities;

    int n_factors() const { return static_cast<int>(volatilities.size()); }

    void validate() const {
        if (!drift) throw ValidationError("diffusion spec: drift not set");
        for (const auto& v : volatilities)
            if (!v) throw ValidationError("diffusion spec: empty volatility coefficient");
    }
};

inline DiffusionSpec constant_process(double x0) {
    return {x0, [](double, double) { return 0.0; }, {}};
}

// Deterministic x0 + rate * t.
inline DiffusionSpec linear_process(double x0, double rate) {
    return {x0, [rate](double, double) { return rate; }, {}};
}

// dX = drift * X dt + volatility * X dW.
inline DiffusionSpec gbm_process(double x0, double drift, double volatility) {
    return {x0,
            [drift](double, double x) { return drift * x; },
            {[volatility](double, double x) { return volatility * x; }}};
}

// Compound-Poisson jump overlay: additive jumps with intensity lambda(t) and
// i.i.d. sizes from jump_law. When compensated, the drift lambda * E[size]
// is subtracted each step so the jump part is a martingale.
struct JumpSpec {
    std::function<double(double t)> intensity;
    Distribution jump_law = Distribution::point_mass(0.0);
    bool compensated = false;

    static JumpSpec constant_intensity(double lambda, Distribution law,
                                       bool compensated = false) {
        if (!(lambda >= 0.0))
            throw ValidationError("jump spec: intensity must be >= 0");
        return {[lambda](double) { return lambda; }, std::move(law), compensated};
    }

    void validate() const {
        if (!intensity) throw ValidationError("jump spec: intensity not set");
        if (!std::isfinite(jump_law.mean()))
            throw ValidationError("jump spec: jump law mean must be finite");
    }
};

// One realized trajectory on a grid. Linear interpolation between nodes.
struct SamplePath {
    TimeGrid grid;
    std::vector<double> values;

    double at_time(double t) const {
        const double h = grid.step();
        const double rel = (t - grid.t_start) / h;
        if (rel < -1e-9 || rel > grid.n_steps + 1e-9)
            throw ValidationError(fmt::format(
                "sample path: time {} outside covered range [{}, {}]", t,
                grid.t_start, grid.t_end));
        int k = static_cast<int>(std::floor(rel));
        if (k < 0) k = 0;
        if (k >= grid.n_steps) k = grid.n_steps - 1;
        const double w = rel - k;
        return values[k] * (1.0 - w) + values[k + 1] * w;
    }
};

// n_paths discretized realizations, row per path. Regenerating with the same
// (spec, grid, n_paths, seed) is bit-identical, and path i depends only on
// (seed, i): prefix-stable in n_paths.
struct PathBundle {
    TimeGrid grid;
    int n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> values;  // n_paths x (n_steps + 1), path-major

    std::span<const double> path(int i) const {
        const std::size_t w = grid.n_points();
        return {values.data() + static_cast<std::size_t>(i) * w, w};
    }
    double at(int path_idx, int step) const {
        return values[static_cast<std::size_t>(path_idx) * grid.n_points() + step];
    }
    SamplePath extract(int i) const {
        auto p = path(i);
        return {grid, std::vector<double>(p.begin(), p.end())};
    }
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0;
};

namespace detail {

inline double checked_coefficient(const Coefficient& c, double t, double x,
                                  const char* what) {
    const double v = c(t, x);
    if (!std::isfinite(v))
        throw SimulationError(fmt::format(
            "{} coefficient evaluated non-finite at (t={}, x={})", what, t, x));
    return v;
}

inline void simulate_one_path(const DiffusionSpec& spec, const JumpSpec* jumps,
                              const TimeGrid& grid, rng::SplitMix64 gen,
                              double* row) {
    const double h = grid.step();
    const double sqrt_h = std::sqrt(h);
    const double jump_mean = jumps ? jumps->jump_law.mean() : 0.0;
    double x = spec.x0;
    row[0] = x;
    for (int k = 0; k < grid.n_steps; ++k) {
        const double t = grid.time(k);
        double dx = checked_coefficient(spec.drift, t, x, "drift") * h;
        for (const auto& vol : spec.volatilities) {
            dx += checked_coefficient(vol, t, x, "volatility") * sqrt_h *
                  gen.next_normal();
        }
        if (jumps) {
            const double lambda = jumps->intensity(t);
            if (!(lambda >= 0.0) || !std::isfinite(lambda))
                throw SimulationError(fmt::format(
                    "jump intensity evaluated invalid ({}) at t={}", lambda, t));
            const std::uint64_t n_jumps = gen.next_poisson(lambda * h);
            for (std::uint64_t j = 0; j < n_jumps; ++j)
                dx += jumps->jump_law.sample(gen);
            if (jumps->compensated) dx -= lambda * jump_mean * h;
        }
        x += dx;
        if (!std::isfinite(x))
            throw SimulationError(fmt::format(
                "path value became non-finite after step at t={}", grid.time(k + 1)));
        row[k + 1] = x;
    }
}

inline PathBundle simulate_impl(const DiffusionSpec& spec, const JumpSpec* jumps,
                                const TimeGrid& grid, int n_paths,
                                std::uint64_t seed, int n_threads) {
    grid.validate();
    spec.validate();
    if (jumps) jumps->validate();
    if (n_paths < 1) throw ValidationError("simulate: n_paths must be >= 1");

    PathBundle bundle{grid, n_paths, seed, {}};
    bundle.values.resize(static_cast<std::size_t>(n_paths) * grid.n_points());
    parallel_for_blocks(static_cast<std::size_t>(n_paths), n_threads,
                        [&](std::size_t lo, std::size_t hi) {
                            for (std::size_t p = lo; p < hi; ++p) {
                                simulate_one_path(
                                    spec, jumps, grid, rng::stream_for(seed, p),
                                    bundle.values.data() + p * grid.n_points());
                            }
                        });
    return bundle;
}

}  // namespace detail

// Euler-Maruyama paths of the diffusion.
inline PathBundle simulate_diffusion(const DiffusionSpec& spec, const TimeGrid& grid,
                                     int n_paths, std::uint64_t seed,
                                     int n_threads = 1) {
    return detail::simulate_impl(spec, nullptr, grid, n_paths, seed, n_threads);
}

// Euler-Maruyama paths augmented with compound-Poisson jumps, one jump draw
// block per step. A zero-intensity jump spec consumes no extra randomness,
// so the output coincides with simulate_diffusion under the same seed.
inline PathBundle simulate_jump_diffusion(const DiffusionSpec& spec,
                                          const JumpSpec& jumps, const TimeGrid& grid,
                                          int n_paths, std::uint64_t seed,
                                          int n_threads = 1) {
    return detail::simulate_impl(spec, &jumps, grid, n_paths, seed, n_threads);
}

// Integrates each path's values in time (running trapezoid), turning a rate
// process into its cumulative process. The result starts at 0.
inline PathBundle integrate_paths(const PathBundle& rates) {
    PathBundle out = rates;
    const int w = rates.grid.n_points();
    const double h = rates.grid.step();
    for (int p = 0; p < rates.n_paths; ++p) {
        const double* src = rates.values.data() + static_cast<std::size_t>(p) * w;
        double* dst = out.values.data() + static_cast<std::size_t>(p) * w;
        double acc = 0.0;
        dst[0] = 0.0;
        for (int k = 1; k < w; ++k) {
            acc += 0.5 * (src[k - 1] + src[k]) * h;
            dst[k] = acc;
        }
    }
    return out;
}

using PathFunctional = std::function<double(std::span<const double>)>;

// Sample mean and standard error of a path functional. Per-path values are
// reduced in path order with compensated summation, so the result does not
// depend on how generation was parallelized.
inline McEstimate estimate(const PathBundle& bundle, const PathFunctional& functional) {
    if (bundle.n_paths < 1) throw ValidationError("estimate: empty bundle");
    std::vector<double> per_path(bundle.n_paths);
    for (int i = 0; i < bundle.n_paths; ++i) {
        const double v = functional(bundle.path(i));
        if (!std::isfinite(v))
            throw SimulationError(
                fmt::format("estimate: functional non-finite on path {}", i));
        per_path[i] = v;
    }
    const double mean = mean_of(per_path);
    if (bundle.n_paths == 1) return {mean, 0.0, 1};
    std::vector<double> sq(bundle.n_paths);
    for (int i = 0; i < bundle.n_paths; ++i) {
        const double d = per_path[i] - mean;
        sq[i] = d * d;
    }
    const double var = neumaier_sum(sq) / (bundle.n_paths - 1.0);
    return {mean, std::sqrt(var / bundle.n_paths),
            static_cast<std::size_t>(bundle.n_paths)};
}

inline McEstimate estimate_terminal(const PathBundle& bundle) {
    return estimate(bundle, [](std::span<const double> p) { return p.back(); });
}

}  // namespace prodcredit::stochastics
