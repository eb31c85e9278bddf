#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fmt/format.h>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "prodcredit/distribution.hpp"
#include "prodcredit/errors.hpp"
#include "prodcredit/quadrature.hpp"
#include "prodcredit/rng.hpp"
#include "prodcredit/stochastics.hpp"
#include "prodcredit/util.hpp"

namespace prodcredit::hjm {

using stochastics::McEstimate;

// Uniform grid on the triangle {0 <= t <= T <= t_max}: both axes share the
// step h = t_max / n. Index i runs over observation times, j over maturities.
struct TriangleGrid {
    double t_max = 1.0;
    int n = 64;

    double h() const { return t_max / n; }
    double time(int i) const { return t_max * i / n; }
    int n_points() const { return n + 1; }

    void validate() const {
        if (!(t_max > 0.0)) throw ValidationError("triangle grid: t_max must be > 0");
        if (n < 2) throw ValidationError("triangle grid: n must be >= 2");
    }
};

// Scalar field on the triangle; entries below the diagonal are unused and
// held at zero (coefficients vanish off the triangle).
class TriangularField {
public:
    TriangularField() = default;
    explicit TriangularField(const TriangleGrid& grid)
        : grid_(grid),
          values_(static_cast<std::size_t>(grid.n_points()) * grid.n_points(), 0.0) {}

    const TriangleGrid& grid() const { return grid_; }
    double& at(int i, int j) { return values_[static_cast<std::size_t>(i) * grid_.n_points() + j]; }
    double at(int i, int j) const {
        return values_[static_cast<std::size_t>(i) * grid_.n_points() + j];
    }
    std::span<const double> row(int i) const {
        return {values_.data() + static_cast<std::size_t>(i) * grid_.n_points(),
                static_cast<std::size_t>(grid_.n_points())};
    }

    double max_abs_on_triangle(int* arg_i = nullptr, int* arg_j = nullptr) const {
        double worst = 0.0;
        for (int i = 0; i < grid_.n_points(); ++i) {
            for (int j = i; j < grid_.n_points(); ++j) {
                const double v = std::abs(at(i, j));
                if (v > worst) {
                    worst = v;
                    if (arg_i) *arg_i = i;
                    if (arg_j) *arg_j = j;
                }
            }
        }
        return worst;
    }

private:
    TriangleGrid grid_;
    std::vector<double> values_;
};

using ForwardSurface = TriangularField;

// Marked-point jump part: delta(t, x, T) against a compound-Poisson random
// measure with intensity(t) and scalar marks from `law`.
struct JumpComponent {
    std::function<double(double t, double x, double maturity)> delta;
    std::function<double(double t)> intensity;
    Distribution law = Distribution::point_mass(0.0);

    void validate() const {
        if (!delta) throw ValidationError("jump component: delta not set");
        if (!intensity) throw ValidationError("jump component: intensity not set");
    }
};

struct HJMCoefficients {
    std::function<double(double t, double maturity)> alpha;
    std::vector<std::function<double(double t, double maturity)>> sigmas;
    std::optional<JumpComponent> jumps;

    void validate() const {
        if (!alpha) throw ValidationError("coefficients: alpha not set");
        for (const auto& s : sigmas)
            if (!s) throw ValidationError("coefficients: empty sigma factor");
        if (jumps) jumps->validate();
    }
};

inline HJMCoefficients zero_coefficients() {
    return {[](double, double) { return 0.0; }, {}, {}};
}

// Constant volatility sigma0 with the drift that satisfies the no-arbitrage
// condition in the diffusion-only case: alpha(t,T) = sigma0^2 (T - t).
inline HJMCoefficients ho_lee(double sigma0) {
    return {[sigma0](double t, double maturity) {
                return sigma0 * sigma0 * (maturity - t);
            },
            {[sigma0](double, double) { return sigma0; }},
            {}};
}

// Adds a constant shift to the drift field (used to exercise the violation
// path of the drift-condition check).
inline HJMCoefficients with_alpha_shift(HJMCoefficients base, double shift) {
    auto alpha = base.alpha;
    base.alpha = [alpha, shift](double t, double maturity) {
        return alpha(t, maturity) + shift;
    };
    return base;
}

// Ho-Lee diffusion plus jumps delta(t,x,T) = jump_scale * x with marks from
// a centred normal law. The drift carries the exact jump correction, so the
// no-arbitrage condition holds identically.
inline HJMCoefficients ho_lee_with_jumps(double sigma0, double jump_scale,
                                         double lambda, double mark_stddev) {
    JumpComponent jumps{
        [jump_scale](double, double x, double) { return jump_scale * x; },
        [lambda](double) { return lambda; },
        Distribution::normal(0.0, mark_stddev)};
    const double s2 = mark_stddev * mark_stddev;
    return {[sigma0, jump_scale, lambda, s2](double t, double maturity) {
                const double u = jump_scale * (maturity - t);
                return sigma0 * sigma0 * (maturity - t) +
                       lambda * jump_scale * u * s2 * std::exp(0.5 * u * u * s2);
            },
            {[sigma0](double, double) { return sigma0; }},
            jumps};
}

// e^d - 1 - d: the integrand of the jump term. Nonnegative for every real d;
// evaluated by series near zero so rounding never produces a negative value.
inline double jump_convexity(double d) {
    const double a = std::abs(d);
    if (a < 1e-4)
        return 0.5 * d * d * (1.0 + d / 3.0 + d * d / 12.0 + d * d * d / 60.0);
    return std::expm1(d) - d;
}

// ---------------------------------------------------------------------------
// Integral transforms: maturity integrals of the coefficient fields with a
// leading minus, A(t,t) = S(t,t) = D(t,x,t) = 0 on the diagonal.
// ---------------------------------------------------------------------------

struct IntegralTransforms {
    TriangleGrid grid;
    TriangularField drift_integral;                 // A(t,T)
    std::vector<TriangularField> vol_integrals;     // S(t,T) per factor
    std::optional<JumpComponent> jumps;

    // D(t_i, x, T_j): maturity integral of delta at mark x, on demand.
    double jump_integral_at(int i, double x, int j) const {
        if (!jumps) return 0.0;
        const double h = grid.h();
        double acc = 0.0;
        double prev = jumps->delta(grid.time(i), x, grid.time(i));
        for (int k = i + 1; k <= j; ++k) {
            const double cur = jumps->delta(grid.time(i), x, grid.time(k));
            acc += 0.5 * (prev + cur) * h;
            prev = cur;
        }
        return -acc;
    }
};

namespace detail {

inline void check_finite(double v, const char* what, double t, double maturity) {
    if (!std::isfinite(v))
        throw SimulationError(fmt::format("{} field non-finite at (t={}, T={})", what,
                                          t, maturity));
}

// Row-wise cumulative trapezoid of a coefficient along the maturity axis,
// negated. Exact for coefficients linear in maturity.
inline TriangularField negated_cumulative(
    const std::function<double(double, double)>& coeff, const TriangleGrid& grid,
    const char* what) {
    TriangularField out(grid);
    const double h = grid.h();
    for (int i = 0; i < grid.n_points(); ++i) {
        const double t = grid.time(i);
        double acc = 0.0;
        double prev = coeff(t, grid.time(i));
        check_finite(prev, what, t, grid.time(i));
        out.at(i, i) = 0.0;
        for (int j = i + 1; j < grid.n_points(); ++j) {
            const double cur = coeff(t, grid.time(j));
            check_finite(cur, what, t, grid.time(j));
            acc += 0.5 * (prev + cur) * h;
            out.at(i, j) = -acc;
            prev = cur;
        }
    }
    return out;
}

}  // namespace detail

inline IntegralTransforms transforms(const HJMCoefficients& coeffs,
                                     const TriangleGrid& grid) {
    grid.validate();
    coeffs.validate();
    IntegralTransforms out;
    out.grid = grid;
    out.drift_integral = detail::negated_cumulative(coeffs.alpha, grid, "drift");
    for (const auto& s : coeffs.sigmas)
        out.vol_integrals.push_back(detail::negated_cumulative(s, grid, "volatility"));
    out.jumps = coeffs.jumps;
    return out;
}

// Grid sums of |alpha|, |sigma|^2 and lambda E[delta^2] over the triangle:
// the coefficient integrability requirements, checked numerically. Throws
// when any accumulation is non-finite.
struct CoefficientIntegrals {
    double drift_abs = 0.0;
    double vol_squared = 0.0;
    double jump_squared = 0.0;
};

inline CoefficientIntegrals integrability_report(const HJMCoefficients& coeffs,
                                                 const TriangleGrid& grid,
                                                 int gl_nodes = 64) {
    grid.validate();
    coeffs.validate();
    CoefficientIntegrals out;
    const double cell = grid.h() * grid.h();
    for (int i = 0; i < grid.n_points(); ++i) {
        const double t = grid.time(i);
        for (int j = i; j < grid.n_points(); ++j) {
            const double u = grid.time(j);
            out.drift_abs += std::abs(coeffs.alpha(t, u)) * cell;
            for (const auto& s : coeffs.sigmas) {
                const double v = s(t, u);
                out.vol_squared += v * v * cell;
            }
            if (coeffs.jumps) {
                const auto& jc = *coeffs.jumps;
                double second_moment = 0.0;
                if (!jc.law.has_density()) {
                    const double d = jc.delta(t, jc.law.mean(), u);
                    second_moment = d * d;
                } else {
                    const auto [lo, hi] = jc.law.quadrature_support(10.0);
                    second_moment = integrate_gl(
                        [&](double x) {
                            const double d = jc.delta(t, x, u);
                            return d * d * jc.law.density(x);
                        },
                        lo, hi, gl_nodes);
                }
                out.jump_squared += jc.intensity(t) * second_moment * cell;
            }
        }
    }
    if (!std::isfinite(out.drift_abs) || !std::isfinite(out.vol_squared) ||
        !std::isfinite(out.jump_squared))
        throw IntegrabilityError(
            "coefficient integrability check failed: non-finite grid integral");
    return out;
}

// ---------------------------------------------------------------------------
// Drift-condition residual: A + |S|^2/2 + integral of (e^D - 1 - D) against
// the jump measure, evaluated pointwise on the triangle. A martingale
// measure requires the residual to vanish.
// ---------------------------------------------------------------------------

struct ResidualConfig {
    int gl_nodes = 64;           // Gauss-Legendre order (doubled for the bound)
    bool monte_carlo = false;    // sample the jump law instead of quadrature
    int mc_samples = 100000;
    std::uint64_t mc_seed = 1;
    double tail_width = 10.0;    // support truncation for unbounded laws
    double divergence_bound = 1e50;
};

struct DriftResidualReport {
    TriangleGrid grid;
    TriangularField residual;
    double max_abs = 0.0;
    int argmax_i = 0;
    int argmax_j = 0;
    // Error bound on the jump-term evaluation: quadrature refinement
    // difference, or three standard errors on the Monte Carlo route.
    double jump_term_bound = 0.0;
    // Running time-integral of the jump term (first martingale condition:
    // this accumulation must stay finite).
    double accumulated_jump_integral = 0.0;
};

namespace detail {

// Jump term lambda(t_i) * E_x[e^{D} - 1 - D] for every column of row i.
// D is accumulated along maturities once per mark value, so each row costs
// O(nodes * n) coefficient evaluations.
class JumpTermEvaluator {
public:
    JumpTermEvaluator(const JumpComponent& jumps, const TriangleGrid& grid,
                      const ResidualConfig& cfg)
        : jumps_(jumps), grid_(grid), cfg_(cfg) {}

    // Fills term[j] for j in [i, n]; returns the max error bound on the row.
    double fill_row(int i, std::vector<double>& term) {
        const double lambda = jumps_.intensity(grid_.time(i));
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw ValidationError(fmt::format(
                "jump intensity invalid ({}) at t={}", lambda, grid_.time(i)));
        std::fill(term.begin(), term.end(), 0.0);
        if (lambda == 0.0) return 0.0;
        if (cfg_.monte_carlo) return fill_row_mc(i, lambda, term);
        if (!jumps_.law.has_density()) {
            // Point mass: the integral collapses to one mark.
            fill_row_single(i, lambda, jumps_.law.mean(), term);
            return 0.0;
        }
        std::vector<double> coarse(term.size(), 0.0);
        fill_row_gl(i, lambda, cfg_.gl_nodes, coarse);
        fill_row_gl(i, lambda, 2 * cfg_.gl_nodes, term);
        double bound = 0.0;
        for (int j = i; j < grid_.n_points(); ++j)
            bound = std::max(bound, std::abs(term[j] - coarse[j]));
        return bound;
    }

private:
    void check_term(double v, int i, int j) const {
        if (!std::isfinite(v) || v > cfg_.divergence_bound)
            throw IntegrabilityError(fmt::format(
                "jump integral diverges near (t={}, T={}): integrability "
                "condition fails",
                grid_.time(i), grid_.time(j)));
    }

    // Accumulates w * convexity(D(t_i, x, T_j)) into term[j] for all j. The
    // integrand is nonnegative for every real argument; each node is checked.
    void accumulate_mark(int i, double x, double w, std::vector<double>& term) const {
        const double h = grid_.h();
        const double t = grid_.time(i);
        double acc = 0.0;
        double prev = jumps_.delta(t, x, t);
        for (int j = i + 1; j < grid_.n_points(); ++j) {
            const double cur = jumps_.delta(t, x, grid_.time(j));
            if (!std::isfinite(cur))
                throw SimulationError(fmt::format(
                    "jump field non-finite at (t={}, x={}, T={})", t, x, grid_.time(j)));
            acc += 0.5 * (prev + cur) * h;
            prev = cur;
            const double convexity = jump_convexity(-acc);
            if (convexity < 0.0)
                throw SimulationError(fmt::format(
                    "jump integrand negative at (t={}, x={}, T={})", t, x,
                    grid_.time(j)));
            term[j] += w * convexity;
        }
    }

    void fill_row_single(int i, double lambda, double x, std::vector<double>& term) {
        accumulate_mark(i, x, lambda, term);
        for (int j = i; j < grid_.n_points(); ++j) check_term(term[j], i, j);
    }

    void fill_row_gl(int i, double lambda, int nodes, std::vector<double>& term) {
        std::fill(term.begin(), term.end(), 0.0);
        const auto [lo, hi] = jumps_.law.quadrature_support(cfg_.tail_width);
        const auto& rule = gauss_legendre(nodes);
        const double half = 0.5 * (hi - lo);
        const double mid = 0.5 * (lo + hi);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double x = mid + half * rule.nodes[q];
            const double w = lambda * rule.weights[q] * half * jumps_.law.density(x);
            if (w != 0.0) accumulate_mark(i, x, w, term);
        }
        for (int j = i; j < grid_.n_points(); ++j) check_term(term[j], i, j);
    }

    // Monte Carlo oracle route: sample marks, average the convexity, report
    // three standard errors as the bound.
    double fill_row_mc(int i, double lambda, std::vector<double>& term) {
        auto gen = rng::stream_for(cfg_.mc_seed, static_cast<std::uint64_t>(i));
        std::vector<double> sum(term.size(), 0.0), sumsq(term.size(), 0.0);
        std::vector<double> one(term.size(), 0.0);
        for (int s = 0; s < cfg_.mc_samples; ++s) {
            std::fill(one.begin(), one.end(), 0.0);
            accumulate_mark(i, jumps_.law.sample(gen), 1.0, one);
            for (int j = i; j < grid_.n_points(); ++j) {
                sum[j] += one[j];
                sumsq[j] += one[j] * one[j];
            }
        }
        double bound = 0.0;
        const double n = cfg_.mc_samples;
        for (int j = i; j < grid_.n_points(); ++j) {
            const double mean = sum[j] / n;
            term[j] = lambda * mean;
            check_term(term[j], i, j);
            if (cfg_.mc_samples > 1) {
                const double var = std::max(0.0, (sumsq[j] - n * mean * mean) / (n - 1.0));
                bound = std::max(bound, 3.0 * lambda * std::sqrt(var / n));
            }
        }
        return bound;
    }

    const JumpComponent& jumps_;
    TriangleGrid grid_;
    ResidualConfig cfg_;
};

}  // namespace detail

inline DriftResidualReport drift_residual(const HJMCoefficients& coeffs,
                                          const TriangleGrid& grid,
                                          const ResidualConfig& cfg = {}) {
    auto tf = transforms(coeffs, grid);
    DriftResidualReport report;
    report.grid = grid;
    report.residual = TriangularField(grid);

    std::optional<detail::JumpTermEvaluator> jump_eval;
    if (coeffs.jumps) jump_eval.emplace(*coeffs.jumps, grid, cfg);
    std::vector<double> jump_term(grid.n_points(), 0.0);

    const double h = grid.h();
    for (int i = 0; i < grid.n_points(); ++i) {
        if (jump_eval)
            report.jump_term_bound =
                std::max(report.jump_term_bound, jump_eval->fill_row(i, jump_term));
        for (int j = i; j < grid.n_points(); ++j) {
            double half_s2 = 0.0;
            for (const auto& s : tf.vol_integrals) {
                const double v = s.at(i, j);
                half_s2 += 0.5 * v * v;
            }
            const double r = tf.drift_integral.at(i, j) + half_s2 + jump_term[j];
            report.residual.at(i, j) = r;
            // First martingale condition: the time-accumulated jump term
            // must stay finite.
            report.accumulated_jump_integral += jump_term[j] * h;
        }
    }
    if (!std::isfinite(report.accumulated_jump_integral))
        throw IntegrabilityError("accumulated jump integral is non-finite");
    report.max_abs =
        report.residual.max_abs_on_triangle(&report.argmax_i, &report.argmax_j);
    return report;
}

// ---------------------------------------------------------------------------
// Surface evolution: explicit Euler over calendar time. All maturity columns
// of one path share each step's Brownian increments and jump marks; columns
// stop evolving once their maturity is reached.
// ---------------------------------------------------------------------------

namespace detail {

struct EvolveTables {
    std::vector<double> alpha;       // [k * width + j]
    std::vector<std::vector<double>> sigma;
    std::vector<double> mean_delta;  // E_x[delta(t_k, x, T_j)]
    int width = 0;
};

inline EvolveTables build_tables(const HJMCoefficients& coeffs,
                                 const TriangleGrid& grid, int gl_nodes) {
    EvolveTables tables;
    const int w = grid.n_points();
    tables.width = w;
    tables.alpha.assign(static_cast<std::size_t>(w) * w, 0.0);
    tables.sigma.assign(coeffs.sigmas.size(),
                        std::vector<double>(static_cast<std::size_t>(w) * w, 0.0));
    if (coeffs.jumps) tables.mean_delta.assign(static_cast<std::size_t>(w) * w, 0.0);
    for (int k = 0; k < grid.n; ++k) {
        const double t = grid.time(k);
        for (int j = k; j < w; ++j) {
            const double maturity = grid.time(j);
            const double a = coeffs.alpha(t, maturity);
            check_finite(a, "drift", t, maturity);
            tables.alpha[static_cast<std::size_t>(k) * w + j] = a;
            for (std::size_t f = 0; f < coeffs.sigmas.size(); ++f) {
                const double s = coeffs.sigmas[f](t, maturity);
                check_finite(s, "volatility", t, maturity);
                tables.sigma[f][static_cast<std::size_t>(k) * w + j] = s;
            }
            if (coeffs.jumps) {
                const auto& jc = *coeffs.jumps;
                double mean_delta = 0.0;
                if (!jc.law.has_density()) {
                    mean_delta = jc.delta(t, jc.law.mean(), maturity);
                } else {
                    const auto [lo, hi] = jc.law.quadrature_support(10.0);
                    mean_delta = integrate_gl(
                        [&](double x) { return jc.delta(t, x, maturity) * jc.law.density(x); },
                        lo, hi, gl_nodes);
                }
                check_finite(mean_delta, "jump mean", t, maturity);
                tables.mean_delta[static_cast<std::size_t>(k) * w + j] = mean_delta;
            }
        }
    }
    return tables;
}

}  // namespace detail

// Runs n_paths evolutions of the forward surface from the initial maturity
// slice. The observer is called per path as observer(path, step, row) with
// the current maturity slice (step 0 delivers the initial curve); rows for
// maturities already passed hold their last value. Paths are independent
// given their index, so the observer sees identical data at any thread
// count.
template <typename Observer>
void evolve_paths(const HJMCoefficients& coeffs, std::span<const double> initial,
                  const TriangleGrid& grid, int n_paths, std::uint64_t seed,
                  Observer&& observer, int n_threads = 1, int gl_nodes = 64) {
    grid.validate();
    coeffs.validate();
    if (static_cast<int>(initial.size()) != grid.n_points())
        throw ValidationError(fmt::format(
            "initial curve has {} nodes, grid expects {}", initial.size(),
            grid.n_points()));
    for (double v : initial)
        if (!std::isfinite(v)) throw ValidationError("initial curve must be finite");
    if (n_paths < 1) throw ValidationError("evolve: n_paths must be >= 1");

    const auto tables = detail::build_tables(coeffs, grid, gl_nodes);
    const int w = grid.n_points();
    const double h = grid.h();
    const double sqrt_h = std::sqrt(h);
    const std::size_t n_factors = coeffs.sigmas.size();

    parallel_for_blocks(static_cast<std::size_t>(n_paths), n_threads, [&](std::size_t lo,
                                                                          std::size_t hi) {
        std::vector<double> row(w);
        std::vector<double> normals(n_factors);
        std::vector<double> marks;
        for (std::size_t p = lo; p < hi; ++p) {
            auto gen = rng::stream_for(seed, p);
            std::copy(initial.begin(), initial.end(), row.begin());
            observer(static_cast<int>(p), 0, std::span<const double>(row));
            for (int k = 0; k < grid.n; ++k) {
                const double t = grid.time(k);
                for (std::size_t f = 0; f < n_factors; ++f)
                    normals[f] = gen.next_normal();
                double lambda = 0.0;
                std::uint64_t n_jumps = 0;
                if (coeffs.jumps) {
                    lambda = coeffs.jumps->intensity(t);
                    n_jumps = gen.next_poisson(lambda * h);
                }
                // Jump marks are shared across maturities within the step.
                marks.clear();
                for (std::uint64_t m = 0; m < n_jumps; ++m)
                    marks.push_back(coeffs.jumps->law.sample(gen));

                const std::size_t base = static_cast<std::size_t>(k) * w;
                for (int j = k + 1; j < w; ++j) {
                    double df = tables.alpha[base + j] * h;
                    for (std::size_t f = 0; f < n_factors; ++f)
                        df += tables.sigma[f][base + j] * sqrt_h * normals[f];
                    if (coeffs.jumps) {
                        for (double x : marks)
                            df += coeffs.jumps->delta(t, x, grid.time(j));
                        df -= lambda * tables.mean_delta[base + j] * h;
                    }
                    row[j] += df;
                    if (!std::isfinite(row[j]))
                        throw SimulationError(fmt::format(
                            "forward rate non-finite at (t={}, T={})", grid.time(k + 1),
                            grid.time(j)));
                }
                observer(static_cast<int>(p), k + 1, std::span<const double>(row));
            }
        }
    });
}

// Full realizations, for modest path counts.
inline std::vector<ForwardSurface> evolve_surface(const HJMCoefficients& coeffs,
                                                  std::span<const double> initial,
                                                  const TriangleGrid& grid, int n_paths,
                                                  std::uint64_t seed, int n_threads = 1) {
    std::vector<ForwardSurface> out(n_paths, ForwardSurface(grid));
    evolve_paths(
        coeffs, initial, grid, n_paths, seed,
        [&](int p, int k, std::span<const double> row) {
            for (int j = k; j < grid.n_points(); ++j) out[p].at(k, j) = row[j];
        },
        n_threads);
    return out;
}

namespace detail {

inline McEstimate reduce_mean(std::span<const double> values) {
    const double mean = mean_of(values);
    if (values.size() < 2) return {mean, 0.0, values.size()};
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mean;
        sq[i] = d * d;
    }
    const double var = neumaier_sum(sq) / (values.size() - 1.0);
    return {mean, std::sqrt(var / values.size()), values.size()};
}

}  // namespace detail

// Monte Carlo statistics of the discounted model bond price along simulated
// paths. Under a drift condition that holds, the discounted price is a
// martingale: its mean at every checkpoint equals the time-0 price.
struct BondMartingaleStats {
    double reference_price = 0.0;  // model price of the checked bond at t = 0
    std::vector<double> checkpoint_times;
    std::vector<McEstimate> discounted_price;
};

inline BondMartingaleStats discounted_bond_stats(
    const HJMCoefficients& coeffs, std::span<const double> initial,
    const TriangleGrid& grid, int maturity_idx, std::span<const int> checkpoints,
    int n_paths, std::uint64_t seed, int n_threads = 1) {
    if (maturity_idx <= 0 || maturity_idx > grid.n)
        throw ValidationError("discounted_bond_stats: maturity index outside grid");
    for (int c : checkpoints)
        if (c < 0 || c > maturity_idx)
            throw ValidationError(
                "discounted_bond_stats: checkpoints must precede the bond maturity");

    const double h = grid.h();
    const auto price_from_row = [&](std::span<const double> row, int k) {
        // exp(-trapezoid of f(t_k, .) over [t_k, T_b]).
        double acc = 0.0;
        for (int j = k; j < maturity_idx; ++j)
            acc += 0.5 * (row[j] + row[j + 1]) * h;
        return std::exp(-acc);
    };
    BondMartingaleStats stats;
    std::vector<double> init(initial.begin(), initial.end());
    stats.reference_price = price_from_row(init, 0);
    for (int c : checkpoints) stats.checkpoint_times.push_back(grid.time(c));

    // value[c][p]: per-path discounted prices, reduced in path order.
    std::vector<std::vector<double>> values(
        checkpoints.size(), std::vector<double>(n_paths, 0.0));
    std::vector<double> discount(n_paths, 0.0);  // integrated short rate, reused per path

    evolve_paths(
        coeffs, initial, grid, n_paths, seed,
        [&](int p, int k, std::span<const double> row) {
            if (k == 0) discount[p] = 0.0;
            for (std::size_t c = 0; c < checkpoints.size(); ++c)
                if (checkpoints[c] == k)
                    values[c][p] = std::exp(-discount[p]) * price_from_row(row, k);
            // Left-endpoint short-rate integral r(t_k) h, accumulated after
            // the checkpoint snapshot at t_k.
            discount[p] += row[k] * h;
        },
        n_threads);

    for (auto& v : values) stats.discounted_price.push_back(detail::reduce_mean(v));
    return stats;
}

// Monte Carlo mean of f(t, T_probe) across time, for plot-ready output and
// drift verification.
struct ForwardMeanStats {
    std::vector<double> times;
    std::vector<McEstimate> forward_rate;
};

inline ForwardMeanStats forward_mean_stats(const HJMCoefficients& coeffs,
                                           std::span<const double> initial,
                                           const TriangleGrid& grid, int probe_idx,
                                           int n_paths, std::uint64_t seed,
                                           int n_threads = 1) {
    if (probe_idx < 0 || probe_idx > grid.n)
        throw ValidationError("forward_mean_stats: probe index outside grid");
    std::vector<std::vector<double>> values(
        probe_idx + 1, std::vector<double>(n_paths, 0.0));
    evolve_paths(
        coeffs, initial, grid, n_paths, seed,
        [&](int p, int k, std::span<const double> row) {
            if (k <= probe_idx) values[k][p] = row[probe_idx];
        },
        n_threads);
    ForwardMeanStats stats;
    for (int k = 0; k <= probe_idx; ++k) {
        stats.times.push_back(grid.time(k));
        stats.forward_rate.push_back(detail::reduce_mean(values[k]));
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Growth-model coupling: evolve a drift field and solve the drift condition
// for the implied squared diffusion.
// ---------------------------------------------------------------------------

using GrowthIncrement =
    std::function<double(double t, double maturity, double alpha_value)>;

// One explicit Euler step of d alpha = g(t, T, alpha) dt applied to a
// maturity slice.
inline std::vector<double> growth_model_step(const GrowthIncrement& g,
                                             std::span<const double> alpha_slice,
                                             const TriangleGrid& grid, double t,
                                             double h) {
    if (!g) throw ValidationError("growth_model_step: increment function not set");
    std::vector<double> out(alpha_slice.begin(), alpha_slice.end());
    for (int j = 0; j < static_cast<int>(out.size()); ++j) {
        const double inc = g(t, grid.time(j), out[j]);
        if (!std::isfinite(inc))
            throw SimulationError(fmt::format(
                "growth increment non-finite at (t={}, T={})", t, grid.time(j)));
        out[j] += inc * h;
    }
    return out;
}

// Builds the full drift field by stepping the initial maturity slice across
// the grid; row i holds the slice at t_i (maturities j >= i).
inline TriangularField evolve_growth_drift(const GrowthIncrement& g,
                                           std::span<const double> initial_slice,
                                           const TriangleGrid& grid) {
    grid.validate();
    if (static_cast<int>(initial_slice.size()) != grid.n_points())
        throw ValidationError("evolve_growth_drift: slice length must match grid");
    TriangularField field(grid);
    std::vector<double> slice(initial_slice.begin(), initial_slice.end());
    for (int i = 0; i < grid.n_points(); ++i) {
        for (int j = i; j < grid.n_points(); ++j) field.at(i, j) = slice[j];
        if (i < grid.n)
            slice = growth_model_step(g, slice, grid, grid.time(i), grid.h());
    }
    return field;
}

// Solves the drift condition for the squared diffusion: half |S(t,T)|^2 =
// -(maturity integral of alpha) - jump term. Fails when the supplied drift
// implies a negative squared volatility anywhere on the triangle.
inline TriangularField implied_diffusion_from_growth(
    const TriangularField& alpha_field, const JumpComponent* jumps = nullptr,
    const ResidualConfig& cfg = {}) {
    const TriangleGrid grid = alpha_field.grid();
    grid.validate();
    TriangularField out(grid);
    std::optional<detail::JumpTermEvaluator> jump_eval;
    if (jumps) jump_eval.emplace(*jumps, grid, cfg);
    std::vector<double> jump_term(grid.n_points(), 0.0);

    const double h = grid.h();
    int violations = 0;
    double worst = 0.0;
    int worst_i = 0, worst_j = 0;
    double first_t = 0.0, first_T = 0.0;
    for (int i = 0; i < grid.n_points(); ++i) {
        if (jump_eval) jump_eval->fill_row(i, jump_term);
        double acc = 0.0;
        for (int j = i; j < grid.n_points(); ++j) {
            if (j > i)
                acc += 0.5 * (alpha_field.at(i, j - 1) + alpha_field.at(i, j)) * h;
            const double value = -acc - jump_term[j];
            out.at(i, j) = value;
            if (value < -1e-12) {
                if (violations == 0) {
                    first_t = grid.time(i);
                    first_T = grid.time(j);
                }
                ++violations;
                if (value < worst) {
                    worst = value;
                    worst_i = i;
                    worst_j = j;
                }
            }
        }
    }
    if (violations > 0)
        throw InfeasibilityError(fmt::format(
            "implied squared diffusion is negative at {} grid points (first at "
            "t={}, T={}; worst {} at t={}, T={}): drift incompatible with the "
            "no-arbitrage condition",
            violations, first_t, first_T, worst, grid.time(worst_i),
            grid.time(worst_j)));
    return out;
}

}  // namespace prodcredit::hjm
