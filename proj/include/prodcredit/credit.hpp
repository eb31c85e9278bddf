#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fmt/format.h>
#include <optional>
#include <string>
#include <vector>

#include "prodcredit/errors.hpp"
#include "prodcredit/stochastics.hpp"

namespace prodcredit::credit {

using stochastics::DiffusionSpec;
using stochastics::JumpSpec;
using stochastics::PathBundle;
using stochastics::SamplePath;
using stochastics::TimeGrid;

enum class LoanKind { material, service, private_income };

// Contract parameters fixed when the loan is agreed. The interest fraction
// is tied to the repayment fraction by interest_ratio (< 1): interest shares
// stay well below repayment shares by construction.
struct LoanTerms {
    double principal = 0.0;        // C, currency
    double horizon = 0.0;          // T, years
    int n_repayments = 1;          // n
    double interest_period = 0.0;  // I, years; interest accrues over [T, T+I]
    int n_interest_payments = 0;
    double interest_ratio = 0.1;   // kappa in (0,1)
    LoanKind kind = LoanKind::material;

    void validate() const {
        if (!(principal > 0.0)) throw ValidationError("loan terms: principal must be > 0");
        if (!(horizon > 0.0)) throw ValidationError("loan terms: horizon must be > 0");
        if (n_repayments < 1) throw ValidationError("loan terms: n_repayments must be >= 1");
        if (interest_period < 0.0)
            throw ValidationError("loan terms: interest_period must be >= 0");
        if (interest_period > 0.0 && n_interest_payments < 1)
            throw ValidationError(
                "loan terms: n_interest_payments required when interest_period > 0");
        if (!(interest_ratio > 0.0 && interest_ratio < 1.0))
            throw ValidationError("loan terms: interest_ratio must lie in (0,1)");
    }

    bool has_interest() const { return interest_period > 0.0 && n_interest_payments > 0; }
};

// Process definition with optional jumps; integrate_rate turns the simulated
// process into its running time integral (for cumulative output modelled via
// a positive production rate).
struct ProcessSpec {
    DiffusionSpec diffusion;
    std::optional<JumpSpec> jumps;
    bool integrate_rate = false;

    PathBundle simulate(const TimeGrid& grid, int n_paths, std::uint64_t seed,
                        int n_threads = 1) const {
        PathBundle bundle =
            jumps ? stochastics::simulate_jump_diffusion(diffusion, *jumps, grid,
                                                         n_paths, seed, n_threads)
                  : stochastics::simulate_diffusion(diffusion, grid, n_paths, seed,
                                                    n_threads);
        return integrate_rate ? stochastics::integrate_paths(bundle) : bundle;
    }
};

// Cumulative output process and the price of one output unit (price over
// numeraire). The reciprocal enters the planned repayment shares.
struct EnterpriseModel {
    ProcessSpec productivity;
    ProcessSpec price_ratio;
};

struct SamplingConfig {
    int n_paths = 10000;
    int n_steps = 256;  // per simulated horizon
    std::uint64_t seed = 0;
    int n_threads = 1;
};

// Stream tags separating the independent Monte Carlo uses.
inline constexpr std::uint64_t kSeedTagProductivity = 0x70726f64;
inline constexpr std::uint64_t kSeedTagPriceRatio = 0x70726963;

// Schedules fixed at time 0 and immutable afterwards. Repayment instants are
// m/n * T; interest instants are spread over [T, T+I]. Interest shares are
// interest_ratio times the index-matched repayment share (the last repayment
// share once the interest index exceeds n).
struct RepaymentPlan {
    LoanKind kind = LoanKind::material;
    std::vector<double> repayment_instants;
    std::vector<double> repayment_shares;   // rpr, production share per instant
    std::vector<double> interest_instants;
    std::vector<double> interest_shares;    // rI
    double income_fraction = 0.0;           // private_income plans only
};

struct PlanResult {
    RepaymentPlan plan;
    std::vector<double> share_std_errors;  // per repayment instant
};

// Realized settlement amounts. total_repaid = market_value + interest_paid
// holds exactly; at most one of bank_loss / bank_gain is nonzero.
struct LoanOutcome {
    double production_total = 0.0;  // accrued output units
    double market_value = 0.0;      // A, currency
    double interest_paid = 0.0;     // J, currency
    double total_repaid = 0.0;      // E = A + J
    double bank_loss = 0.0;         // max(C - E, 0)
    double bank_gain = 0.0;         // max(E - C, 0)
};

inline std::vector<double> repayment_instants(const LoanTerms& terms) {
    std::vector<double> out(terms.n_repayments);
    for (int m = 1; m <= terms.n_repayments; ++m)
        out[m - 1] = terms.horizon * m / terms.n_repayments;
    return out;
}

inline std::vector<double> interest_instants(const LoanTerms& terms) {
    std::vector<double> out;
    if (!terms.has_interest()) return out;
    out.resize(terms.n_interest_payments);
    for (int m = 1; m <= terms.n_interest_payments; ++m)
        out[m - 1] =
            terms.horizon + terms.interest_period * m / terms.n_interest_payments;
    return out;
}

// Planned repayment shares: for each instant, the ratio of the expected
// funding need (C/n priced in output units) to the expected output increment
// of the period, both estimated at time 0 on the configured model. The ratio
// of expectations is taken literally, not the expectation of the ratio.
inline PlanResult compute_repayment_plan(const LoanTerms& terms,
                                         const EnterpriseModel& model,
                                         const SamplingConfig& cfg) {
    terms.validate();
    if (cfg.n_paths < 1) throw ValidationError("sampling config: n_paths must be >= 1");
    if (cfg.n_steps < terms.n_repayments ||
        cfg.n_steps % terms.n_repayments != 0)
        throw ValidationError(fmt::format(
            "sampling config: n_steps ({}) must be a positive multiple of "
            "n_repayments ({})",
            cfg.n_steps, terms.n_repayments));

    const TimeGrid grid{0.0, terms.horizon, cfg.n_steps};
    const PathBundle output = model.productivity.simulate(
        grid, cfg.n_paths, rng::derive_seed(cfg.seed, kSeedTagProductivity),
        cfg.n_threads);
    const PathBundle price = model.price_ratio.simulate(
        grid, cfg.n_paths, rng::derive_seed(cfg.seed, kSeedTagPriceRatio),
        cfg.n_threads);

    const int n = terms.n_repayments;
    const int stride = cfg.n_steps / n;
    const double funding_per_step = terms.principal / n;

    PlanResult result;
    result.plan.kind = terms.kind;
    result.plan.repayment_instants = repayment_instants(terms);

    for (int m = 1; m <= n; ++m) {
        const int idx = m * stride;
        const int prev = (m - 1) * stride;
        auto increment = stochastics::estimate(
            output, [&](std::span<const double> p) { return p[idx] - p[prev]; });
        auto priced_need = stochastics::estimate(price, [&](std::span<const double> p) {
            const double ratio = p[idx];
            if (!(ratio > 0.0))
                throw DomainError(fmt::format(
                    "repayment plan: price ratio path non-positive ({}) at t={}", ratio,
                    grid.time(idx)));
            return funding_per_step / ratio;
        });
        if (!(increment.mean > 0.0))
            throw DomainError(fmt::format(
                "repayment plan: expected output increment is not positive at "
                "instant {} (t={})",
                m, result.plan.repayment_instants[m - 1]));
        const double share = priced_need.mean / increment.mean;
        // Delta method on the ratio of two independent sample means.
        const double rel_a = priced_need.std_error / priced_need.mean;
        const double rel_b = increment.std_error / increment.mean;
        result.plan.repayment_shares.push_back(share);
        result.share_std_errors.push_back(
            std::abs(share) * std::sqrt(rel_a * rel_a + rel_b * rel_b));
    }

    result.plan.interest_instants = interest_instants(terms);
    for (std::size_t j = 0; j < result.plan.interest_instants.size(); ++j) {
        const std::size_t src = std::min<std::size_t>(j, n - 1);
        result.plan.interest_shares.push_back(terms.interest_ratio *
                                              result.plan.repayment_shares[src]);
    }
    return result;
}

namespace detail {

inline void require_non_decreasing(const SamplePath& output) {
    double scale = 1.0;
    for (double v : output.values) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 1; k < output.values.size(); ++k) {
        if (output.values[k] < output.values[k - 1] - 1e-9 * scale)
            throw ContractViolationError(fmt::format(
                "realized output decreases at t={} ({} -> {})",
                output.grid.time(static_cast<int>(k)), output.values[k - 1],
                output.values[k]));
    }
}

inline void require_coverage(const SamplePath& path, double t_last, const char* name) {
    if (path.grid.t_start > 1e-12 || path.grid.t_end < t_last - 1e-9)
        throw ValidationError(fmt::format(
            "{} path covers [{}, {}] but settlement needs [0, {}]", name,
            path.grid.t_start, path.grid.t_end, t_last));
}

}  // namespace detail

// Settles one realized path pair against the agreed plan. The produce is
// sold at the market price of its instant; the interest instants follow the
// repayment horizon.
inline LoanOutcome settle_loan(const LoanTerms& terms, const RepaymentPlan& plan,
                               const SamplePath& output, const SamplePath& price_ratio) {
    terms.validate();
    if (plan.kind == LoanKind::private_income)
        throw ValidationError("settle_loan: income-fraction plans settle via "
                              "settle_income_loan");
    const double t_last = plan.interest_instants.empty()
                              ? plan.repayment_instants.back()
                              : plan.interest_instants.back();
    detail::require_coverage(output, t_last, "output");
    detail::require_coverage(price_ratio, t_last, "price ratio");
    detail::require_non_decreasing(output);

    LoanOutcome out;
    double prev_t = 0.0;
    for (std::size_t m = 0; m < plan.repayment_instants.size(); ++m) {
        const double t = plan.repayment_instants[m];
        const double delta = output.at_time(t) - output.at_time(prev_t);
        out.production_total += plan.repayment_shares[m] * delta;
        out.market_value += plan.repayment_shares[m] * delta * price_ratio.at_time(t);
        prev_t = t;
    }
    prev_t = terms.horizon;
    for (std::size_t m = 0; m < plan.interest_instants.size(); ++m) {
        const double t = plan.interest_instants[m];
        const double delta = output.at_time(t) - output.at_time(prev_t);
        out.interest_paid += plan.interest_shares[m] * delta * price_ratio.at_time(t);
        prev_t = t;
    }
    out.total_repaid = out.market_value + out.interest_paid;
    out.bank_loss = std::max(terms.principal - out.total_repaid, 0.0);
    out.bank_gain = std::max(out.total_repaid - terms.principal, 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Default resolution.
//
// performing -> {production_stopped, misconduct} -> exactly one resolved_*.
// Resolved states are terminal.
// ---------------------------------------------------------------------------

enum class DefaultState {
    performing,
    production_stopped,
    misconduct,
    resolved_local_continuation,
    resolved_private_investor,
    resolved_dismantled,
};

inline const char* to_string(DefaultState s) {
    switch (s) {
        case DefaultState::performing: return "performing";
        case DefaultState::production_stopped: return "production_stopped";
        case DefaultState::misconduct: return "misconduct";
        case DefaultState::resolved_local_continuation: return "resolved_local_continuation";
        case DefaultState::resolved_private_investor: return "resolved_private_investor";
        case DefaultState::resolved_dismantled: return "resolved_dismantled";
    }
    return "?";
}

struct DefaultCase {
    DefaultState state = DefaultState::performing;
    LoanKind kind = LoanKind::material;
    double salvage_value = 0.0;   // reusable elements sold at market
    double dismantle_cost = 0.0;  // paid by the bank

    void enter_failure(DefaultState failure) {
        if (state != DefaultState::performing)
            throw StateError(fmt::format("cannot enter failure from state {}",
                                         to_string(state)));
        if (failure != DefaultState::production_stopped &&
            failure != DefaultState::misconduct)
            throw StateError("failure entry must be production_stopped or misconduct");
        state = failure;
    }
};

struct DefaultDecision {
    enum class Kind { local_continuation, private_investor, dismantle };
    Kind kind = Kind::local_continuation;
    bool approved = false;        // local authorities' consent (private investor)
    double extension_years = 0.0; // optional renegotiated extension
};

struct ResolutionResult {
    DefaultCase updated;
    double wealth_effect = 0.0;  // applied to the bank's wealth
};

// Applies one resolution decision to a failed case. Service enterprises
// salvage nothing on dismantling; the dismantling costs still fall on the
// bank.
inline ResolutionResult resolve_default(const DefaultCase& c, const DefaultDecision& d) {
    if (c.state != DefaultState::production_stopped &&
        c.state != DefaultState::misconduct)
        throw StateError(fmt::format("resolution requires a failure state, got {}",
                                     to_string(c.state)));
    ResolutionResult res{c, 0.0};
    switch (d.kind) {
        case DefaultDecision::Kind::local_continuation:
            res.updated.state = DefaultState::resolved_local_continuation;
            break;
        case DefaultDecision::Kind::private_investor:
            if (!d.approved)
                throw ApprovalError(
                    "private investor continuation requires local authority approval");
            res.updated.state = DefaultState::resolved_private_investor;
            break;
        case DefaultDecision::Kind::dismantle: {
            const double salvage =
                c.kind == LoanKind::service ? 0.0 : c.salvage_value;
            res.wealth_effect = salvage - c.dismantle_cost;
            res.updated.state = DefaultState::resolved_dismantled;
            break;
        }
    }
    return res;
}

// Local continuation may extend the horizon: remaining instants (strictly
// after `now`) are redated proportionally onto the new horizon; the agreed
// shares never change.
inline RepaymentPlan extend_schedule(const RepaymentPlan& plan, double now,
                                     double old_horizon, double new_horizon) {
    if (!(new_horizon > old_horizon))
        throw ValidationError("extension requires new_horizon > old_horizon");
    if (!(now < old_horizon))
        throw ValidationError("extension must happen before the old horizon");
    RepaymentPlan out = plan;
    const double stretch = (new_horizon - now) / (old_horizon - now);
    for (double& t : out.repayment_instants)
        if (t > now) t = now + (t - now) * stretch;
    const double shift = new_horizon - old_horizon;
    for (double& t : out.interest_instants) t += shift;
    return out;
}

// ---------------------------------------------------------------------------
// Income-fraction loans for private persons.
// ---------------------------------------------------------------------------

// The bank is promised a fixed fraction of realized income per accrual
// window; there is no claw-back and no claim beyond the fraction. A start
// delay (e.g. repayments agreed to begin after an education) shifts every
// instant by the same offset; accrual windows shift with them.
inline RepaymentPlan build_income_loan(const LoanTerms& terms,
                                       const DiffusionSpec& income, double fraction,
                                       double start_delay = 0.0) {
    terms.validate();
    if (terms.kind != LoanKind::private_income)
        throw ValidationError("income loans require loan kind private_income");
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("income fraction must lie in (0,1)");
    if (start_delay < 0.0)
        throw ValidationError("income loan start delay must be >= 0");
    income.validate();
    if (income.x0 < 0.0)
        throw ValidationError("income process must start non-negative");
    RepaymentPlan plan;
    plan.kind = LoanKind::private_income;
    plan.repayment_instants = repayment_instants(terms);
    for (double& t : plan.repayment_instants) t += start_delay;
    plan.income_fraction = fraction;
    return plan;
}

struct IncomeSettlement {
    LoanOutcome outcome;
    DefaultState state = DefaultState::performing;
    std::vector<double> payments;  // one per instant
};

// Each payment is the agreed fraction of the income accrued over the
// instant's window (income path carries the income rate per year). Zero
// income means zero payment and the loan stays performing; only a willful
// breach moves the case to misconduct.
inline IncomeSettlement settle_income_loan(const LoanTerms& terms,
                                           const RepaymentPlan& plan,
                                           const SamplePath& income_rate,
                                           bool willful_breach = false) {
    terms.validate();
    if (plan.kind != LoanKind::private_income || plan.income_fraction <= 0.0)
        throw ValidationError("settle_income_loan requires an income-fraction plan");
    detail::require_coverage(income_rate, plan.repayment_instants.back(), "income");
    for (double v : income_rate.values)
        if (v < -1e-12)
            throw ValidationError("income path must be non-negative");

    // Cumulative income via running trapezoid on the path grid.
    const auto& grid = income_rate.grid;
    std::vector<double> cumulative(grid.n_points(), 0.0);
    for (int k = 1; k < grid.n_points(); ++k)
        cumulative[k] = cumulative[k - 1] +
                        0.5 * (income_rate.values[k - 1] + income_rate.values[k]) *
                            grid.step();
    SamplePath cum{grid, std::move(cumulative)};

    IncomeSettlement out;
    // First accrual window starts one stride before the first instant, so a
    // delayed schedule pledges no income from before the agreed start.
    double prev_t = std::max(
        0.0, plan.repayment_instants.front() -
                 terms.horizon / terms.n_repayments);
    for (double t : plan.repayment_instants) {
        const double accrued = cum.at_time(t) - cum.at_time(prev_t);
        out.payments.push_back(plan.income_fraction * accrued);
        prev_t = t;
    }
    for (double p : out.payments) out.outcome.market_value += p;
    out.outcome.total_repaid = out.outcome.market_value;
    out.outcome.bank_loss = std::max(terms.principal - out.outcome.total_repaid, 0.0);
    out.outcome.bank_gain = std::max(out.outcome.total_repaid - terms.principal, 0.0);
    out.state = willful_breach ? DefaultState::misconduct : DefaultState::performing;
    return out;
}

}  // namespace prodcredit::credit
