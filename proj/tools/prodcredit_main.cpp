// Command-line front end: scenario in, reproducible CSV out.
//
// Subcommands map onto the library modules; every output file starts with
// the schema line and is byte-stable for fixed inputs at any thread count.
// Exit codes per error class are documented in docs/formats/exit_codes.md.

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "prodcredit/banksim.hpp"
#include "prodcredit/credit.hpp"
#include "prodcredit/csv.hpp"
#include "prodcredit/errors.hpp"
#include "prodcredit/hjm.hpp"
#include "prodcredit/scenario.hpp"
#include "prodcredit/sovereign.hpp"
#include "prodcredit/stochastics.hpp"

namespace fs = std::filesystem;
using namespace prodcredit;

namespace {

// Exit codes by error class.
constexpr int kExitValidation = 64;
constexpr int kExitDomain = 65;
constexpr int kExitContract = 66;
constexpr int kExitInfeasible = 67;
constexpr int kExitDriftViolated = 68;
constexpr int kExitNonCompliant = 69;
constexpr int kExitIo = 70;
constexpr int kExitSimulation = 71;
constexpr int kExitIntegrability = 72;
constexpr int kExitState = 73;
constexpr int kExitRefusal = 74;

// Seed tags separating the scenario's independent random uses.
constexpr std::uint64_t kTagSettlement = 0x5345544c;  // "SETL"
constexpr std::uint64_t kTagEvolve = 0x45564f4c;      // "EVOL"
constexpr std::uint64_t kTagDemand = 0x44454d44;      // "DEMD"
constexpr std::uint64_t kTagBanks = 0x42414e4b;       // "BANK"

bool log_enabled() {
    const char* level = std::getenv("PRODCREDIT_LOG");
    return level && std::string_view(level) != "" && std::string_view(level) != "quiet";
}

void log_info(const std::string& msg) {
    if (log_enabled()) std::cerr << "[prodcredit] " << msg << '\n';
}

struct Options {
    std::string scenario_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int paths_override = 0;
    int threads = 0;  // 0 = hardware concurrency
    bool threads_set = false;
};

void add_common_flags(CLI::App* sub, Options& opts, bool scenario_required = true) {
    auto* s = sub->add_option("--scenario", opts.scenario_path, "scenario JSON file");
    if (scenario_required) s->required();
    sub->add_option("--out", opts.out_dir, "output directory (created if missing)");
    sub->add_option("--seed", opts.seed_override, "override the scenario seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    sub->add_option("--paths", opts.paths_override,
                    "override the Monte Carlo path count");
    sub->add_option("--threads", opts.threads,
                    "worker threads (0 = hardware concurrency)")
        ->each([&opts](const std::string&) { opts.threads_set = true; });
}

scenario::Scenario load_scenario(const Options& opts) {
    auto sc = scenario::load(opts.scenario_path);
    if (opts.seed_set) sc.seed = opts.seed_override;
    if (opts.paths_override > 0) sc.sampling.paths = opts.paths_override;
    if (opts.threads_set) sc.sampling.threads = opts.threads;
    return sc;
}

fs::path ensure_out_dir(const Options& opts) {
    fs::path dir(opts.out_dir);
    fs::create_directories(dir);
    return dir;
}

const char* outcome_state(const credit::LoanOutcome&) { return "performing"; }

// Simulates the single realized path pair for one loan settlement.
stochastics::SamplePath realize(const credit::ProcessSpec& spec, double t_last,
                                int steps, std::uint64_t seed) {
    stochastics::TimeGrid grid{0.0, t_last, steps};
    return spec.simulate(grid, 1, seed).extract(0);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_golden(const Options& opts) {
    // The deterministic reference loan: cost 10, repaid in one period worth
    // exactly 10, one further unit of output value as interest.
    credit::LoanTerms terms;
    terms.principal = 10.0;
    terms.horizon = 1.0;
    terms.n_repayments = 1;
    terms.interest_period = 1.0;
    terms.n_interest_payments = 1;
    terms.interest_ratio = 0.1;
    credit::EnterpriseModel model{{stochastics::linear_process(0.0, 10.0), {}, false},
                                  {stochastics::constant_process(1.0), {}, false}};
    auto plan = credit::compute_repayment_plan(terms, model, {64, 64, 0, 1});
    auto output = realize(model.productivity, 2.0, 128, 1);
    auto price = realize(model.price_ratio, 2.0, 128, 2);
    auto outcome = credit::settle_loan(terms, plan.plan, output, price);

    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"loan", "market_value", "interest",
                                        "total_repaid", "loss", "gain", "state"};
    csv::Writer writer(dir / "golden_motivation.csv", cols);
    writer.row("motivation", outcome.market_value, outcome.interest_paid,
               outcome.total_repaid, outcome.bank_loss, outcome.bank_gain,
               outcome_state(outcome));
    fmt::print(
        "golden-motivation: principal={:.12g} repaid={:.12g} interest={:.12g} "
        "total={:.12g} loss={:.12g} gain={:.12g}\n",
        terms.principal, outcome.market_value, outcome.interest_paid,
        outcome.total_repaid, outcome.bank_loss, outcome.bank_gain);
    return 0;
}

int run_loan_plan(const Options& opts) {
    auto sc = load_scenario(opts);
    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"loan", "instant", "share_kind", "share",
                                        "std_error"};
    csv::Writer writer(dir / "loan_plan.csv", cols);
    for (const auto& loan : sc.loans) {
        if (loan.terms.kind == credit::LoanKind::private_income) {
            auto plan = credit::build_income_loan(
                loan.terms, sc.process(loan.income_process).diffusion,
                loan.income_fraction, loan.start_delay);
            for (double t : plan.repayment_instants)
                writer.row(loan.name, t, "income_fraction", plan.income_fraction, 0.0);
            continue;
        }
        credit::EnterpriseModel model{sc.process(loan.output_process),
                                      sc.process(loan.price_process)};
        credit::SamplingConfig cfg{sc.sampling.paths, sc.sampling.steps, sc.seed,
                                   sc.sampling.threads};
        auto result = credit::compute_repayment_plan(loan.terms, model, cfg);
        log_info(fmt::format("planned loan {} ({} instants)", loan.name,
                             result.plan.repayment_instants.size()));
        for (std::size_t m = 0; m < result.plan.repayment_instants.size(); ++m)
            writer.row(loan.name, result.plan.repayment_instants[m], "repayment",
                       result.plan.repayment_shares[m], result.share_std_errors[m]);
        for (std::size_t m = 0; m < result.plan.interest_instants.size(); ++m)
            writer.row(loan.name, result.plan.interest_instants[m], "interest",
                       result.plan.interest_shares[m], 0.0);
    }
    return 0;
}

int run_loan_settle(const Options& opts) {
    auto sc = load_scenario(opts);
    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"loan", "market_value", "interest",
                                        "total_repaid", "loss", "gain", "state"};
    csv::Writer writer(dir / "settlements.csv", cols);
    std::uint64_t loan_index = 0;
    for (const auto& loan : sc.loans) {
        const std::uint64_t seed =
            rng::derive_seed(sc.seed, kTagSettlement + loan_index++);
        if (loan.terms.kind == credit::LoanKind::private_income) {
            auto plan = credit::build_income_loan(
                loan.terms, sc.process(loan.income_process).diffusion,
                loan.income_fraction, loan.start_delay);
            auto income = realize(sc.process(loan.income_process),
                                  loan.terms.horizon + loan.start_delay,
                                  sc.sampling.steps, seed);
            auto settlement = credit::settle_income_loan(loan.terms, plan, income,
                                                         loan.willful_breach);
            writer.row(loan.name, settlement.outcome.market_value,
                       settlement.outcome.interest_paid,
                       settlement.outcome.total_repaid, settlement.outcome.bank_loss,
                       settlement.outcome.bank_gain,
                       credit::to_string(settlement.state));
            continue;
        }
        credit::EnterpriseModel model{sc.process(loan.output_process),
                                      sc.process(loan.price_process)};
        credit::SamplingConfig cfg{sc.sampling.paths, sc.sampling.steps, sc.seed,
                                   sc.sampling.threads};
        auto result = credit::compute_repayment_plan(loan.terms, model, cfg);
        const double t_last =
            loan.terms.horizon +
            (loan.terms.has_interest() ? loan.terms.interest_period : 0.0);
        auto output = realize(model.productivity, t_last, sc.sampling.steps,
                              rng::derive_seed(seed, 1));
        auto price = realize(model.price_ratio, t_last, sc.sampling.steps,
                             rng::derive_seed(seed, 2));
        auto outcome = credit::settle_loan(loan.terms, result.plan, output, price);
        writer.row(loan.name, outcome.market_value, outcome.interest_paid,
                   outcome.total_repaid, outcome.bank_loss, outcome.bank_gain,
                   outcome_state(outcome));
    }
    return 0;
}

const scenario::BondsBlock& bonds_or_fail(const scenario::Scenario& sc) {
    if (!sc.bonds)
        throw ValidationError("scenario: this subcommand needs a 'bonds' block");
    return *sc.bonds;
}

int run_bond_price(const Options& opts) {
    auto sc = load_scenario(opts);
    const auto& bonds = bonds_or_fail(sc);
    if (bonds.quotes.empty())
        throw ValidationError("scenario.bonds: no quote requests to price");
    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"t", "maturity", "share", "price"};
    csv::Writer writer(dir / "bond_quotes.csv", cols);
    for (const auto& req : bonds.quotes) {
        auto quote =
            sovereign::price_bond(bonds.tax, bonds.growth, req.t, req.maturity, req.share);
        writer.row(quote.t, quote.maturity, quote.share, quote.price);
    }
    return 0;
}

int run_bond_forward(const Options& opts) {
    auto sc = load_scenario(opts);
    const auto& bonds = bonds_or_fail(sc);
    std::vector<sovereign::BondQuote> quotes;
    if (bonds.quotes_csv) {
        quotes = csv::read_quotes(*bonds.quotes_csv);
    } else if (!bonds.quotes.empty()) {
        for (const auto& req : bonds.quotes)
            quotes.push_back(sovereign::price_bond(bonds.tax, bonds.growth, req.t,
                                                   req.maturity, req.share));
    } else {
        // Full strip at the first observation time.
        const double t = bonds.growth.t_axis.front();
        for (double s : bonds.growth.s_axis)
            if (s >= t)
                quotes.push_back(sovereign::price_bond(bonds.tax, bonds.growth, t, s));
    }
    auto slice = sovereign::implied_forward(quotes, bonds.convention);
    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"t", "maturity", "rate"};
    csv::Writer writer(dir / "bond_forward.csv", cols);
    for (const auto& [maturity, rate] : slice) writer.row(quotes[0].t, maturity, rate);
    return 0;
}

int run_gamma(const Options& opts) {
    auto sc = load_scenario(opts);
    if (!sc.demand)
        throw ValidationError("scenario: this subcommand needs a 'demand' block");
    const auto& block = *sc.demand;
    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"t", "maturity", "gamma", "std_error"};
    csv::Writer writer(dir / "demand_measure.csv", cols);

    std::vector<double> gammas;
    for (std::size_t i = 0; i < block.times.size(); ++i) {
        const double t = block.times[i];
        const auto beliefs = block.scale_rate == 0.0
                                 ? block.beliefs
                                 : block.beliefs.scaled(std::exp(block.scale_rate * t));
        auto est = sovereign::demand_measure(beliefs, t, block.maturity, block.samples,
                                             rng::derive_seed(sc.seed, kTagDemand + i));
        writer.row(est.t, est.maturity, est.gamma, est.std_error);
        gammas.push_back(est.gamma);
    }
    if (block.times.size() >= 3) {
        auto rates = sovereign::demand_rate(block.times, gammas);
        const std::vector<std::string> rate_cols{"t", "rate"};
        csv::Writer rate_writer(dir / "demand_rate.csv", rate_cols);
        for (std::size_t i = 0; i < rates.size(); ++i)
            rate_writer.row(block.times[i], rates[i]);
    }
    return 0;
}

const scenario::HjmBlock& hjm_or_fail(const scenario::Scenario& sc) {
    if (!sc.hjm_block)
        throw ValidationError("scenario: this subcommand needs an 'hjm' block");
    return *sc.hjm_block;
}

int run_hjm_check(const Options& opts) {
    auto sc = load_scenario(opts);
    const auto& block = hjm_or_fail(sc);
    const auto grid = block.grid();
    auto report = hjm::drift_residual(block.coefficients(), grid, block.quadrature);

    const fs::path dir = ensure_out_dir(opts);
    {
        const std::vector<std::string> cols{"t", "maturity", "residual"};
        csv::Writer writer(dir / "hjm_residual.csv", cols);
        for (int i = 0; i < grid.n_points(); ++i)
            for (int j = i; j < grid.n_points(); ++j)
                writer.row(grid.time(i), grid.time(j), report.residual.at(i, j));
    }
    const bool violated = report.max_abs > block.residual_tolerance;
    {
        const std::vector<std::string> cols{"max_abs",   "argmax_t",      "argmax_T",
                                            "grid_h",    "jump_term_bound",
                                            "tolerance", "status"};
        csv::Writer writer(dir / "hjm_check_summary.csv", cols);
        writer.row(report.max_abs, grid.time(report.argmax_i),
                   grid.time(report.argmax_j), grid.h(), report.jump_term_bound,
                   block.residual_tolerance,
                   violated ? "drift-condition-violated" : "ok");
    }
    fmt::print("hjm-check: max|residual|={:.12g} at (t={:.12g}, T={:.12g}) "
               "tolerance={:.12g} jump_bound={:.12g} status={}\n",
               report.max_abs, grid.time(report.argmax_i), grid.time(report.argmax_j),
               block.residual_tolerance, report.jump_term_bound,
               violated ? "drift-condition-violated" : "ok");
    return violated ? kExitDriftViolated : 0;
}

int run_hjm_evolve(const Options& opts) {
    auto sc = load_scenario(opts);
    const auto& block = hjm_or_fail(sc);
    const auto grid = block.grid();
    const auto coeffs = block.coefficients();
    const auto initial = block.curve(grid);
    const int n_paths = opts.paths_override > 0 ? opts.paths_override : block.paths;
    const std::uint64_t seed = rng::derive_seed(sc.seed, kTagEvolve);

    const int maturity_idx = block.time_index(grid, block.maturity, "maturity");
    std::vector<int> checkpoint_idx;
    for (double t : block.checkpoints)
        checkpoint_idx.push_back(block.time_index(grid, t, "checkpoints"));

    log_info(fmt::format("evolving {} paths on a {}x{} grid", n_paths, grid.n, grid.n));
    auto martingale =
        hjm::discounted_bond_stats(coeffs, initial, grid, maturity_idx, checkpoint_idx,
                                   n_paths, seed, sc.sampling.threads);
    auto forward = hjm::forward_mean_stats(coeffs, initial, grid, maturity_idx, n_paths,
                                           seed, sc.sampling.threads);

    const fs::path dir = ensure_out_dir(opts);
    {
        const std::vector<std::string> cols{"t", "mean_discounted_price", "std_error",
                                            "reference_price"};
        csv::Writer writer(dir / "hjm_martingale.csv", cols);
        for (std::size_t c = 0; c < martingale.checkpoint_times.size(); ++c)
            writer.row(martingale.checkpoint_times[c],
                       martingale.discounted_price[c].mean,
                       martingale.discounted_price[c].std_error,
                       martingale.reference_price);
    }
    {
        const std::vector<std::string> cols{"t", "maturity", "mean_forward",
                                            "std_error"};
        csv::Writer writer(dir / "hjm_forward_mean.csv", cols);
        for (std::size_t k = 0; k < forward.times.size(); ++k)
            writer.row(forward.times[k], grid.time(maturity_idx),
                       forward.forward_rate[k].mean,
                       forward.forward_rate[k].std_error);
    }
    return 0;
}

int run_hjm_implied_vol(const Options& opts) {
    auto sc = load_scenario(opts);
    const auto& block = hjm_or_fail(sc);
    const auto grid = block.grid();
    std::vector<double> initial(grid.n_points(), block.growth_initial);
    auto drift_field = hjm::evolve_growth_drift(block.growth_increment(), initial, grid);
    const auto coeffs = block.coefficients();
    auto half_s2 = hjm::implied_diffusion_from_growth(
        drift_field, coeffs.jumps ? &*coeffs.jumps : nullptr, block.quadrature);

    const fs::path dir = ensure_out_dir(opts);
    const std::vector<std::string> cols{"t", "maturity", "half_squared_vol"};
    csv::Writer writer(dir / "hjm_implied_vol.csv", cols);
    for (int i = 0; i < grid.n_points(); ++i)
        for (int j = i; j < grid.n_points(); ++j)
            writer.row(grid.time(i), grid.time(j), half_s2.at(i, j));
    return 0;
}

int run_bank_sim(const Options& opts) {
    auto sc = load_scenario(opts);
    if (!sc.banks)
        throw ValidationError("scenario: this subcommand needs a 'banks' block");
    const auto& block = *sc.banks;
    banksim::BankSystem system(block.institutions);
    const double initial_holdings = system.total_holdings();

    for (const auto& event : block.events) {
        if (event.op == "issue_loan")
            system.issue_loan(event.bank, event.amount, event.source, block.max_ratio);
        else if (event.op == "interbank_loan")
            system.interbank_loan(event.bank, event.counterparty, event.amount,
                                  block.max_ratio);
        else if (event.op == "deposit_move")
            system.move_deposits(event.bank, event.counterparty, event.amount,
                                 event.consented);
        else if (event.op == "repay_interbank")
            system.repay_interbank(event.bank, event.counterparty, event.amount);
        else if (event.op == "absorb_loss")
            system.absorb_loss(event.bank, event.amount);
        else if (event.op == "settlement_gain")
            system.settlement_gain(event.bank, event.amount);
        else
            throw ValidationError(
                fmt::format("banks.events: unknown op '{}'", event.op));
    }
    if (block.random_events > 0)
        banksim::run_random_events(system, block.random_events,
                                   rng::derive_seed(sc.seed, kTagBanks),
                                   block.max_ratio);
    for (char rule : block.inject_violations) banksim::inject_violation(system, rule);

    auto report = banksim::check_compliance(system.history());
    const double drift = banksim::conservation_drift(system, initial_holdings);

    const fs::path dir = ensure_out_dir(opts);
    {
        const std::vector<std::string> cols{"seq",       "kind",   "from",
                                            "to",        "amount", "consented",
                                            "source",    "source_bank", "disclosed"};
        csv::Writer writer(dir / "bank_history.csv", cols);
        for (const auto& r : system.history())
            writer.row(r.seq, banksim::to_string(r.kind), r.from, r.to, r.amount,
                       r.consented ? 1 : 0,
                       r.source == banksim::FundingSource::interbank ? "interbank"
                                                                     : "deposits",
                       r.source_bank, r.disclosed ? 1 : 0);
    }
    {
        const std::vector<std::string> cols{"bank",   "deposits", "outstanding_credit",
                                            "wealth", "tagged",   "interbank_debt",
                                            "collapsed", "disclosures"};
        csv::Writer writer(dir / "bank_ledgers.csv", cols);
        for (const auto& b : system.banks())
            writer.row(b.id, b.deposits, b.outstanding_credit, b.wealth,
                       b.tagged_total(), b.debt_total(), b.collapsed ? 1 : 0,
                       b.ratio_disclosures.size());
    }
    {
        const std::vector<std::string> cols{"record_index", "rule", "detail"};
        csv::Writer writer(dir / "bank_compliance.csv", cols);
        for (const auto& v : report.violations)
            writer.row(v.record_index, std::string(1, v.rule), v.detail);
    }
    {
        const std::vector<std::string> cols{"events",          "holdings",
                                            "external_inflows", "external_outflows",
                                            "conservation_drift", "violations"};
        csv::Writer writer(dir / "bank_summary.csv", cols);
        writer.row(system.history().size(), system.total_holdings(),
                   system.external_inflows(), system.external_outflows(), drift,
                   report.violations.size());
    }
    fmt::print("bank-sim: events={} conservation_drift={:.3e} violations={}\n",
               system.history().size(), drift, report.violations.size());
    return report.clean() ? 0 : kExitNonCompliant;
}

template <typename Fn>
int dispatch(Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return kExitDomain;
    } catch (const ContractViolationError& e) {
        std::cerr << "contract violation: " << e.what() << '\n';
        return kExitContract;
    } catch (const InfeasibilityError& e) {
        std::cerr << "infeasibility: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const IntegrabilityError& e) {
        std::cerr << "integrability violation: " << e.what() << '\n';
        return kExitIntegrability;
    } catch (const ApprovalError& e) {
        std::cerr << "approval error: " << e.what() << '\n';
        return kExitState;
    } catch (const StateError& e) {
        std::cerr << "state error: " << e.what() << '\n';
        return kExitState;
    } catch (const RefusalError& e) {
        std::cerr << "refusal: " << e.what() << '\n';
        return kExitRefusal;
    } catch (const ProvenanceError& e) {
        std::cerr << "provenance error: " << e.what() << '\n';
        return kExitRefusal;
    } catch (const SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << '\n';
        return kExitSimulation;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prodcredit: productivity-indexed credit simulation and pricing"};
    app.require_subcommand(1);

    struct Command {
        CLI::App* sub;
        Options opts;
        int (*run)(const Options&);
    };
    std::vector<Command> commands;
    commands.reserve(16);  // CLI11 binds pointers into the stored Options
    auto add = [&](const char* name, const char* help, int (*run)(const Options&),
                   bool needs_scenario = true) {
        commands.push_back({app.add_subcommand(name, help), Options{}, run});
        add_common_flags(commands.back().sub, commands.back().opts, needs_scenario);
    };

    add("golden-motivation", "deterministic reference loan: repay 10, gain 1",
        run_golden, false);
    add("loan-plan", "compute fixed repayment-share schedules", run_loan_plan);
    add("loan-settle", "settle loans on realized paths", run_loan_settle);
    add("bond-price", "price tax-revenue-share bonds", run_bond_price);
    add("bond-forward", "implied growth rates from bond quotes", run_bond_forward);
    add("gamma", "lenders' demand measure and its rate", run_gamma);
    add("hjm-check", "verify the no-arbitrage drift condition", run_hjm_check);
    add("hjm-evolve", "simulate the forward surface and martingale stats",
        run_hjm_evolve);
    add("hjm-implied-vol", "squared diffusion implied by a growth model",
        run_hjm_implied_vol);
    add("bank-sim", "run the bank ledger simulation and compliance checks",
        run_bank_sim);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    for (auto& cmd : commands)
        if (cmd.sub->parsed()) return dispatch([&] { return cmd.run(cmd.opts); });
    return 0;
}
