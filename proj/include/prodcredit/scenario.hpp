#pragma once

#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prodcredit/banksim.hpp"
#include "prodcredit/credit.hpp"
#include "prodcredit/csv.hpp"
#include "prodcredit/distribution.hpp"
#include "prodcredit/hjm.hpp"
#include "prodcredit/sovereign.hpp"

namespace prodcredit::scenario {

using nlohmann::json;

namespace detail {

// Cursor over a JSON node carrying its path for error messages; every object
// must declare its full key set, so misspelled scenario keys never pass.
class Node {
public:
    Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const json& raw() const { return *j_; }
    const std::string& path() const { return path_; }

    void require_object(std::initializer_list<const char*> allowed) const {
        if (!j_->is_object())
            throw ValidationError(fmt::format("{}: expected an object", path_));
        std::set<std::string> keys(allowed.begin(), allowed.end());
        for (const auto& [key, value] : j_->items())
            if (!keys.count(key))
                throw ValidationError(
                    fmt::format("{}: unknown key '{}'", path_, key));
    }

    bool has(const char* key) const { return j_->contains(key); }

    Node child(const char* key) const {
        if (!j_->contains(key))
            throw ValidationError(fmt::format("{}: missing key '{}'", path_, key));
        return Node(j_->at(key), fmt::format("{}.{}", path_, key));
    }

    Node element(std::size_t i) const {
        return Node(j_->at(i), fmt::format("{}[{}]", path_, i));
    }

    std::size_t size() const { return j_->size(); }

    double number(const char* key) const {
        const json& v = fetch(key);
        if (!v.is_number())
            throw ValidationError(fmt::format("{}.{}: expected a number", path_, key));
        return v.get<double>();
    }
    double number_or(const char* key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    int integer(const char* key) const {
        const json& v = fetch(key);
        if (!v.is_number_integer())
            throw ValidationError(fmt::format("{}.{}: expected an integer", path_, key));
        return v.get<int>();
    }
    int integer_or(const char* key, int fallback) const {
        return has(key) ? integer(key) : fallback;
    }
    std::uint64_t uint64_or(const char* key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const json& v = fetch(key);
        if (!v.is_number_unsigned() && !v.is_number_integer())
            throw ValidationError(fmt::format("{}.{}: expected an integer", path_, key));
        return v.get<std::uint64_t>();
    }
    bool boolean_or(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        const json& v = fetch(key);
        if (!v.is_boolean())
            throw ValidationError(fmt::format("{}.{}: expected a boolean", path_, key));
        return v.get<bool>();
    }
    std::string text(const char* key) const {
        const json& v = fetch(key);
        if (!v.is_string())
            throw ValidationError(fmt::format("{}.{}: expected a string", path_, key));
        return v.get<std::string>();
    }
    std::string text_or(const char* key, const std::string& fallback) const {
        return has(key) ? text(key) : fallback;
    }
    std::vector<double> numbers(const char* key) const {
        const json& v = fetch(key);
        if (!v.is_array())
            throw ValidationError(fmt::format("{}.{}: expected an array", path_, key));
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number())
                throw ValidationError(
                    fmt::format("{}.{}: expected numeric entries", path_, key));
            out.push_back(e.get<double>());
        }
        return out;
    }

private:
    const json& fetch(const char* key) const {
        if (!j_->contains(key))
            throw ValidationError(fmt::format("{}: missing key '{}'", path_, key));
        return j_->at(key);
    }

    const json* j_;
    std::string path_;
};

inline Distribution parse_distribution(const Node& node) {
    const std::string kind = node.text("kind");
    if (kind == "point_mass") {
        node.require_object({"kind", "value"});
        return Distribution::point_mass(node.number("value"));
    }
    if (kind == "uniform") {
        node.require_object({"kind", "low", "high"});
        return Distribution::uniform(node.number("low"), node.number("high"));
    }
    if (kind == "normal") {
        node.require_object({"kind", "mean", "stddev"});
        return Distribution::normal(node.number("mean"), node.number("stddev"));
    }
    if (kind == "lognormal") {
        node.require_object({"kind", "log_mean", "log_stddev"});
        return Distribution::lognormal(node.number("log_mean"), node.number("log_stddev"));
    }
    if (kind == "exponential") {
        node.require_object({"kind", "rate"});
        return Distribution::exponential(node.number("rate"));
    }
    throw ValidationError(fmt::format("{}: unknown law kind '{}'", node.path(), kind));
}

inline credit::ProcessSpec parse_process(const Node& node) {
    credit::ProcessSpec spec;
    const std::string kind = node.text("kind");
    if (kind == "constant") {
        node.require_object({"kind", "x0", "jumps", "integrate"});
        spec.diffusion = stochastics::constant_process(node.number("x0"));
    } else if (kind == "linear") {
        node.require_object({"kind", "x0", "rate", "jumps", "integrate"});
        spec.diffusion = stochastics::linear_process(node.number("x0"), node.number("rate"));
    } else if (kind == "gbm") {
        node.require_object({"kind", "x0", "drift", "volatility", "jumps", "integrate"});
        spec.diffusion = stochastics::gbm_process(
            node.number("x0"), node.number("drift"), node.number("volatility"));
    } else {
        throw ValidationError(
            fmt::format("{}: unknown process kind '{}'", node.path(), kind));
    }
    if (node.has("jumps")) {
        const Node jumps = node.child("jumps");
        jumps.require_object({"intensity", "law", "compensated"});
        spec.jumps = stochastics::JumpSpec::constant_intensity(
            jumps.number("intensity"), parse_distribution(jumps.child("law")),
            jumps.boolean_or("compensated", false));
    }
    spec.integrate_rate = node.boolean_or("integrate", false);
    return spec;
}

}  // namespace detail

struct SamplingBlock {
    int paths = 10000;
    int steps = 256;
    int threads = 0;  // 0 = available parallelism
};

struct LoanBlock {
    std::string name;
    credit::LoanTerms terms;
    std::string output_process;   // material / service loans
    std::string price_process;
    std::string income_process;   // private income loans
    double income_fraction = 0.0;
    double start_delay = 0.0;
    bool willful_breach = false;
};

struct BondsBlock {
    sovereign::TaxProcess tax;
    sovereign::GrowthSurface growth;
    struct QuoteRequest {
        double t;
        double maturity;
        double share;
    };
    std::vector<QuoteRequest> quotes;
    std::optional<std::filesystem::path> quotes_csv;  // bond-forward input
    sovereign::ForwardConvention convention = sovereign::ForwardConvention::growth;
};

struct DemandBlock {
    Distribution beliefs = Distribution::point_mass(0.05);
    double maturity = 1.0;
    int samples = 100000;
    std::vector<double> times{0.0};
    double scale_rate = 0.0;  // demanded share drifts as exp(scale_rate * t)
};

struct HjmBlock {
    std::string family = "ho_lee";  // zero | ho_lee | ho_lee_jumps
    double sigma0 = 0.01;
    double alpha_shift = 0.0;
    double jump_scale = 0.5;
    double jump_intensity = 2.0;
    double jump_mark_stddev = 0.02;
    double t_max = 1.0;
    int grid_steps = 64;
    double initial_flat_rate = 0.02;
    std::vector<double> initial_curve;  // overrides the flat rate when set
    int paths = 10000;
    double maturity = 1.0;
    std::vector<double> checkpoints{0.25, 0.5, 1.0};
    double residual_tolerance = 1e-8;
    hjm::ResidualConfig quadrature;
    // growth model for the implied-diffusion pipeline
    std::string growth_kind = "zero";  // zero | constant | mean_revert
    double growth_value = 0.0;
    double growth_initial = -0.02;

    hjm::TriangleGrid grid() const { return {t_max, grid_steps}; }

    hjm::HJMCoefficients coefficients() const {
        hjm::HJMCoefficients coeffs;
        if (family == "zero")
            coeffs = hjm::zero_coefficients();
        else if (family == "ho_lee")
            coeffs = hjm::ho_lee(sigma0);
        else if (family == "ho_lee_jumps")
            coeffs = hjm::ho_lee_with_jumps(sigma0, jump_scale, jump_intensity,
                                            jump_mark_stddev);
        else
            throw ValidationError(
                fmt::format("hjm.family: unknown coefficient family '{}'", family));
        if (alpha_shift != 0.0) coeffs = hjm::with_alpha_shift(coeffs, alpha_shift);
        return coeffs;
    }

    std::vector<double> curve(const hjm::TriangleGrid& g) const {
        if (!initial_curve.empty()) {
            if (static_cast<int>(initial_curve.size()) != g.n_points())
                throw ValidationError(fmt::format(
                    "hjm.initial_curve: expected {} nodes, found {}", g.n_points(),
                    initial_curve.size()));
            return initial_curve;
        }
        return std::vector<double>(g.n_points(), initial_flat_rate);
    }

    int time_index(const hjm::TriangleGrid& g, double t, const char* what) const {
        const double rel = t / g.h();
        const int idx = static_cast<int>(std::llround(rel));
        if (idx < 0 || idx > g.n || std::abs(rel - idx) > 1e-9)
            throw ValidationError(fmt::format(
                "hjm.{}: time {} does not land on the grid (step {})", what, t, g.h()));
        return idx;
    }

    hjm::GrowthIncrement growth_increment() const {
        if (growth_kind == "zero")
            return [](double, double, double) { return 0.0; };
        if (growth_kind == "constant") {
            const double c = growth_value;
            return [c](double, double, double) { return c; };
        }
        if (growth_kind == "mean_revert") {
            const double k = growth_value;
            return [k](double, double, double a) { return -k * a; };
        }
        throw ValidationError(
            fmt::format("hjm.growth_model: unknown kind '{}'", growth_kind));
    }
};

struct BankEvent {
    std::string op;  // issue_loan | interbank_loan | deposit_move |
                     // repay_interbank | absorb_loss | settlement_gain
    std::string bank;
    std::string counterparty;
    double amount = 0.0;
    banksim::FundingSource source = banksim::FundingSource::deposits;
    bool consented = true;
};

struct BanksBlock {
    std::vector<banksim::BankLedger> institutions;
    double max_ratio = 1.0;
    int random_events = 0;
    std::vector<BankEvent> events;
    std::string inject_violations;  // subset of "abcd"
};

struct Scenario {
    std::uint64_t seed = 0;
    SamplingBlock sampling;
    std::map<std::string, credit::ProcessSpec> processes;
    std::vector<LoanBlock> loans;
    std::optional<BondsBlock> bonds;
    std::optional<DemandBlock> demand;
    std::optional<HjmBlock> hjm_block;
    std::optional<BanksBlock> banks;

    const credit::ProcessSpec& process(const std::string& name) const {
        auto it = processes.find(name);
        if (it == processes.end())
            throw ValidationError(
                fmt::format("scenario: no process named '{}'", name));
        return it->second;
    }
};

namespace detail {

inline void parse_loans(const Node& node, Scenario& out) {
    for (std::size_t i = 0; i < node.size(); ++i) {
        const Node loan = node.element(i);
        LoanBlock block;
        block.name = loan.text("name");
        block.terms.principal = loan.number("principal");
        block.terms.horizon = loan.number("horizon");
        block.terms.n_repayments = loan.integer("repayments");
        block.terms.interest_period = loan.number_or("interest_period", 0.0);
        block.terms.n_interest_payments = loan.integer_or("interest_payments", 0);
        block.terms.interest_ratio = loan.number_or("interest_ratio", 0.1);
        const std::string kind = loan.text_or("kind", "material");
        if (kind == "material")
            block.terms.kind = credit::LoanKind::material;
        else if (kind == "service")
            block.terms.kind = credit::LoanKind::service;
        else if (kind == "private_income")
            block.terms.kind = credit::LoanKind::private_income;
        else
            throw ValidationError(
                fmt::format("{}: unknown loan kind '{}'", loan.path(), kind));
        if (block.terms.kind == credit::LoanKind::private_income) {
            loan.require_object({"name", "principal", "horizon", "repayments",
                                 "interest_period", "interest_payments",
                                 "interest_ratio", "kind", "income", "fraction",
                                 "start_delay", "willful_breach"});
            block.income_process = loan.text("income");
            block.income_fraction = loan.number("fraction");
            block.start_delay = loan.number_or("start_delay", 0.0);
            block.willful_breach = loan.boolean_or("willful_breach", false);
        } else {
            loan.require_object({"name", "principal", "horizon", "repayments",
                                 "interest_period", "interest_payments",
                                 "interest_ratio", "kind", "output", "price_ratio"});
            block.output_process = loan.text("output");
            block.price_process = loan.text("price_ratio");
        }
        block.terms.validate();
        out.loans.push_back(std::move(block));
    }
}

inline BondsBlock parse_bonds(const Node& node, const std::filesystem::path& base) {
    node.require_object({"tax", "growth", "quotes", "quotes_csv", "convention"});
    BondsBlock block;
    const std::string convention = node.text_or("convention", "growth");
    if (convention == "discount")
        block.convention = sovereign::ForwardConvention::discount;
    else if (convention != "growth")
        throw ValidationError(fmt::format(
            "{}.convention: expected 'growth' or 'discount', got '{}'", node.path(),
            convention));

    const Node tax = node.child("tax");
    if (tax.has("csv")) {
        tax.require_object({"csv"});
        block.tax = csv::read_tax(base / tax.text("csv"));
    } else {
        tax.require_object({"times", "values"});
        block.tax.times = tax.numbers("times");
        block.tax.values = tax.numbers("values");
        block.tax.validate();
    }

    const Node growth = node.child("growth");
    const std::string kind = growth.text("kind");
    if (kind == "csv") {
        growth.require_object({"kind", "path"});
        block.growth = csv::read_growth(base / growth.text("path"));
    } else if (kind == "constant") {
        growth.require_object({"kind", "rate", "t", "s_max", "nodes"});
        block.growth = sovereign::GrowthSurface::constant(
            growth.number("rate"), growth.number_or("t", 0.0),
            growth.number("s_max"), growth.integer("nodes"));
    } else if (kind == "table") {
        growth.require_object({"kind", "t_axis", "s_axis", "rates"});
        block.growth.t_axis = growth.numbers("t_axis");
        block.growth.s_axis = growth.numbers("s_axis");
        const Node rates = growth.child("rates");
        for (std::size_t i = 0; i < rates.size(); ++i)
            block.growth.rates.push_back(rates.element(i).raw().get<std::vector<double>>());
        block.growth.validate();
    } else {
        throw ValidationError(
            fmt::format("{}: unknown growth kind '{}'", growth.path(), kind));
    }

    if (node.has("quotes")) {
        const Node quotes = node.child("quotes");
        for (std::size_t i = 0; i < quotes.size(); ++i) {
            const Node q = quotes.element(i);
            q.require_object({"t", "maturity", "share"});
            block.quotes.push_back(
                {q.number("t"), q.number("maturity"), q.number_or("share", 0.01)});
        }
    }
    if (node.has("quotes_csv")) block.quotes_csv = base / node.text("quotes_csv");
    return block;
}

inline HjmBlock parse_hjm(const Node& node) {
    node.require_object({"family", "sigma0", "alpha_shift", "jump_scale",
                         "jump_intensity", "jump_mark_stddev", "t_max", "grid_steps",
                         "initial_curve", "paths", "maturity", "checkpoints",
                         "residual_tolerance", "quadrature", "growth_model"});
    HjmBlock block;
    block.family = node.text_or("family", "ho_lee");
    block.sigma0 = node.number_or("sigma0", 0.01);
    block.alpha_shift = node.number_or("alpha_shift", 0.0);
    block.jump_scale = node.number_or("jump_scale", 0.5);
    block.jump_intensity = node.number_or("jump_intensity", 2.0);
    block.jump_mark_stddev = node.number_or("jump_mark_stddev", 0.02);
    block.t_max = node.number_or("t_max", 1.0);
    block.grid_steps = node.integer_or("grid_steps", 64);
    if (node.has("initial_curve")) {
        const Node curve = node.child("initial_curve");
        const std::string kind = curve.text("kind");
        if (kind == "flat") {
            curve.require_object({"kind", "rate"});
            block.initial_flat_rate = curve.number("rate");
        } else if (kind == "table") {
            curve.require_object({"kind", "rates"});
            block.initial_curve = curve.numbers("rates");
        } else {
            throw ValidationError(
                fmt::format("{}: unknown curve kind '{}'", curve.path(), kind));
        }
    }
    block.paths = node.integer_or("paths", 10000);
    block.maturity = node.number_or("maturity", block.t_max);
    if (node.has("checkpoints")) block.checkpoints = node.numbers("checkpoints");
    block.residual_tolerance = node.number_or("residual_tolerance", 1e-8);
    if (node.has("quadrature")) {
        const Node quad = node.child("quadrature");
        quad.require_object({"nodes", "monte_carlo", "samples", "seed"});
        block.quadrature.gl_nodes = quad.integer_or("nodes", 64);
        block.quadrature.monte_carlo = quad.boolean_or("monte_carlo", false);
        block.quadrature.mc_samples = quad.integer_or("samples", 50000);
        block.quadrature.mc_seed = quad.uint64_or("seed", 1);
    }
    if (node.has("growth_model")) {
        const Node growth = node.child("growth_model");
        growth.require_object({"kind", "value", "initial"});
        block.growth_kind = growth.text("kind");
        block.growth_value = growth.number_or("value", 0.0);
        block.growth_initial = growth.number_or("initial", -0.02);
    }
    return block;
}

inline BanksBlock parse_banks(const Node& node) {
    node.require_object({"institutions", "max_ratio", "random_events", "events",
                         "inject_violations"});
    BanksBlock block;
    const Node institutions = node.child("institutions");
    for (std::size_t i = 0; i < institutions.size(); ++i) {
        const Node b = institutions.element(i);
        b.require_object({"id", "deposits", "wealth"});
        banksim::BankLedger ledger;
        ledger.id = b.text("id");
        ledger.deposits = b.number("deposits");
        ledger.wealth = b.number("wealth");
        block.institutions.push_back(std::move(ledger));
    }
    block.max_ratio = node.number_or("max_ratio", 1.0);
    block.random_events = node.integer_or("random_events", 0);
    if (node.has("events")) {
        const Node events = node.child("events");
        for (std::size_t i = 0; i < events.size(); ++i) {
            const Node e = events.element(i);
            e.require_object({"op", "bank", "counterparty", "amount", "source",
                              "consented"});
            BankEvent event;
            event.op = e.text("op");
            event.bank = e.text("bank");
            event.counterparty = e.text_or("counterparty", "");
            event.amount = e.number("amount");
            const std::string source = e.text_or("source", "deposits");
            if (source == "deposits")
                event.source = banksim::FundingSource::deposits;
            else if (source == "interbank")
                event.source = banksim::FundingSource::interbank;
            else
                throw ValidationError(
                    fmt::format("{}: unknown funding source '{}'", e.path(), source));
            event.consented = e.boolean_or("consented", true);
            block.events.push_back(std::move(event));
        }
    }
    block.inject_violations = node.text_or("inject_violations", "");
    for (char c : block.inject_violations)
        if (c < 'a' || c > 'd')
            throw ValidationError(fmt::format(
                "banks.inject_violations: unknown rule class '{}'", c));
    return block;
}

}  // namespace detail

inline Scenario parse(const json& j, const std::filesystem::path& base_dir) {
    const detail::Node root(j, "scenario");
    root.require_object({"seed", "sampling", "processes", "loans", "bonds", "demand",
                         "hjm", "banks"});
    Scenario out;
    out.seed = root.uint64_or("seed", 0);
    if (root.has("sampling")) {
        const detail::Node sampling = root.child("sampling");
        sampling.require_object({"paths", "steps", "threads"});
        out.sampling.paths = sampling.integer_or("paths", 10000);
        out.sampling.steps = sampling.integer_or("steps", 256);
        out.sampling.threads = sampling.integer_or("threads", 0);
    }
    if (root.has("processes")) {
        const detail::Node processes = root.child("processes");
        for (const auto& [name, spec] : processes.raw().items())
            out.processes.emplace(
                name, detail::parse_process(detail::Node(
                          spec, fmt::format("scenario.processes.{}", name))));
    }
    if (root.has("loans")) detail::parse_loans(root.child("loans"), out);
    if (root.has("bonds")) out.bonds = detail::parse_bonds(root.child("bonds"), base_dir);
    if (root.has("demand")) {
        const detail::Node demand = root.child("demand");
        demand.require_object({"beliefs", "maturity", "samples", "times", "scale_rate"});
        DemandBlock block;
        block.beliefs = detail::parse_distribution(demand.child("beliefs"));
        block.maturity = demand.number_or("maturity", 1.0);
        block.samples = demand.integer_or("samples", 100000);
        if (demand.has("times")) block.times = demand.numbers("times");
        block.scale_rate = demand.number_or("scale_rate", 0.0);
        out.demand = std::move(block);
    }
    if (root.has("hjm")) out.hjm_block = detail::parse_hjm(root.child("hjm"));
    if (root.has("banks")) out.banks = detail::parse_banks(root.child("banks"));

    // Cross references must resolve at load time.
    for (const auto& loan : out.loans) {
        if (loan.terms.kind == credit::LoanKind::private_income) {
            out.process(loan.income_process);
        } else {
            out.process(loan.output_process);
            out.process(loan.price_process);
        }
    }
    return out;
}

// Samples an observed growth surface onto a forward-surface grid, so an
// empirically populated surface can drive the same machinery as an evolved
// one. Rows interpolate linearly in t, columns linearly in maturity.
inline hjm::TriangularField forward_surface_from_growth(
    const sovereign::GrowthSurface& growth, const hjm::TriangleGrid& grid) {
    growth.validate();
    grid.validate();
    hjm::TriangularField field(grid);
    for (int i = 0; i < grid.n_points(); ++i) {
        const double t = grid.time(i);
        if (t < growth.t_axis.front() - 1e-9 || t > growth.t_axis.back() + 1e-9)
            throw ValidationError(fmt::format(
                "growth surface covers t in [{}, {}], grid needs t={}",
                growth.t_axis.front(), growth.t_axis.back(), t));
        auto upper = std::upper_bound(growth.t_axis.begin(), growth.t_axis.end(), t);
        std::size_t hi = upper == growth.t_axis.begin()
                             ? 0
                             : std::min<std::size_t>(upper - growth.t_axis.begin(),
                                                     growth.t_axis.size() - 1);
        const std::size_t lo = hi == 0 ? 0 : hi - 1;
        const double span = growth.t_axis[hi] - growth.t_axis[lo];
        const double w = span > 0.0 ? (t - growth.t_axis[lo]) / span : 0.0;
        for (int j = i; j < grid.n_points(); ++j) {
            const double s = grid.time(j);
            field.at(i, j) = (1.0 - w) * growth.rate_at(lo, s) +
                             w * growth.rate_at(hi, s);
        }
    }
    return field;
}

inline Scenario load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open scenario {}", path.string()));
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError(
            fmt::format("{}: JSON parse error: {}", path.string(), e.what()));
    }
    return parse(j, path.parent_path());
}

}  // namespace prodcredit::scenario
