#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "prodcredit/banksim.hpp"

using namespace prodcredit;
using namespace prodcredit::banksim;

namespace {

BankSystem two_banks() {
    return BankSystem({{"alpha", 100.0, 0.0, 50.0}, {"beta", 80.0, 0.0, 30.0}});
}

}  // namespace

TEST_CASE("loan issuance discloses the post-issue ratio", "[banksim][issue]") {
    auto sys = two_banks();
    sys.issue_loan("alpha", 50.0, FundingSource::deposits, 1.0);
    const auto& a = sys.bank("alpha");
    REQUIRE(a.outstanding_credit == 50.0);
    REQUIRE(a.ratio_disclosures.size() == 1);
    REQUIRE_THAT(a.ratio_disclosures.back().ratio,
                 Catch::Matchers::WithinRel(0.5, 1e-12));
}

TEST_CASE("ratio breaches refuse the loan", "[banksim][issue]") {
    auto sys = two_banks();
    sys.issue_loan("alpha", 95.0, FundingSource::deposits, 1.0);
    REQUIRE_THROWS_AS(sys.issue_loan("alpha", 10.0, FundingSource::deposits, 1.0),
                      RefusalError);
    // ledger untouched by the refusal
    REQUIRE(sys.bank("alpha").outstanding_credit == 95.0);
    REQUIRE(sys.bank("alpha").ratio_disclosures.size() == 1);
}

TEST_CASE("interbank-funded loans cannot exceed the tagged pool",
          "[banksim][issue][provenance]") {
    auto sys = two_banks();
    sys.interbank_loan("alpha", "beta", 30.0, 1.0);
    REQUIRE(sys.bank("beta").tagged_total() == 30.0);
    REQUIRE_THROWS_AS(sys.issue_loan("beta", 40.0, FundingSource::interbank, 2.0),
                      ProvenanceError);
    sys.issue_loan("beta", 25.0, FundingSource::interbank, 2.0);
    REQUIRE_THAT(sys.bank("beta").tagged_total(),
                 Catch::Matchers::WithinAbs(5.0, 1e-12));
}

TEST_CASE("interbank loans tag the borrower's funds and record liability",
          "[banksim][interbank]") {
    auto sys = two_banks();
    sys.interbank_loan("alpha", "beta", 20.0, 1.0);
    const auto& beta = sys.bank("beta");
    REQUIRE(beta.interbank_received.size() == 1);
    REQUIRE(beta.interbank_received[0].lender == "alpha");
    REQUIRE(beta.interbank_received[0].amount == 20.0);
    REQUIRE(beta.debt_total() == 20.0);
    const auto& alpha = sys.bank("alpha");
    REQUIRE(alpha.wealth == 30.0);
    REQUIRE(alpha.outstanding_credit == 20.0);
    REQUIRE(alpha.ratio_disclosures.size() == 1);
}

TEST_CASE("interbank lending requires wealth and ratio headroom",
          "[banksim][interbank]") {
    auto sys = two_banks();
    REQUIRE_THROWS_AS(sys.interbank_loan("alpha", "beta", 60.0, 1.0), RefusalError);
    REQUIRE_THROWS_AS(sys.interbank_loan("alpha", "beta", 40.0, 0.2), RefusalError);
}

TEST_CASE("repayment returns ordinary wealth to the lender", "[banksim][interbank]") {
    auto sys = two_banks();
    sys.interbank_loan("alpha", "beta", 20.0, 1.0);
    sys.repay_interbank("beta", "alpha", 12.0);
    REQUIRE_THAT(sys.bank("beta").tagged_total(), Catch::Matchers::WithinAbs(8.0, 1e-12));
    REQUIRE_THAT(sys.bank("beta").debt_total(), Catch::Matchers::WithinAbs(8.0, 1e-12));
    REQUIRE_THAT(sys.bank("alpha").wealth, Catch::Matchers::WithinAbs(42.0, 1e-12));
    REQUIRE_THAT(sys.bank("alpha").outstanding_credit,
                 Catch::Matchers::WithinAbs(8.0, 1e-12));
    REQUIRE_THROWS_AS(sys.repay_interbank("beta", "alpha", 100.0), ValidationError);
}

TEST_CASE("losses deplete wealth; the boundary does not collapse",
          "[banksim][loss]") {
    BankSystem sys({{"solo", 50.0, 0.0, 10.0}, {"other", 10.0, 0.0, 5.0}});
    sys.absorb_loss("solo", 4.0);
    REQUIRE(sys.bank("solo").wealth == 6.0);
    REQUIRE(!sys.bank("solo").collapsed);
    sys.absorb_loss("solo", 6.0);
    REQUIRE(sys.bank("solo").wealth == 0.0);
    REQUIRE(!sys.bank("solo").collapsed);
}

TEST_CASE("collapse hands the shortfall to interbank lenders pro-rata",
          "[banksim][collapse]") {
    BankSystem sys({{"l1", 100.0, 0.0, 50.0},
                    {"l2", 100.0, 0.0, 50.0},
                    {"b", 40.0, 0.0, 10.0}});
    sys.interbank_loan("l1", "b", 6.0, 1.0);
    sys.interbank_loan("l2", "b", 2.0, 1.0);
    sys.absorb_loss("b", 12.0);  // wealth 10 -> -2: collapse, shortfall 2
    const auto& b = sys.bank("b");
    REQUIRE(b.collapsed);
    REQUIRE_THAT(b.wealth, Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(sys.bank("l1").wealth, Catch::Matchers::WithinAbs(44.0 - 1.5, 1e-12));
    REQUIRE_THAT(sys.bank("l2").wealth, Catch::Matchers::WithinAbs(48.0 - 0.5, 1e-12));
    // claims written off in full
    REQUIRE(sys.bank("l1").outstanding_credit == 0.0);
    REQUIRE(sys.bank("l2").outstanding_credit == 0.0);
    REQUIRE_THROWS_AS(sys.issue_loan("b", 1.0, FundingSource::deposits, 1.0),
                      StateError);
}

TEST_CASE("full liability: deep collapse costs the lender its whole claim",
          "[banksim][collapse]") {
    BankSystem sys({{"lender", 100.0, 0.0, 50.0}, {"borrower", 20.0, 0.0, 5.0}});
    sys.interbank_loan("lender", "borrower", 15.0, 1.0);
    sys.absorb_loss("borrower", 25.0);  // wealth 5 -> -20, debt 15: full write-down
    REQUIRE(sys.bank("borrower").collapsed);
    // lender: 50 - 15 (lent) - 15 (liability) = 20
    REQUIRE_THAT(sys.bank("lender").wealth, Catch::Matchers::WithinAbs(20.0, 1e-12));
    // uncovered remainder stays with the collapsed bank
    REQUIRE_THAT(sys.bank("borrower").wealth, Catch::Matchers::WithinAbs(-5.0, 1e-12));
}

TEST_CASE("collapse can cascade along the lending chain", "[banksim][collapse]") {
    BankSystem sys({{"a", 100.0, 0.0, 10.0},
                    {"b", 100.0, 0.0, 20.0},
                    {"c", 100.0, 0.0, 30.0}});
    sys.interbank_loan("c", "b", 20.0, 1.0);  // c wealth 10
    sys.interbank_loan("b", "a", 15.0, 1.0);  // b wealth 5
    sys.absorb_loss("a", 30.0);
    // a: 10 -> -20, hands 15 to b; b: 5 -> -10, hands 10 of 20 owed to c.
    REQUIRE(sys.bank("a").collapsed);
    REQUIRE(sys.bank("b").collapsed);
    REQUIRE(!sys.bank("c").collapsed);
    REQUIRE_THAT(sys.bank("c").wealth, Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(sys.bank("a").wealth, Catch::Matchers::WithinAbs(-5.0, 1e-12));
}

TEST_CASE("conservation holds across every operation", "[banksim][conservation]") {
    auto sys = two_banks();
    const double q0 = sys.total_holdings();
    sys.issue_loan("alpha", 40.0, FundingSource::deposits, 1.0);
    sys.interbank_loan("alpha", "beta", 25.0, 1.0);
    sys.issue_loan("beta", 10.0, FundingSource::interbank, 1.0);
    sys.move_deposits("beta", "alpha", 5.0, true);
    sys.repay_interbank("beta", "alpha", 7.0);
    sys.settlement_gain("alpha", 3.0);
    sys.absorb_loss("beta", 2.0);
    REQUIRE(std::abs(conservation_drift(sys, q0)) <= 1e-9);
}

TEST_CASE("randomized event streams conserve holdings and stay compliant",
          "[banksim][conservation][property]") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        BankSystem sys({{"a", 200.0, 0.0, 60.0},
                        {"b", 150.0, 0.0, 40.0},
                        {"c", 120.0, 0.0, 30.0}});
        const double q0 = sys.total_holdings();
        const int applied = run_random_events(sys, 1000, seed);
        REQUIRE(applied > 200);
        REQUIRE(std::abs(conservation_drift(sys, q0)) <= 1e-9);
        auto report = check_compliance(sys.history());
        REQUIRE(report.clean());
    }
}

TEST_CASE("random event streams are deterministic in the seed",
          "[banksim][determinism]") {
    BankSystem s1({{"a", 200.0, 0.0, 60.0}, {"b", 150.0, 0.0, 40.0}});
    BankSystem s2({{"a", 200.0, 0.0, 60.0}, {"b", 150.0, 0.0, 40.0}});
    run_random_events(s1, 500, 99);
    run_random_events(s2, 500, 99);
    REQUIRE(s1.history().size() == s2.history().size());
    REQUIRE(s1.total_holdings() == s2.total_holdings());
    for (std::size_t i = 0; i < s1.history().size(); ++i) {
        REQUIRE(s1.history()[i].kind == s2.history()[i].kind);
        REQUIRE(s1.history()[i].amount == s2.history()[i].amount);
    }
}

TEST_CASE("each violation class is detected at its record index",
          "[banksim][compliance]") {
    for (char rule : {'a', 'b', 'c', 'd'}) {
        auto sys = two_banks();
        sys.issue_loan("alpha", 10.0, FundingSource::deposits, 1.0);
        inject_violation(sys, rule);
        sys.issue_loan("beta", 5.0, FundingSource::deposits, 1.0);
        auto report = check_compliance(sys.history());
        CAPTURE(rule);
        REQUIRE(report.violations.size() == 1);
        REQUIRE(report.violations[0].rule == rule);
        REQUIRE(report.violations[0].record_index == 1);
    }
}

TEST_CASE("unordered history is rejected", "[banksim][compliance][errors]") {
    std::vector<TransferRecord> history(2);
    history[0].seq = 5;
    history[1].seq = 3;
    REQUIRE_THROWS_AS(check_compliance(history), ValidationError);
}

TEST_CASE("disclosure sequence reconstructs the ratio at each issuance",
          "[banksim][disclosure][property]") {
    BankSystem sys({{"a", 200.0, 0.0, 60.0}, {"b", 150.0, 0.0, 40.0}});
    std::map<std::string, std::pair<double, double>> state{
        {"a", {0.0, 200.0}}, {"b", {0.0, 150.0}}};  // credit, deposits
    run_random_events(sys, 400, 5);

    std::map<std::string, std::size_t> next_disclosure{{"a", 0}, {"b", 0}};
    for (const auto& r : sys.history()) {
        if (r.kind == TransferKind::loan_funding ||
            r.kind == TransferKind::interbank_loan) {
            auto& [credit, deposits] = state[r.from];
            credit += r.amount;
            const auto& bank = sys.bank(r.from);
            const std::size_t d = next_disclosure[r.from]++;
            REQUIRE(d < bank.ratio_disclosures.size());
            REQUIRE(bank.ratio_disclosures[d].seq == r.seq);
            REQUIRE_THAT(bank.ratio_disclosures[d].ratio,
                         Catch::Matchers::WithinRel(credit / deposits, 1e-9));
        } else if (r.kind == TransferKind::interbank_repayment) {
            state[r.to].first -= r.amount;
        } else if (r.kind == TransferKind::deposit_move) {
            state[r.from].second -= r.amount;
            state[r.to].second += r.amount;
        }
    }
    // every issuance had a disclosure and nothing else created one
    for (const auto& [id, count] : next_disclosure)
        REQUIRE(sys.bank(id).ratio_disclosures.size() == count);
}

TEST_CASE("tagged funds only shrink through funding or repayment",
          "[banksim][provenance][property]") {
    BankSystem sys({{"a", 200.0, 0.0, 60.0}, {"b", 150.0, 0.0, 40.0}});
    std::map<std::string, double> tagged{{"a", 0.0}, {"b", 0.0}};
    std::size_t checked = 0;
    run_random_events(sys, 600, 12);
    for (const auto& r : sys.history()) {
        switch (r.kind) {
            case TransferKind::interbank_loan:
                tagged[r.to] += r.amount;
                break;
            case TransferKind::loan_funding:
                if (r.source == FundingSource::interbank) tagged[r.from] -= r.amount;
                break;
            case TransferKind::interbank_repayment: {
                // repayment consumes tagged funds first
                const double used = std::min(tagged[r.from], r.amount);
                tagged[r.from] -= used;
                break;
            }
            default:
                break;
        }
        for (auto& [id, expect] : tagged) {
            REQUIRE(expect >= -1e-9);
            ++checked;
        }
    }
    REQUIRE(checked > 0);
    for (const auto& [id, expect] : tagged)
        REQUIRE_THAT(sys.bank(id).tagged_total(),
                     Catch::Matchers::WithinAbs(expect, 1e-9));
}

TEST_CASE("operation amounts must be positive", "[banksim][errors]") {
    auto sys = two_banks();
    REQUIRE_THROWS_AS(sys.issue_loan("alpha", 0.0, FundingSource::deposits, 1.0),
                      ValidationError);
    REQUIRE_THROWS_AS(sys.interbank_loan("alpha", "beta", -1.0, 1.0), ValidationError);
    REQUIRE_THROWS_AS(sys.move_deposits("alpha", "beta", 0.0, true), ValidationError);
    REQUIRE_THROWS_AS(sys.bank("nobody"), ValidationError);
}
