#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fmt/format.h>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prodcredit/errors.hpp"
#include "prodcredit/rng.hpp"
#include "prodcredit/util.hpp"

namespace prodcredit::banksim {

// Funds received from another bank. They carry a credit-only tag: usable to
// fund projects directly, never part of the deposit base.
struct TaggedFunds {
    std::string lender;
    double amount = 0.0;
};

// What the bank still owes a lender (liability chain for collapse).
struct InterbankDebt {
    std::string lender;
    double outstanding = 0.0;
};

struct RatioDisclosure {
    std::int64_t seq = 0;
    double ratio = 0.0;  // outstanding credit / deposits at issuance
};

struct BankLedger {
    std::string id;
    double deposits = 0.0;
    double outstanding_credit = 0.0;
    double wealth = 0.0;
    std::vector<TaggedFunds> interbank_received;
    std::vector<InterbankDebt> interbank_debt;
    std::vector<RatioDisclosure> ratio_disclosures;
    bool collapsed = false;

    double tagged_total() const {
        double acc = 0.0;
        for (const auto& f : interbank_received) acc += f.amount;
        return acc;
    }
    double debt_total() const {
        double acc = 0.0;
        for (const auto& d : interbank_debt) acc += d.outstanding;
        return acc;
    }
};

enum class TransferKind {
    deposit_move,
    interbank_loan,
    loan_funding,
    interbank_repayment,
    loss_absorption,
    settlement_gain,
    interbank_to_deposits,  // never produced by ledger operations; audit drills only
};

inline const char* to_string(TransferKind k) {
    switch (k) {
        case TransferKind::deposit_move: return "deposit_move";
        case TransferKind::interbank_loan: return "interbank_loan";
        case TransferKind::loan_funding: return "loan_funding";
        case TransferKind::interbank_repayment: return "interbank_repayment";
        case TransferKind::loss_absorption: return "loss_absorption";
        case TransferKind::settlement_gain: return "settlement_gain";
        case TransferKind::interbank_to_deposits: return "interbank_to_deposits";
    }
    return "?";
}

enum class FundingSource { deposits, interbank };

struct TransferRecord {
    std::int64_t seq = 0;
    TransferKind kind = TransferKind::deposit_move;
    std::string from;
    std::string to;
    double amount = 0.0;
    bool consented = true;           // deposit moves
    FundingSource source = FundingSource::deposits;  // loan funding
    std::string source_bank;         // whose deposit base funds the loan
    bool disclosed = true;           // ratio disclosure accompanied the issue
};

struct ComplianceViolation {
    std::size_t record_index = 0;
    char rule = '?';  // a: tag laundering, b: unconsented move, c: missing
                      // disclosure, d: foreign deposit funding
    std::string detail;
};

struct ComplianceReport {
    std::vector<ComplianceViolation> violations;
    bool clean() const { return violations.empty(); }
};

// Scans an ordered transfer history for the lending-rule violations:
//  (a) interbank funds entering any deposit base,
//  (b) deposit moves without the holder's consent,
//  (c) loans issued without a ratio disclosure,
//  (d) loans funded from another institute's deposits.
inline ComplianceReport check_compliance(std::span<const TransferRecord> history) {
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i].seq <= history[i - 1].seq)
            throw ValidationError(fmt::format(
                "compliance: history out of order at index {}", i));
    ComplianceReport report;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& r = history[i];
        switch (r.kind) {
            case TransferKind::interbank_to_deposits:
                report.violations.push_back(
                    {i, 'a', fmt::format("interbank funds of {} entered the deposit base",
                                         r.from)});
                break;
            case TransferKind::deposit_move:
                if (!r.consented)
                    report.violations.push_back(
                        {i, 'b', fmt::format("deposits moved {} -> {} without consent",
                                             r.from, r.to)});
                break;
            case TransferKind::loan_funding:
                if (!r.disclosed)
                    report.violations.push_back(
                        {i, 'c', fmt::format("{} issued a loan without a ratio disclosure",
                                             r.from)});
                if (r.source == FundingSource::deposits && !r.source_bank.empty() &&
                    r.source_bank != r.from)
                    report.violations.push_back(
                        {i, 'd', fmt::format("{} funded a loan from deposits held at {}",
                                             r.from, r.source_bank)});
                break;
            default:
                break;
        }
    }
    return report;
}

// Multi-bank ledger with a full transfer history. Money held by banks is
// deposits + wealth + tagged interbank funds; that total changes only
// through recorded external flows (settlement gains and losses in, project
// disbursements of tagged funds out), which the system accumulates so
// conservation is checkable to the last bit of accounting.
class BankSystem {
public:
    explicit BankSystem(std::vector<BankLedger> banks) : banks_(std::move(banks)) {
        for (std::size_t i = 0; i < banks_.size(); ++i) {
            if (index_.count(banks_[i].id))
                throw ValidationError(fmt::format("duplicate bank id {}", banks_[i].id));
            index_[banks_[i].id] = i;
        }
    }

    const std::vector<BankLedger>& banks() const { return banks_; }
    const std::vector<TransferRecord>& history() const { return history_; }

    BankLedger& bank(const std::string& id) {
        auto it = index_.find(id);
        if (it == index_.end())
            throw ValidationError(fmt::format("unknown bank id {}", id));
        return banks_[it->second];
    }
    const BankLedger& bank(const std::string& id) const {
        return const_cast<BankSystem*>(this)->bank(id);
    }

    double total_holdings() const {
        double acc = 0.0;
        for (const auto& b : banks_) acc += b.deposits + b.wealth + b.tagged_total();
        return acc;
    }
    double external_inflows() const { return external_in_; }
    double external_outflows() const { return external_out_; }

    // Issues a loan to an outside borrower. The post-issue credit/deposit
    // ratio is disclosed and must not breach max_ratio; interbank-sourced
    // funding consumes tagged funds and leaves the banking system as a
    // project disbursement.
    const TransferRecord& issue_loan(const std::string& bank_id, double amount,
                                     FundingSource source, double max_ratio,
                                     const std::string& counterparty = "enterprise") {
        BankLedger& b = bank(bank_id);
        require_active(b);
        require_positive(amount, "issue_loan");
        const double ratio = post_issue_ratio(b, amount);
        if (ratio > max_ratio)
            throw RefusalError(fmt::format(
                "{}: post-issue credit/deposit ratio {:.6g} exceeds cap {:.6g}",
                bank_id, ratio, max_ratio));
        if (source == FundingSource::interbank) {
            if (b.tagged_total() < amount - 1e-12)
                throw ProvenanceError(fmt::format(
                    "{}: only {:.6g} of tagged interbank funds available for a "
                    "{:.6g} loan",
                    bank_id, b.tagged_total(), amount));
            external_out_ += consume_tagged(b, amount);  // disbursed to the project
        }
        b.outstanding_credit += amount;
        b.ratio_disclosures.push_back({next_seq_, ratio});
        return push({next_seq_++, TransferKind::loan_funding, bank_id, counterparty,
                     amount, true, source, bank_id, true});
    }

    // Bank-to-bank loan out of the lender's wealth. The borrower receives
    // credit-only tagged funds and the liability chain is recorded.
    const TransferRecord& interbank_loan(const std::string& lender_id,
                                         const std::string& borrower_id, double amount,
                                         double lender_max_ratio) {
        if (lender_id == borrower_id)
            throw ValidationError("interbank loan requires two distinct banks");
        BankLedger& lender = bank(lender_id);
        BankLedger& borrower = bank(borrower_id);
        require_active(lender);
        require_active(borrower);
        require_positive(amount, "interbank_loan");
        const double ratio = post_issue_ratio(lender, amount);
        if (ratio > lender_max_ratio)
            throw RefusalError(fmt::format(
                "{}: interbank lending would push ratio to {:.6g} (cap {:.6g})",
                lender_id, ratio, lender_max_ratio));
        if (lender.wealth < amount - 1e-12)
            throw RefusalError(fmt::format(
                "{}: wealth {:.6g} cannot fund an interbank loan of {:.6g}",
                lender_id, lender.wealth, amount));
        lender.wealth -= amount;
        lender.outstanding_credit += amount;
        lender.ratio_disclosures.push_back({next_seq_, ratio});
        borrower.interbank_received.push_back({lender_id, amount});
        borrower.interbank_debt.push_back({lender_id, amount});
        return push({next_seq_++, TransferKind::interbank_loan, lender_id, borrower_id,
                     amount});
    }

    // Repayment draws on tagged funds first, then wealth; the proceeds join
    // the lender's ordinary wealth.
    const TransferRecord& repay_interbank(const std::string& borrower_id,
                                          const std::string& lender_id, double amount) {
        BankLedger& borrower = bank(borrower_id);
        BankLedger& lender = bank(lender_id);
        require_positive(amount, "repay_interbank");
        double owed = 0.0;
        for (const auto& d : borrower.interbank_debt)
            if (d.lender == lender_id) owed += d.outstanding;
        if (owed < amount - 1e-12)
            throw ValidationError(fmt::format(
                "{} owes {} only {:.6g}, cannot repay {:.6g}", borrower_id, lender_id,
                owed, amount));
        if (borrower.wealth + borrower.tagged_total() < amount - 1e-12)
            throw RefusalError(fmt::format(
                "{}: insufficient funds to repay {:.6g}", borrower_id, amount));
        const double from_tagged =
            consume_tagged(borrower, std::min(amount, borrower.tagged_total()));
        borrower.wealth -= amount - from_tagged;
        reduce_debt(borrower, lender_id, amount);
        lender.wealth += amount;
        lender.outstanding_credit = std::max(0.0, lender.outstanding_credit - amount);
        return push({next_seq_++, TransferKind::interbank_repayment, borrower_id,
                     lender_id, amount});
    }

    const TransferRecord& move_deposits(const std::string& from_id,
                                        const std::string& to_id, double amount,
                                        bool consented) {
        BankLedger& from = bank(from_id);
        BankLedger& to = bank(to_id);
        require_positive(amount, "move_deposits");
        if (from.deposits < amount - 1e-12)
            throw RefusalError(fmt::format("{}: deposits {:.6g} cannot cover a move of {:.6g}",
                                           from_id, from.deposits, amount));
        from.deposits -= amount;
        to.deposits += amount;
        return push({next_seq_++, TransferKind::deposit_move, from_id, to_id, amount,
                     consented});
    }

    // Settlement loss against the bank's wealth. A wealth below zero marks
    // the bank collapsed and hands the shortfall to its interbank lenders.
    void absorb_loss(const std::string& bank_id, double loss) {
        if (loss < 0.0) throw ValidationError("absorb_loss: loss must be >= 0");
        if (loss == 0.0) return;
        BankLedger& b = bank(bank_id);
        b.wealth -= loss;
        external_in_ -= loss;  // value destroyed by the settlement
        push({next_seq_++, TransferKind::loss_absorption, bank_id, "", loss});
        if (b.wealth < 0.0 && !b.collapsed) collapse(b);
    }

    void settlement_gain(const std::string& bank_id, double gain) {
        if (gain < 0.0) throw ValidationError("settlement_gain: gain must be >= 0");
        if (gain == 0.0) return;
        BankLedger& b = bank(bank_id);
        require_active(b);
        b.wealth += gain;
        external_in_ += gain;
        push({next_seq_++, TransferKind::settlement_gain, "", bank_id, gain});
    }

    // Appends a raw record without ledger effects (seeding audit drills).
    const TransferRecord& inject_record(TransferRecord r) {
        r.seq = next_seq_++;
        return push(std::move(r));
    }

private:
    void require_active(const BankLedger& b) const {
        if (b.collapsed)
            throw StateError(fmt::format("bank {} has collapsed", b.id));
    }
    static void require_positive(double amount, const char* op) {
        if (!(amount > 0.0))
            throw ValidationError(fmt::format("{}: amount must be > 0", op));
    }
    static double post_issue_ratio(const BankLedger& b, double amount) {
        if (b.deposits <= 0.0) return std::numeric_limits<double>::infinity();
        return (b.outstanding_credit + amount) / b.deposits;
    }
    // Returns the amount actually drawn from the tagged pool (FIFO).
    double consume_tagged(BankLedger& b, double amount) {
        double remaining = amount;
        auto it = b.interbank_received.begin();
        while (remaining > 0.0 && it != b.interbank_received.end()) {
            const double take = std::min(it->amount, remaining);
            it->amount -= take;
            remaining -= take;
            it = it->amount <= 0.0 ? b.interbank_received.erase(it) : std::next(it);
        }
        return amount - remaining;
    }
    static void reduce_debt(BankLedger& b, const std::string& lender, double amount) {
        double remaining = amount;
        auto it = b.interbank_debt.begin();
        while (remaining > 1e-15 && it != b.interbank_debt.end()) {
            if (it->lender != lender) {
                ++it;
                continue;
            }
            const double take = std::min(it->outstanding, remaining);
            it->outstanding -= take;
            remaining -= take;
            it = it->outstanding <= 1e-15 ? b.interbank_debt.erase(it) : std::next(it);
        }
    }

    // Full liability: the shortfall moves to the interbank lenders pro-rata
    // by outstanding amount (capped by their exposure); every lender writes
    // off its now-worthless claim. Lenders may collapse in turn.
    void collapse(BankLedger& b) {
        b.collapsed = true;
        const double shortfall = -b.wealth;
        const double debt = b.debt_total();
        if (debt <= 0.0 || shortfall <= 0.0) return;
        const double transferred = std::min(shortfall, debt);
        std::vector<InterbankDebt> debts = b.interbank_debt;
        b.interbank_debt.clear();
        b.wealth += transferred;
        std::vector<std::string> to_collapse;
        for (const auto& d : debts) {
            const double share = transferred * d.outstanding / debt;
            BankLedger& lender = bank(d.lender);
            lender.wealth -= share;
            lender.outstanding_credit =
                std::max(0.0, lender.outstanding_credit - d.outstanding);
            push({next_seq_++, TransferKind::loss_absorption, b.id, d.lender, share});
            if (lender.wealth < 0.0 && !lender.collapsed) to_collapse.push_back(d.lender);
        }
        for (const auto& id : to_collapse) {
            BankLedger& lender = bank(id);
            if (lender.wealth < 0.0 && !lender.collapsed) collapse(lender);
        }
    }

    const TransferRecord& push(TransferRecord r) {
        history_.push_back(std::move(r));
        return history_.back();
    }

    std::vector<BankLedger> banks_;
    std::map<std::string, std::size_t> index_;
    std::vector<TransferRecord> history_;
    std::int64_t next_seq_ = 0;
    double external_in_ = 0.0;
    double external_out_ = 0.0;
};

// Net accounting drift: zero (up to rounding) whenever every balance change
// went through a ledger operation.
inline double conservation_drift(const BankSystem& system, double initial_holdings) {
    return system.total_holdings() -
           (initial_holdings + system.external_inflows() - system.external_outflows());
}

// Randomized but legal event stream for invariant and determinism tests.
// Refused operations (ratio breaches, insufficient funds) are skipped;
// everything that lands is compliant by construction.
inline int run_random_events(BankSystem& system, int n_events, std::uint64_t seed,
                             double max_ratio = 1.0) {
    auto gen = rng::stream_for(seed, 0);
    std::vector<std::string> ids;
    for (const auto& b : system.banks()) ids.push_back(b.id);
    if (ids.size() < 2)
        throw ValidationError("random events need at least two banks");
    int applied = 0;
    for (int e = 0; e < n_events; ++e) {
        const double roll = gen.next_uniform();
        const auto& a = ids[gen.next_u64() % ids.size()];
        auto& bank_a = system.bank(a);
        std::string b = a;
        while (b == a) b = ids[gen.next_u64() % ids.size()];
        try {
            if (roll < 0.35) {
                system.issue_loan(a, 1.0 + 20.0 * gen.next_uniform(),
                                  FundingSource::deposits, max_ratio);
            } else if (roll < 0.45) {
                system.issue_loan(a, 1.0 + 0.8 * bank_a.tagged_total() * gen.next_uniform(),
                                  FundingSource::interbank, max_ratio);
            } else if (roll < 0.60) {
                system.interbank_loan(a, b, 1.0 + 10.0 * gen.next_uniform(), max_ratio);
            } else if (roll < 0.70) {
                system.move_deposits(a, b, 1.0 + 5.0 * gen.next_uniform(), true);
            } else if (roll < 0.80) {
                double owed = 0.0;
                for (const auto& d : system.bank(b).interbank_debt)
                    if (d.lender == a) owed += d.outstanding;
                if (owed > 0.5)
                    system.repay_interbank(b, a, 0.5 * owed);
                else
                    continue;
            } else if (roll < 0.90) {
                system.settlement_gain(a, 0.5 + 3.0 * gen.next_uniform());
            } else {
                system.absorb_loss(a, 0.5 + 2.0 * gen.next_uniform());
            }
            ++applied;
        } catch (const RefusalError&) {
        } catch (const ProvenanceError&) {
        } catch (const StateError&) {
        } catch (const ValidationError&) {
        }
    }
    return applied;
}

// Seeds one record-level violation of the given rule class into the history.
inline void inject_violation(BankSystem& system, char rule) {
    const auto& ids = system.banks();
    if (ids.size() < 2) throw ValidationError("violation drill needs two banks");
    const std::string& a = ids[0].id;
    const std::string& b = ids[1].id;
    switch (rule) {
        case 'a':
            system.inject_record({0, TransferKind::interbank_to_deposits, a, a, 5.0});
            break;
        case 'b':
            system.inject_record(
                {0, TransferKind::deposit_move, a, b, 3.0, /*consented=*/false});
            break;
        case 'c': {
            TransferRecord r{0, TransferKind::loan_funding, a, "enterprise", 4.0};
            r.disclosed = false;
            r.source_bank = a;
            system.inject_record(std::move(r));
            break;
        }
        case 'd': {
            TransferRecord r{0, TransferKind::loan_funding, a, "enterprise", 4.0};
            r.source = FundingSource::deposits;
            r.source_bank = b;
            system.inject_record(std::move(r));
            break;
        }
        default:
            throw ValidationError(fmt::format("unknown violation rule '{}'", rule));
    }
}

}  // namespace prodcredit::banksim
