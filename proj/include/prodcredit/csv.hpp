#pragma once

#include <charconv>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prodcredit/errors.hpp"
#include "prodcredit/sovereign.hpp"

namespace prodcredit::csv {

inline constexpr const char* kSchemaLine = "# prodcredit-schema v1";

// Deterministic CSV emission: fixed significant digits, C locale semantics,
// newline-terminated rows. Identical values always serialize identically.
class Writer {
public:
    Writer(const std::filesystem::path& path, std::span<const std::string> columns) {
        out_.open(path);
        if (!out_) throw IoError(fmt::format("cannot open {} for writing", path.string()));
        out_ << kSchemaLine << '\n';
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
    }

    void field(double v) { raw(fmt::format("{:.12g}", v)); }
    void field(int v) { raw(fmt::format("{}", v)); }
    void field(std::int64_t v) { raw(fmt::format("{}", v)); }
    void field(std::size_t v) { raw(fmt::format("{}", v)); }
    void field(std::string_view v) { raw(std::string(v)); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

    template <typename... Ts>
    void row(Ts&&... vs) {
        (field(std::forward<Ts>(vs)), ...);
        end_row();
    }

private:
    void raw(const std::string& s) {
        out_ << (first_ ? "" : ",") << s;
        first_ = false;
    }

    std::ofstream out_;
    bool first_ = true;
};

namespace detail {

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    while (begin != end && *begin == ' ') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw IoError(fmt::format("{}: cannot parse '{}' as a number", context, s));
    return v;
}

}  // namespace detail

// Rows of numbers under an optional schema/header prologue. Lines starting
// with '#' are skipped; a first non-comment line with any non-numeric cell
// is treated as the header.
inline std::vector<std::vector<double>> read_numeric(const std::filesystem::path& path,
                                                     std::size_t expect_columns) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {} for reading", path.string()));
    std::vector<std::vector<double>> rows;
    std::string line;
    bool maybe_header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto cells = detail::split(line);
        if (maybe_header) {
            maybe_header = false;
            bool numeric = true;
            for (const auto& c : cells) {
                double v;
                auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
                if (ec != std::errc{} || ptr != c.data() + c.size()) {
                    numeric = false;
                    break;
                }
            }
            if (!numeric) continue;  // header row
        }
        if (cells.size() != expect_columns)
            throw IoError(fmt::format("{}:{}: expected {} columns, found {}",
                                      path.string(), line_no, expect_columns,
                                      cells.size()));
        std::vector<double> row;
        for (const auto& c : cells)
            row.push_back(detail::parse_double(
                c, fmt::format("{}:{}", path.string(), line_no)));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Tax path CSV: columns t, tax.
inline sovereign::TaxProcess read_tax(const std::filesystem::path& path) {
    sovereign::TaxProcess tax;
    for (const auto& row : read_numeric(path, 2)) {
        tax.times.push_back(row[0]);
        tax.values.push_back(row[1]);
    }
    tax.validate();
    return tax;
}

// Growth surface CSV: columns t, s, f_p; rows grouped by t, each group
// sharing the full maturity axis.
inline sovereign::GrowthSurface read_growth(const std::filesystem::path& path) {
    sovereign::GrowthSurface g;
    for (const auto& row : read_numeric(path, 3)) {
        const double t = row[0];
        if (g.t_axis.empty() || t != g.t_axis.back()) {
            g.t_axis.push_back(t);
            g.rates.emplace_back();
        }
        if (g.t_axis.size() == 1) g.s_axis.push_back(row[1]);
        g.rates.back().push_back(row[2]);
    }
    g.validate();
    return g;
}

// Bond quote CSV: columns t, maturity, share, price.
inline std::vector<sovereign::BondQuote> read_quotes(const std::filesystem::path& path) {
    std::vector<sovereign::BondQuote> quotes;
    for (const auto& row : read_numeric(path, 4))
        quotes.push_back({row[0], row[1], row[2], row[3]});
    return quotes;
}

}  // namespace prodcredit::csv
