#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "prodcredit/csv.hpp"
#include "prodcredit/scenario.hpp"

using namespace prodcredit;
using nlohmann::json;

namespace {

scenario::Scenario parse_text(const std::string& text) {
    return scenario::parse(json::parse(text), ".");
}

const char* kMinimalLoanScenario = R"({
  "seed": 1,
  "sampling": { "paths": 100, "steps": 16, "threads": 1 },
  "processes": {
    "out": { "kind": "linear", "x0": 0.0, "rate": 10.0 },
    "price": { "kind": "constant", "x0": 1.0 }
  },
  "loans": [
    { "name": "a", "principal": 10.0, "horizon": 1.0, "repayments": 2,
      "kind": "material", "output": "out", "price_ratio": "price" }
  ]
})";

}  // namespace

TEST_CASE("minimal scenario parses and resolves references", "[scenario]") {
    auto sc = parse_text(kMinimalLoanScenario);
    REQUIRE(sc.seed == 1);
    REQUIRE(sc.sampling.paths == 100);
    REQUIRE(sc.loans.size() == 1);
    REQUIRE(sc.loans[0].terms.n_repayments == 2);
    REQUIRE_NOTHROW(sc.process("out"));
    REQUIRE_THROWS_AS(sc.process("missing"), ValidationError);
}

TEST_CASE("unknown keys are rejected everywhere", "[scenario][strict]") {
    REQUIRE_THROWS_AS(parse_text(R"({ "seed": 1, "sededed": 2 })"), ValidationError);
    REQUIRE_THROWS_AS(parse_text(R"({
        "processes": { "p": { "kind": "constant", "x0": 1.0, "ratee": 2.0 } }
    })"),
                      ValidationError);
    REQUIRE_THROWS_AS(parse_text(R"({
        "hjm": { "family": "ho_lee", "sigma": 0.01 }
    })"),
                      ValidationError);
    REQUIRE_THROWS_AS(parse_text(R"({
        "banks": { "institutions": [ { "id": "a", "deposits": 1.0, "wealth": 1.0,
                                       "welth": 2.0 } ] }
    })"),
                      ValidationError);
}

TEST_CASE("wrong types are rejected with field context", "[scenario][strict]") {
    try {
        parse_text(R"({ "sampling": { "paths": "many" } })");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        REQUIRE(std::string(e.what()).find("sampling.paths") != std::string::npos);
    }
}

TEST_CASE("unresolved loan process references fail at load time",
          "[scenario][strict]") {
    REQUIRE_THROWS_AS(parse_text(R"({
        "processes": { "out": { "kind": "linear", "x0": 0.0, "rate": 1.0 } },
        "loans": [ { "name": "a", "principal": 1.0, "horizon": 1.0, "repayments": 1,
                     "kind": "material", "output": "out", "price_ratio": "nope" } ]
    })"),
                      ValidationError);
}

TEST_CASE("distribution blocks parse every supported law", "[scenario]") {
    auto sc = parse_text(R"({
        "demand": { "beliefs": { "kind": "lognormal", "log_mean": -3.0,
                                 "log_stddev": 0.1 },
                    "maturity": 2.0, "samples": 10, "times": [0.0], "scale_rate": 0.0 }
    })");
    REQUIRE(sc.demand.has_value());
    REQUIRE(sc.demand->beliefs.kind() == Distribution::Kind::lognormal);
    REQUIRE_THROWS_AS(parse_text(R"({
        "demand": { "beliefs": { "kind": "gaussian", "mean": 0.0, "stddev": 1.0 },
                    "maturity": 1.0, "samples": 1, "times": [0.0], "scale_rate": 0.0 }
    })"),
                      ValidationError);
}

TEST_CASE("hjm block builds the configured coefficient family", "[scenario][hjm]") {
    auto sc = parse_text(R"({
        "hjm": { "family": "ho_lee_jumps", "sigma0": 0.02, "jump_scale": 0.4,
                 "jump_intensity": 1.5, "jump_mark_stddev": 0.01,
                 "t_max": 2.0, "grid_steps": 16 }
    })");
    REQUIRE(sc.hjm_block.has_value());
    auto coeffs = sc.hjm_block->coefficients();
    REQUIRE(coeffs.jumps.has_value());
    REQUIRE(coeffs.sigmas.size() == 1);
    const auto grid = sc.hjm_block->grid();
    REQUIRE(grid.n == 16);
    REQUIRE(sc.hjm_block->time_index(grid, 1.0, "checkpoints") == 8);
    REQUIRE_THROWS_AS(sc.hjm_block->time_index(grid, 0.07, "checkpoints"),
                      ValidationError);
}

TEST_CASE("scenario file loading reports parse errors with context",
          "[scenario][errors]") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "prodcredit_scenario_test";
    fs::create_directories(dir);
    {
        std::ofstream bad(dir / "bad.json");
        bad << "{ not json";
    }
    REQUIRE_THROWS_AS(scenario::load(dir / "bad.json"), ValidationError);
    REQUIRE_THROWS_AS(scenario::load(dir / "absent.json"), IoError);
}

TEST_CASE("observed growth surfaces populate a forward surface",
          "[scenario][bridge]") {
    sovereign::GrowthSurface growth;
    growth.t_axis = {0.0, 1.0};
    growth.s_axis = {0.0, 0.5, 1.0};
    growth.rates = {{0.02, 0.02, 0.02}, {0.04, 0.04, 0.04}};
    hjm::TriangleGrid grid{1.0, 4};
    auto field = scenario::forward_surface_from_growth(growth, grid);
    // row at t = 0 carries the first slice, t = 0.5 interpolates halfway
    REQUIRE_THAT(field.at(0, 2), Catch::Matchers::WithinRel(0.02, 1e-12));
    REQUIRE_THAT(field.at(2, 3), Catch::Matchers::WithinRel(0.03, 1e-12));
    REQUIRE_THAT(field.at(4, 4), Catch::Matchers::WithinRel(0.04, 1e-12));

    hjm::TriangleGrid too_wide{3.0, 6};
    REQUIRE_THROWS_AS(scenario::forward_surface_from_growth(growth, too_wide),
                      ValidationError);
}

TEST_CASE("csv round trip: tax, growth, quotes", "[scenario][csv]") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "prodcredit_csv_test";
    fs::create_directories(dir);

    {
        std::vector<std::string> cols{"t", "tax"};
        csv::Writer w(dir / "tax.csv", cols);
        w.row(0.0, 100.0);
        w.row(5.0, 120.0);
    }
    auto tax = csv::read_tax(dir / "tax.csv");
    REQUIRE(tax.times == std::vector<double>{0.0, 5.0});
    REQUIRE_THAT(tax.at(2.5), Catch::Matchers::WithinRel(110.0, 1e-12));

    {
        std::vector<std::string> cols{"t", "s", "f_p"};
        csv::Writer w(dir / "growth.csv", cols);
        for (int j = 0; j <= 4; ++j) w.row(0.0, 1.0 * j, 0.02);
        for (int j = 0; j <= 4; ++j) w.row(1.0, 1.0 * j, 0.03);
    }
    auto growth = csv::read_growth(dir / "growth.csv");
    REQUIRE(growth.t_axis == std::vector<double>{0.0, 1.0});
    REQUIRE(growth.s_axis.size() == 5);
    REQUIRE(growth.rates[1][3] == 0.03);

    {
        std::vector<std::string> cols{"t", "maturity", "share", "price"};
        csv::Writer w(dir / "quotes.csv", cols);
        w.row(0.0, 1.0, 0.01, 1.01);
        w.row(0.0, 2.0, 0.01, 1.02);
    }
    auto quotes = csv::read_quotes(dir / "quotes.csv");
    REQUIRE(quotes.size() == 2);
    REQUIRE(quotes[1].price == 1.02);

    REQUIRE_THROWS_AS(csv::read_tax(dir / "growth.csv"), IoError);
    REQUIRE_THROWS_AS(csv::read_tax(dir / "missing.csv"), IoError);
}
