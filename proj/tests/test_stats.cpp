#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles/beta_oracle.hpp"
#include "oracles/frozen_constants.hpp"
#include "tabenc/rng.hpp"
#include "tabenc/stats.hpp"

using namespace tabenc;
using namespace tabenc::stats;

namespace {

FactorConfig cfg(PositionScheme pe, EmbeddingScheme e, BiasScheme b) {
    FactorConfig c;
    c.pe = pe;
    c.emb = e;
    c.bias = b;
    return c;
}

// y = 0.3 * I(PE = TPE) + N(0, sd^2) on the full PE x E x B grid.
ResultsTable planted(std::uint64_t seed, int reps, double sd = 0.05) {
    Rng rng(seed);
    ResultsTable t;
    for (auto pe : kAllPositionSchemes)
        for (auto e : kAllEmbeddingSchemes)
            for (auto b : kAllBiasSchemes)
                for (int r = 0; r < reps; ++r)
                    t.push_back({cfg(pe, e, b), "s", std::to_string(r),
                                 (pe == PositionScheme::TPE ? 0.3 : 0.0) + sd * rng.normal()});
    return t;
}

const TermResult& term(const AnovaReport& r, const std::string& name) {
    for (const auto& t : r.terms)
        if (t.term == name) return t;
    FAIL("missing term " << name);
    return r.terms.front();
}

}  // namespace

TEST_CASE("F tail closed forms and frozen references") {
    CHECK(f_upper_tail(0.0, 3, 4) == 1.0);
    CHECK(f_upper_tail(INFINITY, 3, 4) == 0.0);
    CHECK(f_upper_tail(1e12, 3, 4) < 1e-12);
    CHECK(std::abs(f_upper_tail(1.0, 10, 10) - 0.5) < 1e-12);
    CHECK(std::abs(oracle::f_tail_series(1.0, 10, 10) - 0.5) < 1e-12);
    for (const auto& r : oracle::kFTails) {
        CHECK(std::abs(f_upper_tail(r.f, r.df1, r.df2) - r.p) < 1e-10);
        CHECK(std::abs(oracle::f_tail_series(r.f, r.df1, r.df2) - r.p) < 1e-10);
    }
    for (const auto& b : oracle::kBetaValues) CHECK(std::abs(incomplete_beta(b.x, b.a, b.b) - b.value) < 1e-10);
    CHECK_THROWS_AS(f_upper_tail(1.0, 0.0, 3), InputError);
}

TEST_CASE("incomplete beta agrees with the series on a grid") {
    for (double a : {0.5, 1.0, 2.5, 7.0, 30.0})
        for (double b : {0.5, 1.5, 4.0, 12.0, 55.0})
            for (double x : {0.01, 0.1, 0.3, 0.5, 0.7, 0.95, 0.999}) {
                INFO(a << " " << b << " " << x);
                CHECK(std::abs(incomplete_beta(x, a, b) - oracle::beta_series(x, a, b)) < 1e-10);
            }
}

TEST_CASE("degenerate and trivial designs") {
    ResultsTable flat;
    for (auto pe : kAllPositionSchemes)
        for (int r = 0; r < 2; ++r) flat.push_back({cfg(pe, EmbeddingScheme::E0, BiasScheme::B0), "s", std::to_string(r), 0.5});
    CHECK_THROWS_AS(anova(flat, parse_terms("PE")), DegenerateDataError);

    ResultsTable two;
    for (int r = 0; r < 2; ++r) {
        two.push_back({cfg(PositionScheme::TPE, EmbeddingScheme::E0, BiasScheme::B0), "s", std::to_string(r), 0.0});
        two.push_back({cfg(PositionScheme::CPE, EmbeddingScheme::E0, BiasScheme::B0), "s", std::to_string(r), 1.0});
    }
    const auto rep = anova(two, parse_terms("PE"));
    CHECK(term(rep, "PE").eta2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(rep.residual.ss) < 1e-12);
    CHECK(rep.residual.df == 2);
}

TEST_CASE("planted effect is recovered") {
    // analytic share: between-level variance 0.15^2 over 0.15^2 + 0.05^2
    const double analytic = 0.0225 / (0.0225 + 0.0025);
    const auto rep = anova(planted(1, 20), parse_terms("PE,E,B,PE*E"));
    CHECK(std::abs(term(rep, "PE").eta2 - analytic) <= 0.05);
    CHECK(term(rep, "PE").p < 1e-10);
    double sum = rep.residual.ss, eta = 0.0;
    for (const auto& t : rep.terms) {
        sum += t.ss;
        eta += t.eta2;
        CHECK(t.eta2 >= 0.0);
        CHECK(t.eta2 <= 1.0);
    }
    CHECK(std::abs(sum - rep.ss_total) < 1e-9);
    CHECK(eta <= 1.0 + 1e-12);
    CHECK(rep.balanced);
}

TEST_CASE("invariances") {
    const auto terms = parse_terms("PE,E,B,PE*B");
    const auto base = planted(2, 5);
    const auto r0 = anova(base, terms);

    auto scaled = base;
    for (auto& row : scaled) row.da *= 3.5;
    const auto r1 = anova(scaled, terms);
    auto shifted = base;
    for (auto& row : shifted) row.da += 0.25;
    const auto r2 = anova(shifted, terms);
    for (std::size_t i = 0; i < r0.terms.size(); ++i) {
        CHECK(r1.terms[i].eta2 == doctest::Approx(r0.terms[i].eta2).epsilon(1e-12));
        CHECK(r2.terms[i].ss == doctest::Approx(r0.terms[i].ss).epsilon(1e-9));
    }

    auto shuffled = base;
    Rng rng(3);
    rng.shuffle(std::span<ResultRow>(shuffled));
    CHECK(anova_to_csv(anova(shuffled, terms)) == anova_to_csv(r0));
}

TEST_CASE("unbalanced designs need the flag") {
    auto t = planted(4, 3);
    t.pop_back();
    CHECK_THROWS_AS(anova(t, parse_terms("PE,E")), InputError);
    const auto rep = anova(t, parse_terms("PE,E"), {true});
    CHECK_FALSE(rep.balanced);
    CHECK(term(rep, "PE").eta2 > 0.8);
}

TEST_CASE("terms and csv") {
    const auto ts = parse_terms("T,M,PE*E");
    REQUIRE(ts.size() == 3);
    CHECK(ts[2].name() == "PE*E");
    CHECK_THROWS_AS(parse_terms("T*M*PE"), ConfigError);
    CHECK_THROWS_AS(parse_terms("X"), ConfigError);

    const ResultRow row{parse_factor_label("T1/M2/CPE/B1/E0"), "structure", "3", 0.125};
    const std::string text = results_header() + "\n" + result_to_csv_line(row) + "\n";
    CHECK(text == "T,M,PE,B,E,suite,replicate,da\nT1,M2,CPE,B1,E0,structure,3,0.125000\n");
    const auto back = parse_results_csv(text);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == row);
    CHECK_THROWS_AS(parse_results_csv("T0,M0,TPE\n"), InputError);

    const auto csv = anova_to_csv(anova(planted(5, 3), parse_terms("PE")));
    CHECK(csv.rfind("term,eta2,p\nPE,", 0) == 0);
    CHECK(csv.find("\nResidual,") != std::string::npos);
}
