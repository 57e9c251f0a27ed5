#include <map>
#include <set>

#include "doctest.h"
#include "oracles/frozen_constants.hpp"
#include "tabenc/datagen.hpp"
#include "tabenc/json_io.hpp"
#include "tabenc/sqlexec.hpp"

using namespace tabenc;
using namespace tabenc::datagen;

TEST_CASE("table dimensions") {
    GenSpec spec;
    Rng rng(1);
    std::map<std::size_t, int> rows, cols;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Table t = gen_table(spec, rng);
        CHECK(t.n_rows() >= 6);
        CHECK(t.n_rows() <= 8);
        CHECK(t.n_cols() >= 6);
        CHECK(t.n_cols() <= 8);
        ++rows[t.n_rows()];
        ++cols[t.n_cols()];
    }
    for (std::size_t d = 6; d <= 8; ++d) {
        CHECK(std::abs(rows[d] / double(n) - 1.0 / 3) <= 0.02);
        CHECK(std::abs(cols[d] / double(n) - 1.0 / 3) <= 0.02);
    }
    GenSpec one;
    one.row_values = one.col_values = {1};
    const Table t = gen_table(one, rng);
    CHECK(t.n_rows() == 1);
    CHECK(t.n_cols() == 1);
}

TEST_CASE("consistency perturbation") {
    GenSpec spec;
    Rng rng(2);
    const Table t = gen_table(spec, rng);
    CHECK(perturb_consistency(t, 0.0, "77", rng) == t);
    const Table all = perturb_consistency(t, 1.0, "77", rng);
    CHECK(all.headers() == t.headers());
    for (const auto& row : all.rows())
        for (const auto& c : row) CHECK(c == "77");
    std::size_t total = 0, replaced = 0;
    const std::string v0 = "1000";  // outside the universe, so every hit is visible
    while (total < 10000) {
        const Table a = gen_table(spec, rng);
        const Table b = perturb_consistency(a, 0.4, v0, rng);
        for (std::size_t r = 0; r < a.n_rows(); ++r)
            for (std::size_t c = 0; c < a.n_cols(); ++c, ++total) replaced += b.cell(r, c) == v0;
    }
    CHECK(std::abs(replaced / double(total) - 0.4) <= 0.02);
}

TEST_CASE("transition matrices") {
    const auto u = TransitionMatrix::uniform(5);
    const auto d = TransitionMatrix::deterministic({1, 2, 3, 4, 0});
    CHECK(u.is_row_stochastic());
    CHECK(d.is_row_stochastic());
    const auto m = TransitionMatrix::mix(0.5, d, u);
    CHECK(m.is_row_stochastic());
    CHECK(m.at(0, 1) == doctest::Approx(0.5 + 0.1));
    CHECK(m.at(0, 2) == doctest::Approx(0.1));

    // S = 0.5: successor probability 0.5 + 0.5 / A
    GenSpec spec;
    const auto model = MixabilityModel::from_spec(spec);
    const auto half = model.transition(0.5);
    Rng rng(3);
    std::size_t hits = 0, n = 50000;
    std::size_t from = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t to = half.sample(from, rng);
        hits += to == model.successor[from];
        from = to;
    }
    const double a = static_cast<double>(model.alphabet.size());
    CHECK(std::abs(hits / double(n) - (0.5 + 0.5 / a)) <= 0.03);
}

TEST_CASE("mixability determinism") {
    GenSpec spec;
    const auto model = MixabilityModel::from_spec(spec);
    const auto det = model.transition(1.0);
    Rng r1(5), r2(99);
    for (std::size_t first = 0; first < model.alphabet.size(); ++first)
        CHECK(generate_chain(first, 8, det, r1) == generate_chain(first, 8, det, r2));

    // S = 0: successor counts uniform by chi-square at alpha = 0.01
    const auto uni = model.transition(0.0);
    const std::size_t A = model.alphabet.size();
    REQUIRE(A == 20);
    Rng rng(6);
    std::vector<double> counts(A, 0.0);
    const std::size_t n = 20000;
    for (std::size_t i = 0; i < n; ++i) counts[uni.sample(i % A, rng)] += 1.0;
    double chi2 = 0.0;
    const double expect = static_cast<double>(n) / A;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < oracle::kChi2Crit19);

    // Hamming similarity of regenerated rows is nondecreasing in S
    double prev = -1.0;
    for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto m = model.transition(s);
        Rng a(10), b(20);
        std::size_t same = 0, total = 0;
        for (std::size_t first = 0; first < 2000; ++first) {
            const auto x = generate_chain(first % A, 8, m, a);
            const auto y = generate_chain(first % A, 8, m, b);
            for (std::size_t k = 1; k < 8; ++k, ++total) same += x[k] == y[k];
        }
        const double sim = same / double(total);
        CHECK(sim >= prev);
        prev = sim;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("templates") {
    const Table t({"c1", "c2", "c3"}, {{"1", "2", "3"}, {"4", "5", "6"}});
    Rng rng(7);
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i) seen.insert(instantiate_template(TemplateId::Select, t, rng));
    CHECK(seen == std::set<std::string>{"select c1", "select c2", "select c3"});
    std::set<std::string> limits;
    for (int i = 0; i < 200; ++i) {
        const auto q = sql::parse_sql(instantiate_template(TemplateId::SelectLimit, t, rng));
        REQUIRE(q.limit.has_value());
        limits.insert(std::to_string(*q.limit));
    }
    CHECK(limits == std::set<std::string>{"1", "2", "3"});
    const Table narrow({"c1"}, {{"1"}});
    CHECK_THROWS_AS(instantiate_template(TemplateId::Where4, narrow, rng), GenerationError);
    for (int i = 0; i < 100; ++i) {
        const auto q = sql::parse_sql(instantiate_template(TemplateId::In3, t, rng));
        CHECK(std::get<sql::InList>(q.where->atoms[0]).values.size() == 3);
    }
}

TEST_CASE("datasets") {
    const auto spec = GenSpec::for_suite("train", 100, Seed{7});
    GenStats stats;
    const auto a = dataset_to_jsonl(gen_dataset(spec, &stats));
    CHECK(a == dataset_to_jsonl(gen_dataset(spec)));
    CHECK(stats.skipped == 0);

    // gold answers re-execute
    for (const auto& ex : gen_dataset(GenSpec::for_suite("compositional", 200, Seed{3})))
        CHECK(sql::execute(ex.query, ex.table) == ex.answer);

    for (const auto& ex : gen_dataset(GenSpec::for_suite("structure", 300, Seed{4}))) {
        const auto r = ex.table.n_rows(), c = ex.table.n_cols();
        CHECK_FALSE((r >= 6 && r <= 8 && c >= 6 && c <= 8));
        const std::set<std::size_t> allowed{4, 5, 9, 10, 11, 12};
        CHECK((allowed.count(r) || allowed.count(c)));
    }

    // compositional forms never appear in training data
    for (const auto& ex : gen_dataset(GenSpec::for_suite("train", 2000, Seed{5}))) {
        const auto q = sql::parse_sql(ex.query);
        bool has_in = false;
        if (q.where)
            for (const auto& atom : q.where->atoms) has_in |= std::holds_alternative<sql::InList>(atom);
        CHECK_FALSE((q.limit && q.where));
        if (has_in) CHECK(q.where->atoms.size() == 1);
    }

    GenSpec drop = GenSpec::for_suite("train", 300, Seed{6});
    drop.drop_empty = true;
    for (const auto& ex : gen_dataset(drop)) CHECK_FALSE(ex.answer.empty());

    GenSpec bad;
    bad.consistency_r = 1.5;
    bad.disturbance = Disturbance::Consistency;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(GenSpec::for_suite("nope", 1, Seed{1}), ConfigError);
}

TEST_CASE("template coverage") {
    const auto data = gen_dataset(GenSpec::for_suite("train", 10000, Seed{8}));
    std::map<std::string, int> shapes;
    for (const auto& ex : data) {
        const auto q = sql::parse_sql(ex.query);
        std::string key = q.limit ? "limit" : "plain";
        if (q.where) {
            const auto& w = *q.where;
            if (std::holds_alternative<sql::InList>(w.atoms[0]))
                key = "in" + std::to_string(std::get<sql::InList>(w.atoms[0]).values.size());
            else if (std::holds_alternative<sql::SubqueryEq>(w.atoms[0]))
                key = "sub";
            else
                key = "where" + std::to_string(w.atoms.size());
        }
        ++shapes[key];
    }
    CHECK(shapes.size() == 10);
    for (const auto& [k, n] : shapes) {
        INFO(k);
        CHECK(n / double(data.size()) >= 0.05);
    }
}
