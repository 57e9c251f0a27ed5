#include "doctest.h"
#include "oracles/sql_oracle.hpp"
#include "tabenc/datagen.hpp"
#include "tabenc/sqlexec.hpp"

using namespace tabenc;
using namespace tabenc::sql;

namespace {
oracle::SqlTable view(const Table& t) { return {t.headers(), t.rows()}; }
}  // namespace

TEST_CASE("parse and unparse") {
    const Query q = parse_sql("select c2 where c1 != 42 and c3 = 7");
    CHECK(q.select_column == "c2");
    REQUIRE(q.where.has_value());
    REQUIRE(q.where->atoms.size() == 2);
    const auto& a = std::get<Comparison>(q.where->atoms[0]);
    CHECK(a.column == "c1");
    CHECK(a.op == CmpOp::Ne);
    CHECK(a.value == "42");
    const auto& b = std::get<Comparison>(q.where->atoms[1]);
    CHECK(b.op == CmpOp::Eq);
    CHECK(b.value == "7");
    CHECK(q.where->connectives == std::vector<Connective>{Connective::And});
    CHECK(unparse(q) == "select c2 where c1 != 42 and c3 = 7");

    const Query l = parse_sql("select c1 limit 2");
    CHECK(l.limit == std::optional<std::size_t>(2));
    CHECK_FALSE(l.where.has_value());

    CHECK(unparse(parse_sql("SELECT  c1 FROM table WHERE c2 IN (1,2)")) == "select c1 where c2 in (1, 2)");
    CHECK(unparse(parse_sql("select c3 where c1 = (select c1 where c1 = 5)")) ==
          "select c3 where c1 = (select c1 where c1 = 5)");
}

TEST_CASE("syntax errors") {
    CHECK_THROWS_AS(parse_sql("select c1 from c2"), SyntaxError);
    CHECK_THROWS_AS(parse_sql("select"), SyntaxError);
    CHECK_THROWS_AS(parse_sql("select c1 where"), SyntaxError);
    CHECK_THROWS_AS(parse_sql("select c1 where c2 = 1 and c3 = 2 and c4 = 3 or c5 = 4 and c6 = 5"), SyntaxError);
    CHECK_THROWS_AS(parse_sql("select c1 limit x"), SyntaxError);
    CHECK_THROWS_AS(parse_sql("select c1 where c2 in ()"), SyntaxError);
}

TEST_CASE("execution examples") {
    const Table t({"c1"}, {{"1"}, {"2"}, {"3"}});
    CHECK(execute("select c1 limit 2", t) == std::vector<std::string>{"1", "2"});
    const Table u({"c1", "c2"}, {{"5", "a"}, {"7", "b"}, {"5", "c"}});
    CHECK(execute("select c2 where c1 = 5", u) == std::vector<std::string>{"a", "c"});
    const Table w({"c1", "c2"}, {{"1", "x"}, {"2", "z"}, {"3", "y"}});
    CHECK(execute("select c1 where c2 in (x, y)", w) == std::vector<std::string>{"1", "3"});
    CHECK(execute("select c1 where c2 = q", w).empty());
    CHECK_THROWS_AS(execute("select c9", w), ExecutionError);
    CHECK_THROWS_AS(execute("select c1 where c7 = 1", w), ExecutionError);
}

TEST_CASE("AND and OR chain left to right") {
    const Table t({"c1", "c2", "c3"}, {{"1", "0", "0"}, {"0", "1", "1"}, {"0", "0", "1"}});
    // (c1=1 or c2=1) and c3=1 -> row 2 only; SQL precedence would also keep row 1
    CHECK(execute("select c1 where c1 = 1 or c2 = 1 and c3 = 1", t) == std::vector<std::string>{"0"});
}

TEST_CASE("subquery compares against the first inner value") {
    const Table t({"c1", "c2"}, {{"4", "a"}, {"5", "b"}, {"4", "c"}});
    CHECK(execute("select c2 where c1 = (select c1 where c1 = 4)", t) == std::vector<std::string>{"a", "c"});
    CHECK(execute("select c2 where c1 = (select c1 where c1 = 9)", t).empty());
}

TEST_CASE("denotation accuracy") {
    CHECK(denotation_match({"2", "1"}, {"1", "2"}));
    CHECK_FALSE(denotation_match({"1", "1"}, {"1"}));
    CHECK(denotation_match({"1", "1"}, {"1"}, MatchSemantics::Set));
    CHECK(denotation_match({}, {}));
    CHECK(denotation_accuracy({{"1"}, {"2"}}, {{"1"}, {"3"}}) == 0.5);
    CHECK_THROWS_AS(denotation_accuracy({{"1"}}, {}), InputError);
}

TEST_CASE("generated queries agree with the brute-force evaluator") {
    auto all = datagen::training_templates();
    for (auto id : datagen::compositional_templates()) all.push_back(id);
    Rng rng(31);
    datagen::GenSpec spec;
    spec.row_values = {1, 3, 6, 8};
    spec.col_values = {4, 6, 8};
    spec.value_max = 9;  // small universe so conditions overlap
    for (int n = 0; n < 2000; ++n) {
        const Table t = datagen::gen_table(spec, rng);
        const auto id = all[static_cast<std::size_t>(n) % all.size()];
        const std::string q = datagen::instantiate_template(id, t, rng, {n % 2 == 0, 0, 9});
        REQUIRE(execute(q, t) == oracle::sql_eval(q, view(t)));
        CHECK(unparse(parse_sql(q)) == q);
    }
}

TEST_CASE("extending a condition is monotone") {
    Rng rng(32);
    datagen::GenSpec spec;
    spec.value_max = 5;
    for (int n = 0; n < 300; ++n) {
        const Table t = datagen::gen_table(spec, rng);
        const std::string base = datagen::instantiate_template(datagen::TemplateId::Where2, t, rng, {});
        const std::string extra = " c1 = " + t.cell(rng.index(t.n_rows()), 0);
        const auto b = execute(base, t);
        const auto wider = execute(base + " or" + extra, t);
        const auto narrower = execute(base + " and" + extra, t);
        CHECK(wider.size() >= b.size());
        CHECK(narrower.size() <= b.size());
    }
}
