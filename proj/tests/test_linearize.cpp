#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles/layout_oracle.hpp"
#include "tabenc/datagen.hpp"
#include "tabenc/linearize.hpp"

using namespace tabenc;

namespace {

std::vector<std::string> symbols(const EncodedInput& e) {
    std::vector<std::string> out;
    for (auto id : e.token_ids) out.push_back(Vocabulary::instance().symbol(id));
    return out;
}

TokenRole role_of(oracle::Kind k) {
    switch (k) {
        case oracle::Q: return TokenRole::Question;
        case oracle::Sep: return TokenRole::Boundary;
        case oracle::Tab: return TokenRole::TableTok;
        case oracle::RowMark: return TokenRole::RowTok;
        case oracle::ColMark: return TokenRole::ColTok;
        case oracle::CellMark: return TokenRole::CellTok;
        case oracle::Content: return TokenRole::CellContent;
    }
    return TokenRole::Boundary;
}

// Compares every channel against the reference layout.
void check_against_oracle(const std::string& q, const Table& t, TokenScheme s) {
    const auto enc = assign_positions(linearize(q, t, s, {100000}), PositionScheme::CPE);
    const auto ref = oracle::layout(q, t.headers(), t.rows(), static_cast<int>(s));
    REQUIRE(enc.size() == ref.size());
    const auto cpe = oracle::cpe_positions(ref);
    const auto& v = Vocabulary::instance();
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const auto& r = ref[i];
        const std::string want = v.contains(r.sym) ? r.sym : "UNK";
        CHECK(v.symbol(enc.token_ids[i]) == want);
        CHECK(enc.roles[i] == role_of(r.kind));
        CHECK(enc.row_idx[i] == (r.header ? kHeaderRow : r.row));
        CHECK(enc.col_idx[i] == r.col);
        CHECK(enc.cell_ord[i] == r.k);
        CHECK(enc.segment[i] == r.seg);
        CHECK(enc.pos_idx[i] == cpe[i]);
    }
}

Table random_table(Rng& rng, int max_rows = 8, int max_cols = 8) {
    datagen::GenSpec spec;
    spec.row_values.clear();
    spec.col_values.clear();
    for (int r = 1; r <= max_rows; ++r) spec.row_values.push_back(r);
    for (int c = 1; c <= max_cols; ++c) spec.col_values.push_back(c);
    return datagen::gen_table(spec, rng);
}

}  // namespace

TEST_CASE("T1 worked example") {
    const Table t({"h"}, {{"5"}});
    const auto e = linearize("select c1", t, TokenScheme::T1);
    CHECK(symbols(e) == std::vector<std::string>{"select", "c1", "SEP", "UNK", "[ROW 1]", "[CELL]", "5"});
    CHECK(e.unk_count == 1);
    CHECK(e.roles == std::vector<TokenRole>{TokenRole::Question, TokenRole::Question, TokenRole::Boundary,
                                            TokenRole::CellContent, TokenRole::RowTok, TokenRole::CellTok,
                                            TokenRole::CellContent});
    CHECK(e.segment == std::vector<std::int32_t>{0, 0, 1, 1, 1, 1, 1});
    CHECK(e.row_idx == std::vector<std::int32_t>{0, 0, 0, kHeaderRow, 1, 1, 1});
    CHECK(e.col_idx == std::vector<std::int32_t>{0, 0, 0, 1, 0, 1, 1});
    const auto cpe = assign_positions(e, PositionScheme::CPE);
    CHECK(cpe.pos_idx == std::vector<std::int32_t>{0, 1, 0, 0, 0, 0, 0});
    const auto tpe = assign_positions(e, PositionScheme::TPE);
    CHECK(tpe.pos_idx == std::vector<std::int32_t>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("T0 and T2 worked examples") {
    const Table t({"h"}, {{"5"}});
    CHECK(symbols(linearize("select c1", t, TokenScheme::T0)) ==
          std::vector<std::string>{"select", "c1", "SEP", "UNK", "SEP", "5"});
    const auto t2 = linearize("select c1", t, TokenScheme::T2);
    CHECK(symbols(t2) == std::vector<std::string>{"select", "c1", "SEP", "[TAB]", "[COL]", "UNK", "[ROW]", "[CELL]", "5"});
    CHECK(t2.roles[3] == TokenRole::TableTok);
    CHECK(t2.row_idx[3] == 0);
    CHECK(t2.col_idx[3] == 0);
    CHECK(t2.col_idx[4] == 1);  // [COL]
    CHECK(t2.row_idx[6] == 1);  // [ROW]
    CHECK(t2.row_idx[7] == 1);  // [CELL]
    CHECK(t2.col_idx[7] == 1);
}

TEST_CASE("CPE restarts inside multi-digit cells") {
    const Table t({"c1"}, {{"123"}});
    const auto e = assign_positions(linearize("select c1", t, TokenScheme::T0), PositionScheme::CPE);
    const std::size_t n = e.size();
    CHECK(e.cell_ord[n - 3] == 0);
    CHECK(e.cell_ord[n - 1] == 2);
    CHECK(e.pos_idx[n - 3] == 0);
    CHECK(e.pos_idx[n - 2] == 1);
    CHECK(e.pos_idx[n - 1] == 2);
}

TEST_CASE("all channels match the reference layout on random tables") {
    Rng rng(11);
    const char* questions[] = {"select c1", "select c2 where c1 != 42 and c3 = 7", "select c1 where c2 in (4, 51)"};
    for (int n = 0; n < 60; ++n) {
        const Table t = random_table(rng);
        for (auto s : kAllTokenSchemes) check_against_oracle(questions[n % 3], t, s);
    }
}

TEST_CASE("dimensions are recoverable from roles and coordinates") {
    Rng rng(5);
    for (int n = 0; n < 1000; ++n) {
        const Table t = random_table(rng, 12, 12);
        const auto s = kAllTokenSchemes[static_cast<std::size_t>(n) % 3];
        const auto d = reconstruct_dims(linearize("select c1", t, s, {100000}));
        CHECK(d.rows == t.n_rows());
        CHECK(d.cols == t.n_cols());
    }
}

TEST_CASE("position invariants") {
    Rng rng(8);
    for (int n = 0; n < 100; ++n) {
        const Table t = random_table(rng);
        for (auto s : kAllTokenSchemes) {
            const auto base = linearize("select c2", t, s, {100000});
            const auto tpe = assign_positions(base, PositionScheme::TPE);
            CHECK(*std::max_element(tpe.pos_idx.begin(), tpe.pos_idx.end()) == static_cast<int>(tpe.size()) - 1);
            const auto cpe = assign_positions(base, PositionScheme::CPE);
            std::size_t widest = 0;
            for (const auto& row : t.rows())
                for (const auto& cell : row) widest = std::max(widest, cell.size());
            for (std::size_t i = base.question_length(); i < cpe.size(); ++i)
                CHECK(cpe.pos_idx[i] < static_cast<int>(std::max<std::size_t>(widest, 1)));
            // segment: 0 on a prefix, 1 afterwards
            CHECK(std::is_sorted(base.segment.begin(), base.segment.end()));
        }
    }
}

TEST_CASE("column permutation is a relabeling of (content, row) pairs") {
    const Table t({"c1", "c2", "c3"}, {{"1", "22", "3"}, {"4", "5", "66"}});
    const Table p({"c3", "c2", "c1"}, {{"3", "22", "1"}, {"66", "5", "4"}});
    const auto a = linearize("select c1", t, TokenScheme::T2);
    const auto b = linearize("select c1", p, TokenScheme::T2);
    CHECK(a.token_ids != b.token_ids);
    // col 1 <-> col 3 under the relabeling
    auto pairs = [](const EncodedInput& e, bool relabel) {
        std::multiset<std::tuple<TokenId, int, int, int>> s;
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e.roles[i] != TokenRole::CellContent) continue;
            int c = e.col_idx[i];
            if (relabel) c = 4 - c;
            s.insert({e.token_ids[i], e.row_idx[i], c, e.cell_ord[i]});
        }
        return s;
    };
    CHECK(pairs(a, false) == pairs(b, true));
}

TEST_CASE("errors") {
    const Table t({"c1"}, {{"5"}});
    try {
        linearize("select c1", t, TokenScheme::T2, {5});
        FAIL("expected truncation");
    } catch (const TruncationError& e) {
        CHECK(e.required == 9);
        CHECK(e.limit == 5);
    }
    std::vector<Row> rows(65, Row{"1"});
    CHECK_THROWS_AS(linearize("select c1", Table({"c1"}, rows), TokenScheme::T1, {100000}), ConfigError);
    CHECK_NOTHROW(linearize("select c1", Table({"c1"}, rows), TokenScheme::T2, {100000}));
}
