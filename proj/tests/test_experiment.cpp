#include <filesystem>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "tabenc/experiment.hpp"
#include "tabenc/json_io.hpp"
#include "tabenc/rng.hpp"

using namespace tabenc;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    const auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    return d;
}

ExperimentPlan stub_plan(const std::filesystem::path& dir, std::vector<std::string> labels, std::size_t reps) {
    ExperimentPlan p;
    for (const auto& l : labels) p.configs.push_back(parse_factor_label(l));
    p.suites = {{"train", 10}, {"structure", 10}};
    p.replicate_seeds.clear();
    for (std::size_t r = 1; r <= reps; ++r) p.replicate_seeds.push_back(r);
    p.out_dir = dir;
    validate_plan(p);
    return p;
}

// Deterministic fake scores derived from the label and seed.
std::vector<double> fake_run(const ExperimentPlan& plan, const FactorConfig& c, std::uint64_t seed) {
    std::vector<double> out;
    for (std::size_t i = 0; i < plan.suites.size(); ++i)
        out.push_back(static_cast<double>(fnv1a64(c.label() + std::to_string(seed) + std::to_string(i)) % 1000) / 1000.0);
    return out;
}

stats::ResultRow row(const std::string& label, const std::string& suite, const std::string& rep, double da) {
    return {parse_factor_label(label), suite, rep, da};
}

}  // namespace

TEST_CASE("full grid drops illegal combinations") {
    ExperimentPlan p = plan_from_json(R"({"grid": {}, "suites": [{"name": "train", "n": 5}]})");
    CHECK(p.dropped == 48);
    CHECK(p.configs.size() == 120);
    CHECK(full_factor_grid().size() == 168);
    for (const auto& c : p.configs) CHECK(c.legal());
    std::set<std::string> labels;
    for (const auto& c : p.configs) labels.insert(c.label());
    CHECK(labels.size() == 120);

    const auto small = plan_from_json(R"({"grid": {"T": ["T0", "T2"], "M": ["M0", "M6"], "PE": ["TPE"], "B": ["B0"], "E": ["E0"]},
                                          "suites": [{"name": "consistency", "n": 5, "r": 0.4}], "replicates": [3, 4]})");
    CHECK(small.dropped == 1);
    CHECK(small.configs.size() == 3);
    CHECK(small.replicate_seeds == std::vector<std::uint64_t>{3, 4});
    CHECK_THROWS_AS(plan_from_json(R"({"configs": ["T0/M0/TPE/B0/E0"], "suites": [{"name": "bogus"}]})"), ConfigError);
    CHECK_THROWS_AS(plan_from_json("{"), ConfigError);
}

TEST_CASE("grid arity, resume and idempotence") {
    const auto dir = fresh_dir("tabenc_grid_a");
    const auto plan = stub_plan(dir, {"T0/M0/TPE/B0/E0", "T0/M1/TPE/B0/E0"}, 1);
    const auto prog = run_grid(plan, fake_run);
    CHECK(prog.runs_total == 2);
    CHECK(prog.runs_skipped == 0);
    const auto rows = stats::read_results_csv(dir / "results.csv");
    CHECK(rows.size() == 4);
    const std::string full = read_text_file(dir / "results.csv");
    CHECK(run_grid(plan, fake_run).runs_skipped == 2);
    CHECK(read_text_file(dir / "results.csv") == full);

    // interrupted after the first run, then resumed
    const auto dir2 = fresh_dir("tabenc_grid_b");
    auto plan2 = plan;
    plan2.out_dir = dir2;
    int calls = 0;
    auto crashing = [&](const ExperimentPlan& p, const FactorConfig& c, std::uint64_t s) {
        if (++calls == 2) throw std::logic_error("killed");
        return fake_run(p, c, s);
    };
    CHECK_THROWS_AS(run_grid(plan2, crashing), std::logic_error);
    CHECK(stats::read_results_csv(dir2 / "results.csv").size() == 2);
    const auto resumed = run_grid(plan2, fake_run);
    CHECK(resumed.runs_skipped == 1);
    CHECK(read_text_file(dir2 / "results.csv") == full);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("failed runs are recorded, not fatal") {
    const auto dir = fresh_dir("tabenc_grid_c");
    const auto plan = stub_plan(dir, {"T0/M0/TPE/B0/E0", "T2/M4/TPE/B0/E0"}, 1);
    auto diverge = [](const ExperimentPlan& p, const FactorConfig& c, std::uint64_t s) -> std::vector<double> {
        if (c.mask == MaskScheme::M4) throw RuntimeFailure("loss is nan");
        return fake_run(p, c, s);
    };
    const auto prog = run_grid(plan, diverge);
    CHECK(prog.runs_failed == 1);
    const auto rows = stats::read_results_csv(dir / "results.csv");
    REQUIRE(rows.size() == 4);
    CHECK(std::isnan(rows[2].da));
    CHECK(std::isnan(rows[3].da));
    const auto rep = report(rows);
    CHECK_FALSE(rep.warnings.empty());
    std::filesystem::remove_all(dir);
}

TEST_CASE("report: one paired row for a single differing factor") {
    stats::ResultsTable t{row("T0/M0/TPE/B0/E0", "train", "1", 0.5), row("T0/M1/TPE/B0/E0", "train", "1", 0.75)};
    const auto rep = report(t);
    CHECK(rep.paired_csv == "factor,left,right,suite,pairs,mean_diff\nM,M0,M1,train,1,-0.250000\n");
}

TEST_CASE("report: equal accuracies give zero differences and a degenerate ANOVA") {
    stats::ResultsTable t;
    for (const char* l : {"T0/M0/TPE/B0/E0", "T0/M1/TPE/B0/E0", "T0/M0/CPE/B0/E0", "T0/M1/CPE/B0/E0"})
        for (const char* r : {"1", "2"}) t.push_back(row(l, "train", r, 0.5));
    const auto rep = report(t);
    CHECK(rep.paired_csv.find("mean_diff\n") != std::string::npos);
    std::size_t lines = 0;
    for (std::size_t p = rep.paired_csv.find('\n'); p + 1 < rep.paired_csv.size(); p = rep.paired_csv.find('\n', p + 1)) {
        const auto line = rep.paired_csv.substr(p + 1, rep.paired_csv.find('\n', p + 1) - p - 1);
        CHECK(line.substr(line.rfind(',') + 1) == "0.000000");
        ++lines;
    }
    CHECK(lines == 2);
    REQUIRE(rep.anova_error.count("train"));
    CHECK(rep.anova_error.at("train").find("zero") != std::string::npos);
}

TEST_CASE("report: planted effect sign and unbalanced warning") {
    stats::ResultsTable t;
    Rng rng(12);
    for (auto pe : kAllPositionSchemes)
        for (auto e : kAllEmbeddingSchemes)
            for (int r = 0; r < 6; ++r) {
                FactorConfig c;
                c.pe = pe;
                c.emb = e;
                t.push_back({c, "train", std::to_string(r), (pe == PositionScheme::TPE ? 0.3 : 0.0) + 0.05 * rng.normal()});
            }
    const auto rep = report(t);
    const auto pos = rep.paired_csv.find("PE,TPE,CPE,train,12,");
    REQUIRE(pos != std::string::npos);
    const double diff = std::stod(rep.paired_csv.substr(pos + 20));
    CHECK(diff > 0.2);
    REQUIRE(rep.anova_csv.count("train"));
    CHECK(rep.anova_csv.at("train").find("PE*E") != std::string::npos);
    CHECK(rep.warnings.empty());

    t.pop_back();
    const auto unb = report(t);
    CHECK(unb.warnings.size() == 1);
    CHECK(unb.anova_csv.count("train") == 1);
}
