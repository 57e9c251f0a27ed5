#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tabenc/core.hpp"
#include "tabenc/model.hpp"
#include "tabenc/stats.hpp"

namespace tabenc {

struct SuiteSpec {
    std::string name;  // train | structure | consistency | compositional | mixability
    std::size_t n_examples = 200;
    double r = 0.2;
    double s = 1.0;
};

struct ExperimentPlan {
    std::vector<FactorConfig> configs;  // legal points only after validation
    std::size_t dropped = 0;            // illegal (T, M) points removed
    std::size_t train_examples = 1000;
    std::vector<SuiteSpec> suites;
    std::vector<std::uint64_t> replicate_seeds{1};
    std::uint64_t data_seed = 1;
    ModelConfig model;  // factor is overridden per grid point, seed per replicate
    std::filesystem::path out_dir = "grid";
};

/// JSON plan. Grid points come from "configs" (labels) and/or "grid"
/// ({"T": [...], "M": [...], "PE": [...], "B": [...], "E": [...]}, missing
/// axes take every level). Illegal points are dropped and counted.
ExperimentPlan plan_from_json(const std::string& text);

/// Removes illegal points and duplicates, records the count dropped.
void validate_plan(ExperimentPlan& plan);

/// Cartesian product of the given levels, legal or not.
std::vector<FactorConfig> expand_grid(const std::vector<TokenScheme>& t, const std::vector<MaskScheme>& m,
                                      const std::vector<PositionScheme>& pe, const std::vector<BiasScheme>& b,
                                      const std::vector<EmbeddingScheme>& e);

struct GridProgress {
    std::size_t runs_total = 0;
    std::size_t runs_skipped = 0;  // already present in results.csv
    std::size_t runs_failed = 0;
};

/// Trains and scores one configuration; returns DA per suite, in plan order.
using RunFn = std::function<std::vector<double>(const ExperimentPlan&, const FactorConfig&, std::uint64_t replicate_seed)>;

/// Appends one row per (config, replicate, suite) to out_dir/results.csv.
/// Rows already present are skipped; a failed training run is recorded with da = nan.
GridProgress run_grid(const ExperimentPlan& plan, const RunFn& run = {});

/// The default RunFn: generate or load datasets, train, predict, score.
std::vector<double> train_and_score(const ExperimentPlan& plan, const FactorConfig& config, std::uint64_t seed);

struct ReportOutput {
    std::string paired_csv;                        // factor,left,right,suite,pairs,mean_diff
    std::map<std::string, std::string> anova_csv;  // per suite
    std::map<std::string, std::string> anova_error;
    std::vector<std::string> warnings;
};

/// Per-factor paired differences and per-suite ANOVA. Failed rows are dropped;
/// missing cells switch the ANOVA to its unbalanced mode with a warning.
ReportOutput report(const stats::ResultsTable& results);

}  // namespace tabenc
