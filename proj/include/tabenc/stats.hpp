#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tabenc/core.hpp"

namespace tabenc::stats {

struct DegenerateDataError : ValidationError {
    using ValidationError::ValidationError;
};

struct ResultRow {
    FactorConfig config;
    std::string suite;
    std::string replicate;
    double da = 0.0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

using ResultsTable = std::vector<ResultRow>;

// CSV schema: T,M,PE,B,E,suite,replicate,da
std::string results_header();
std::string result_to_csv_line(const ResultRow& r);
ResultsTable parse_results_csv(const std::string& text);
ResultsTable read_results_csv(const std::filesystem::path& path);

enum class Factor { T, M, PE, B, E };
std::string to_string(Factor f);
Factor parse_factor(std::string_view s);
/// Level index of a factor within a configuration.
int level_of(const FactorConfig& c, Factor f);
std::string level_name(Factor f, int level);

/// Main effect (one factor) or two-way interaction (two factors).
struct Term {
    std::vector<Factor> factors;
    std::string name() const;
    friend bool operator==(const Term&, const Term&) = default;
};

/// "T,M,PE*E" -> terms.
std::vector<Term> parse_terms(std::string_view spec);

struct TermResult {
    std::string term;
    double ss = 0.0;
    double df = 0.0;
    double f = 0.0;
    double p = 1.0;
    double eta2 = 0.0;
};

struct AnovaReport {
    std::vector<TermResult> terms;
    TermResult residual;
    double ss_total = 0.0;
    std::size_t n = 0;
    bool balanced = true;
};

struct AnovaOptions {
    bool allow_unbalanced = false;
};

/// Fixed-effects decomposition by cell means. In the balanced case the
/// residual is SS_total minus all listed terms (within-cell variation plus
/// every omitted interaction). With allow_unbalanced the same formulas use
/// weighted means and the residual is the within-cell sum of squares.
AnovaReport anova(const ResultsTable& results, const std::vector<Term>& terms, const AnovaOptions& opts = {});

/// CSV with columns term,eta2,p and a trailing Residual row.
std::string anova_to_csv(const AnovaReport& r);

/// Regularized incomplete beta I_x(a, b), continued fraction evaluation.
double incomplete_beta(double x, double a, double b);
/// P(F(df1, df2) > f).
double f_upper_tail(double f, double df1, double df2);

}  // namespace tabenc::stats
