#include "tabenc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "tabenc/json_io.hpp"

namespace tabenc::stats {

std::string results_header() { return "T,M,PE,B,E,suite,replicate,da"; }

std::string result_to_csv_line(const ResultRow& r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", r.da);
    return to_string(r.config.tokens) + "," + to_string(r.config.mask) + "," + to_string(r.config.pe) + "," +
           to_string(r.config.bias) + "," + to_string(r.config.emb) + "," + r.suite + "," + r.replicate + "," + buf;
}

ResultsTable parse_results_csv(const std::string& text) {
    ResultsTable out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("T,", 0) == 0) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 8) throw InputError("results line " + std::to_string(lineno) + ": expected 8 fields");
        ResultRow r;
        r.config = FactorConfig{parse_token_scheme(f[0]), parse_mask_scheme(f[1]), parse_position_scheme(f[2]),
                                parse_bias_scheme(f[3]), parse_embedding_scheme(f[4])};
        r.suite = f[5];
        r.replicate = f[6];
        try {
            r.da = std::stod(f[7]);
        } catch (const std::exception&) {
            throw InputError("results line " + std::to_string(lineno) + ": bad accuracy '" + f[7] + "'");
        }
        out.push_back(std::move(r));
    }
    return out;
}

ResultsTable read_results_csv(const std::filesystem::path& path) { return parse_results_csv(read_text_file(path)); }

std::string to_string(Factor f) {
    switch (f) {
        case Factor::T: return "T";
        case Factor::M: return "M";
        case Factor::PE: return "PE";
        case Factor::B: return "B";
        case Factor::E: return "E";
    }
    return "?";
}

Factor parse_factor(std::string_view s) {
    for (Factor f : {Factor::T, Factor::M, Factor::PE, Factor::B, Factor::E})
        if (to_string(f) == s) return f;
    throw ConfigError("unknown factor '" + std::string(s) + "'");
}

int level_of(const FactorConfig& c, Factor f) {
    switch (f) {
        case Factor::T: return static_cast<int>(c.tokens);
        case Factor::M: return static_cast<int>(c.mask);
        case Factor::PE: return static_cast<int>(c.pe);
        case Factor::B: return static_cast<int>(c.bias);
        case Factor::E: return static_cast<int>(c.emb);
    }
    return 0;
}

std::string level_name(Factor f, int level) {
    switch (f) {
        case Factor::T: return to_string(static_cast<TokenScheme>(level));
        case Factor::M: return to_string(static_cast<MaskScheme>(level));
        case Factor::PE: return to_string(static_cast<PositionScheme>(level));
        case Factor::B: return to_string(static_cast<BiasScheme>(level));
        case Factor::E: return to_string(static_cast<EmbeddingScheme>(level));
    }
    return "?";
}

std::string Term::name() const {
    std::string s;
    for (std::size_t i = 0; i < factors.size(); ++i) s += (i ? "*" : "") + to_string(factors[i]);
    return s;
}

std::vector<Term> parse_terms(std::string_view spec) {
    std::vector<Term> terms;
    std::size_t start = 0;
    while (start <= spec.size()) {
        auto comma = spec.find(',', start);
        std::string_view item = spec.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        if (!item.empty()) {
            Term t;
            std::size_t s = 0;
            while (true) {
                auto star = item.find('*', s);
                t.factors.push_back(parse_factor(item.substr(s, star == std::string_view::npos ? star : star - s)));
                if (star == std::string_view::npos) break;
                s = star + 1;
            }
            if (t.factors.size() > 2) throw ConfigError("only main effects and two-way interactions are supported");
            if (t.factors.size() == 2 && t.factors[0] == t.factors[1])
                throw ConfigError("interaction of a factor with itself: " + std::string(item));
            terms.push_back(std::move(t));
        }
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (terms.empty()) throw ConfigError("no ANOVA terms given");
    return terms;
}

namespace {

struct Obs {
    std::vector<int> levels;  // indexed by position in `factors`
    double y;
};

}  // namespace

AnovaReport anova(const ResultsTable& results, const std::vector<Term>& terms, const AnovaOptions& opts) {
    if (terms.empty()) throw ConfigError("no ANOVA terms given");
    std::vector<Factor> factors;
    for (const auto& t : terms)
        for (Factor f : t.factors)
            if (std::find(factors.begin(), factors.end(), f) == factors.end()) factors.push_back(f);
    std::sort(factors.begin(), factors.end());
    auto pos = [&](Factor f) {
        return static_cast<std::size_t>(std::find(factors.begin(), factors.end(), f) - factors.begin());
    };

    // Canonical order so the report does not depend on input row order.
    std::vector<ResultRow> rows(results.begin(), results.end());
    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        auto key = [](const ResultRow& r) {
            return std::tuple(r.config.tokens, r.config.mask, r.config.pe, r.config.bias, r.config.emb, r.suite,
                              r.replicate, r.da);
        };
        return key(a) < key(b);
    });
    if (rows.size() < 2) throw InputError("ANOVA needs at least two observations");

    std::vector<Obs> obs;
    std::vector<std::vector<int>> levels(factors.size());
    for (const auto& r : rows) {
        Obs o{{}, r.da};
        for (std::size_t k = 0; k < factors.size(); ++k) {
            const int l = level_of(r.config, factors[k]);
            o.levels.push_back(l);
            if (std::find(levels[k].begin(), levels[k].end(), l) == levels[k].end()) levels[k].push_back(l);
        }
        obs.push_back(std::move(o));
    }
    for (std::size_t k = 0; k < factors.size(); ++k)
        if (levels[k].size() < 2) throw InputError("factor " + to_string(factors[k]) + " has fewer than 2 levels");

    const auto n = static_cast<double>(obs.size());
    double grand = 0.0;
    for (const auto& o : obs) grand += o.y;
    grand /= n;
    double ss_total = 0.0;
    for (const auto& o : obs) ss_total += (o.y - grand) * (o.y - grand);
    if (!(ss_total > 1e-24)) throw DegenerateDataError("all responses are identical; total variance is zero");

    // Cells over every factor in the model.
    std::map<std::vector<int>, std::pair<double, std::size_t>> cells;
    for (const auto& o : obs) {
        auto& c = cells[o.levels];
        c.first += o.y;
        ++c.second;
    }
    std::size_t full_cross = 1;
    for (const auto& l : levels) full_cross *= l.size();
    bool balanced = cells.size() == full_cross;
    for (const auto& [_, c] : cells) balanced = balanced && c.second == cells.begin()->second.second;
    if (!balanced && !opts.allow_unbalanced)
        throw InputError("unbalanced design: " + std::to_string(cells.size()) + " of " + std::to_string(full_cross) +
                         " factor cells observed with unequal replication; pass the unbalanced flag to proceed");

    // Marginal means over a subset of factor positions.
    auto marginal = [&](const std::vector<std::size_t>& ks) {
        std::map<std::vector<int>, std::pair<double, std::size_t>> m;
        for (const auto& o : obs) {
            std::vector<int> key;
            for (auto k : ks) key.push_back(o.levels[k]);
            auto& c = m[key];
            c.first += o.y;
            ++c.second;
        }
        std::map<std::vector<int>, std::pair<double, std::size_t>> means;
        for (auto& [key, c] : m) means[key] = {c.first / static_cast<double>(c.second), c.second};
        return means;
    };

    AnovaReport rep;
    rep.ss_total = ss_total;
    rep.n = obs.size();
    rep.balanced = balanced;
    double ss_terms = 0.0, df_terms = 0.0;
    for (const auto& t : terms) {
        TermResult tr;
        tr.term = t.name();
        if (t.factors.size() == 1) {
            const std::size_t k = pos(t.factors[0]);
            for (const auto& [key, mc] : marginal({k}))
                tr.ss += static_cast<double>(mc.second) * (mc.first - grand) * (mc.first - grand);
            tr.df = static_cast<double>(levels[k].size() - 1);
        } else {
            const std::size_t a = pos(t.factors[0]), b = pos(t.factors[1]);
            const auto ma = marginal({a}), mb = marginal({b});
            for (const auto& [key, mc] : marginal({a, b})) {
                const double d = mc.first - ma.at({key[0]}).first - mb.at({key[1]}).first + grand;
                tr.ss += static_cast<double>(mc.second) * d * d;
            }
            tr.df = static_cast<double>((levels[a].size() - 1) * (levels[b].size() - 1));
        }
        tr.eta2 = tr.ss / ss_total;
        ss_terms += tr.ss;
        df_terms += tr.df;
        rep.terms.push_back(std::move(tr));
    }

    rep.residual.term = "Residual";
    if (balanced) {
        rep.residual.ss = std::max(0.0, ss_total - ss_terms);
        rep.residual.df = n - 1.0 - df_terms;
    } else {
        double within = 0.0;
        for (const auto& o : obs) {
            const auto& c = cells.at(o.levels);
            const double mean = c.first / static_cast<double>(c.second);
            within += (o.y - mean) * (o.y - mean);
        }
        rep.residual.ss = within;
        rep.residual.df = n - static_cast<double>(cells.size());
    }
    if (rep.residual.df < 1.0) throw InputError("no residual degrees of freedom; add replicates");
    rep.residual.eta2 = rep.residual.ss / ss_total;
    const double ms_res = rep.residual.ss / rep.residual.df;
    for (auto& tr : rep.terms) {
        if (ms_res > 0.0) {
            tr.f = (tr.ss / tr.df) / ms_res;
            tr.p = f_upper_tail(tr.f, tr.df, rep.residual.df);
        } else {
            tr.f = tr.ss > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            tr.p = tr.ss > 0.0 ? 0.0 : 1.0;
        }
    }
    rep.residual.f = 0.0;
    rep.residual.p = 1.0;
    return rep;
}

std::string anova_to_csv(const AnovaReport& r) {
    std::string out = "term,eta2,p\n";
    char buf[96];
    for (const auto& t : r.terms) {
        std::snprintf(buf, sizeof buf, ",%.6f,%.6g\n", t.eta2, t.p);
        out += t.term + buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f,\n", r.residual.eta2);
    out += "Residual" + std::string(buf);
    return out;
}

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_cf(double x, double a, double b) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 100000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    return h;
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(x, a, b) / a;
    return 1.0 - front * beta_cf(1.0 - x, b, a) / b;
}

double f_upper_tail(double f, double df1, double df2) {
    if (!(df1 >= 1.0) || !(df2 >= 1.0)) throw InputError("F distribution needs df >= 1");
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    return incomplete_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0);
}

}  // namespace tabenc::stats
