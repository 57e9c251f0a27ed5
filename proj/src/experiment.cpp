#include "tabenc/experiment.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

#include "json.hpp"
#include "tabenc/datagen.hpp"
#include "tabenc/json_io.hpp"
#include "tabenc/rng.hpp"
#include "tabenc/sqlexec.hpp"

namespace tabenc {

using nlohmann::json;

namespace {

template <typename E, typename Parse, std::size_t N>
std::vector<E> levels_from(const json& grid, const char* key, Parse parse, const std::array<E, N>& all) {
    if (!grid.contains(key)) return {all.begin(), all.end()};
    std::vector<E> out;
    for (const auto& v : grid.at(key)) out.push_back(parse(v.get<std::string>()));
    if (out.empty()) throw ConfigError(std::string("grid axis ") + key + " is empty");
    return out;
}

std::string run_dir_name(const FactorConfig& c, std::uint64_t seed) {
    std::string s = c.label();
    std::replace(s.begin(), s.end(), '/', '_');
    return s + "_s" + std::to_string(seed);
}

std::uint64_t suite_seed(std::uint64_t data_seed, const SuiteSpec& s, std::size_t index) {
    return data_seed * 1000003ULL + fnv1a64(s.name) + index;
}

std::vector<QAExample> load_or_generate(const std::filesystem::path& path, const datagen::GenSpec& spec) {
    if (std::filesystem::exists(path)) return read_dataset(path);
    auto data = datagen::gen_dataset(spec);
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, datagen::dataset_to_jsonl(data));
    return data;
}

// Appends under an exclusive advisory lock so parallel grid processes do not interleave rows.
void append_locked(const std::filesystem::path& path, const std::string& text) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw RuntimeFailure("cannot open " + path.string() + " for appending");
    if (::flock(fd, LOCK_EX) != 0) {
        ::close(fd);
        throw RuntimeFailure("cannot lock " + path.string());
    }
    std::string payload = text;
    if (::lseek(fd, 0, SEEK_END) == 0) payload = stats::results_header() + "\n" + payload;
    std::size_t done = 0;
    while (done < payload.size()) {
        const ssize_t w = ::write(fd, payload.data() + done, payload.size() - done);
        if (w <= 0) {
            ::flock(fd, LOCK_UN);
            ::close(fd);
            throw RuntimeFailure("write to " + path.string() + " failed");
        }
        done += static_cast<std::size_t>(w);
    }
    ::fsync(fd);
    ::flock(fd, LOCK_UN);
    ::close(fd);
}

}  // namespace

std::vector<FactorConfig> expand_grid(const std::vector<TokenScheme>& t, const std::vector<MaskScheme>& m,
                                      const std::vector<PositionScheme>& pe, const std::vector<BiasScheme>& b,
                                      const std::vector<EmbeddingScheme>& e) {
    std::vector<FactorConfig> out;
    for (auto ti : t)
        for (auto mi : m)
            for (auto pi : pe)
                for (auto bi : b)
                    for (auto ei : e) out.push_back(FactorConfig{ti, mi, pi, bi, ei});
    return out;
}

void validate_plan(ExperimentPlan& plan) {
    std::vector<FactorConfig> kept;
    for (const auto& c : plan.configs) {
        if (!c.legal()) {
            ++plan.dropped;
            continue;
        }
        if (std::find(kept.begin(), kept.end(), c) == kept.end()) kept.push_back(c);
    }
    plan.configs = std::move(kept);
    if (plan.configs.empty()) throw ConfigError("plan has no legal configurations");
    if (plan.suites.empty()) throw ConfigError("plan has no evaluation suites");
    if (plan.replicate_seeds.empty()) throw ConfigError("plan has no replicates");
    std::set<std::string> names;
    for (const auto& s : plan.suites) {
        if (!names.insert(s.name).second) throw ConfigError("duplicate suite '" + s.name + "'");
        datagen::GenSpec::for_suite(s.name, s.n_examples, Seed{plan.data_seed}, s.r, s.s).validate();
    }
    if (plan.train_examples < 2) throw ConfigError("plan needs at least 2 training examples");
    std::set<std::uint64_t> seeds(plan.replicate_seeds.begin(), plan.replicate_seeds.end());
    if (seeds.size() != plan.replicate_seeds.size()) throw ConfigError("duplicate replicate seeds");
}

ExperimentPlan plan_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("plan is not valid JSON: ") + e.what());
    }
    ExperimentPlan p;
    p.model.vocab_size = Vocabulary::instance().size();
    try {
        if (j.contains("configs"))
            for (const auto& c : j.at("configs")) p.configs.push_back(parse_factor_label(c.get<std::string>()));
        if (j.contains("grid")) {
            const json& g = j.at("grid");
            auto more = expand_grid(levels_from(g, "T", parse_token_scheme, kAllTokenSchemes),
                                    levels_from(g, "M", parse_mask_scheme, kAllMaskSchemes),
                                    levels_from(g, "PE", parse_position_scheme, kAllPositionSchemes),
                                    levels_from(g, "B", parse_bias_scheme, kAllBiasSchemes),
                                    levels_from(g, "E", parse_embedding_scheme, kAllEmbeddingSchemes));
            p.configs.insert(p.configs.end(), more.begin(), more.end());
        }
        if (j.contains("train_examples")) p.train_examples = j.at("train_examples").get<std::size_t>();
        if (j.contains("suites")) {
            for (const auto& s : j.at("suites")) {
                SuiteSpec ss;
                ss.name = s.at("name").get<std::string>();
                if (s.contains("n")) ss.n_examples = s.at("n").get<std::size_t>();
                if (s.contains("r")) ss.r = s.at("r").get<double>();
                if (s.contains("s")) ss.s = s.at("s").get<double>();
                p.suites.push_back(ss);
            }
        }
        if (j.contains("replicates")) {
            p.replicate_seeds.clear();
            for (const auto& r : j.at("replicates")) p.replicate_seeds.push_back(r.get<std::uint64_t>());
        }
        if (j.contains("data_seed")) p.data_seed = j.at("data_seed").get<std::uint64_t>();
        if (j.contains("model")) p.model = model_config_from_json(j.at("model").dump());
        if (j.contains("out_dir")) p.out_dir = j.at("out_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("plan: ") + e.what());
    }
    validate_plan(p);
    return p;
}

std::vector<double> train_and_score(const ExperimentPlan& plan, const FactorConfig& config, std::uint64_t seed) {
    const auto data_dir = plan.out_dir / "data";
    auto train_spec = datagen::GenSpec::for_suite("train", plan.train_examples, Seed{plan.data_seed});
    const auto train_data = load_or_generate(data_dir / "train.jsonl", train_spec);

    ModelConfig mc = plan.model;
    mc.factor = config;
    mc.seed = seed;
    Seq2Seq model(mc);
    const auto res = train(model, train_data);
    write_file_atomic(plan.out_dir / "runs" / run_dir_name(config, seed) / "trace.csv", res.trace_csv);

    std::vector<double> das;
    for (std::size_t i = 0; i < plan.suites.size(); ++i) {
        const auto& s = plan.suites[i];
        auto spec = datagen::GenSpec::for_suite(s.name, s.n_examples, Seed{suite_seed(plan.data_seed, s, i)}, s.r, s.s);
        const auto test = load_or_generate(data_dir / (s.name + ".jsonl"), spec);
        // Inputs beyond the context limit count as misses.
        std::size_t ok = 0;
        for (const auto& ex : test) {
            try {
                ok += sql::denotation_match(model.predict(ex), ex.answer);
            } catch (const TruncationError&) {
            }
        }
        das.push_back(test.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(test.size()));
    }
    return das;
}

GridProgress run_grid(const ExperimentPlan& plan, const RunFn& run) {
    const RunFn fn = run ? run : RunFn(train_and_score);
    std::filesystem::create_directories(plan.out_dir);
    const auto results_path = plan.out_dir / "results.csv";

    std::set<std::tuple<std::string, std::string, std::string>> done;
    if (std::filesystem::exists(results_path))
        for (const auto& r : stats::read_results_csv(results_path)) done.emplace(r.config.label(), r.suite, r.replicate);

    GridProgress prog;
    for (const auto& config : plan.configs) {
        for (const auto seed : plan.replicate_seeds) {
            ++prog.runs_total;
            const std::string rep = std::to_string(seed);
            bool complete = true;
            for (const auto& s : plan.suites) complete = complete && done.contains({config.label(), s.name, rep});
            if (complete) {
                ++prog.runs_skipped;
                continue;
            }
            std::vector<double> das;
            try {
                das = fn(plan, config, seed);
            } catch (const RuntimeFailure&) {
                das.assign(plan.suites.size(), std::nan(""));
                ++prog.runs_failed;
            }
            if (das.size() != plan.suites.size()) throw ContractViolation("run returned the wrong number of scores");
            std::string lines;
            for (std::size_t i = 0; i < plan.suites.size(); ++i) {
                if (done.contains({config.label(), plan.suites[i].name, rep})) continue;
                lines += stats::result_to_csv_line(stats::ResultRow{config, plan.suites[i].name, rep, das[i]}) + "\n";
                done.emplace(config.label(), plan.suites[i].name, rep);
            }
            append_locked(results_path, lines);
        }
    }
    return prog;
}

// ---------------------------------------------------------------- report

namespace {

constexpr std::array kFactors{stats::Factor::T, stats::Factor::M, stats::Factor::PE, stats::Factor::B, stats::Factor::E};

FactorConfig with_level(FactorConfig c, stats::Factor f, int level) {
    switch (f) {
        case stats::Factor::T: c.tokens = static_cast<TokenScheme>(level); break;
        case stats::Factor::M: c.mask = static_cast<MaskScheme>(level); break;
        case stats::Factor::PE: c.pe = static_cast<PositionScheme>(level); break;
        case stats::Factor::B: c.bias = static_cast<BiasScheme>(level); break;
        case stats::Factor::E: c.emb = static_cast<EmbeddingScheme>(level); break;
    }
    return c;
}

std::vector<int> observed_levels(const stats::ResultsTable& rows, stats::Factor f) {
    std::set<int> s;
    for (const auto& r : rows) s.insert(stats::level_of(r.config, f));
    return {s.begin(), s.end()};
}

}  // namespace

ReportOutput report(const stats::ResultsTable& all) {
    ReportOutput out;
    stats::ResultsTable rows;
    for (const auto& r : all)
        if (std::isfinite(r.da)) rows.push_back(r);
    if (rows.size() != all.size())
        out.warnings.push_back(std::to_string(all.size() - rows.size()) + " failed rows dropped");
    if (rows.empty()) throw InputError("results contain no usable rows");

    std::set<std::string> suites;
    for (const auto& r : rows) suites.insert(r.suite);

    // (label, suite, replicate) -> da, first occurrence wins
    std::map<std::tuple<std::string, std::string, std::string>, double> index;
    for (const auto& r : rows) index.emplace(std::tuple(r.config.label(), r.suite, r.replicate), r.da);

    out.paired_csv = "factor,left,right,suite,pairs,mean_diff\n";
    char buf[64];
    for (auto f : kFactors) {
        const auto lv = observed_levels(rows, f);
        for (std::size_t a = 0; a < lv.size(); ++a) {
            for (std::size_t b = a + 1; b < lv.size(); ++b) {
                for (const auto& suite : suites) {
                    double sum = 0.0;
                    std::size_t n = 0;
                    for (const auto& [key, da] : index) {
                        const auto& [label, s, rep] = key;
                        if (s != suite) continue;
                        const FactorConfig c = parse_factor_label(label);
                        if (stats::level_of(c, f) != lv[a]) continue;
                        auto other = index.find({with_level(c, f, lv[b]).label(), suite, rep});
                        if (other == index.end()) continue;
                        sum += da - other->second;
                        ++n;
                    }
                    if (n == 0) continue;
                    std::snprintf(buf, sizeof buf, ",%zu,%.6f\n", n, sum / static_cast<double>(n));
                    out.paired_csv += stats::to_string(f) + "," + stats::level_name(f, lv[a]) + "," +
                                      stats::level_name(f, lv[b]) + "," + suite + buf;
                }
            }
        }
    }

    for (const auto& suite : suites) {
        stats::ResultsTable sub;
        for (const auto& r : rows)
            if (r.suite == suite) sub.push_back(r);
        std::vector<stats::Factor> varying;
        for (auto f : kFactors)
            if (observed_levels(sub, f).size() >= 2) varying.push_back(f);
        if (varying.empty()) {
            out.anova_error[suite] = "no factor varies in suite " + suite;
            continue;
        }
        // cells over the varying factors
        std::map<std::vector<int>, std::size_t> cells;
        for (const auto& r : sub) {
            std::vector<int> key;
            for (auto f : varying) key.push_back(stats::level_of(r.config, f));
            ++cells[key];
        }
        std::size_t full = 1;
        for (auto f : varying) full *= observed_levels(sub, f).size();
        std::size_t min_rep = sub.size(), max_rep = 0;
        for (const auto& [_, n] : cells) {
            min_rep = std::min(min_rep, n);
            max_rep = std::max(max_rep, n);
        }
        const bool balanced = cells.size() == full && min_rep == max_rep;
        if (!balanced)
            out.warnings.push_back("suite " + suite + ": unbalanced design (" + std::to_string(cells.size()) + " of " +
                                   std::to_string(full) + " cells observed); using the unbalanced decomposition");
        std::vector<stats::Term> terms;
        for (auto f : varying) terms.push_back(stats::Term{{f}});
        if (balanced && min_rep >= 2)
            for (std::size_t a = 0; a < varying.size(); ++a)
                for (std::size_t b = a + 1; b < varying.size(); ++b) terms.push_back(stats::Term{{varying[a], varying[b]}});
        try {
            out.anova_csv[suite] = stats::anova_to_csv(stats::anova(sub, terms, stats::AnovaOptions{!balanced}));
        } catch (const ValidationError& e) {
            out.anova_error[suite] = e.what();
        }
    }
    return out;
}

}  // namespace tabenc
