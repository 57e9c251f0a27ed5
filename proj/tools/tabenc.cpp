// tabenc command line: data generation, encoding dumps, masks, benchmarks,
// training, scoring and factor-grid analysis.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabenc/bench.hpp"
#include "tabenc/datagen.hpp"
#include "tabenc/experiment.hpp"
#include "tabenc/json_io.hpp"
#include "tabenc/linearize.hpp"
#include "tabenc/mask.hpp"
#include "tabenc/model.hpp"
#include "tabenc/sqlexec.hpp"
#include "tabenc/stats.hpp"

using namespace tabenc;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-")
        std::cout << text;
    else
        write_file_atomic(out_path, text);
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Table plus question; the question comes from --query or from the file's "query" field.
std::pair<Table, std::string> load_input(const std::string& path, const std::string& query) {
    const std::string text = read_text_file(path);
    std::string q = query;
    if (q.empty()) {
        const auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_object() && j.contains("query") && j.at("query").is_string()) q = j.at("query").get<std::string>();
    }
    if (q.empty()) throw InputError("no question: pass --query or a dataset line with a 'query' field");
    return {table_from_json_text(text), q};
}

void report_error(bool as_json, int code, const char* kind, const std::string& msg) {
    if (as_json)
        std::cerr << nlohmann::json{{"error", kind}, {"exit_code", code}, {"message", msg}}.dump() << "\n";
    else
        std::cerr << "tabenc: " << msg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Table encoding factors: masks, kernels, synthetic SQL data and a toy encoder-decoder"};
    app.require_subcommand(1);
    bool json_errors = false;
    app.add_flag("--json-errors", json_errors, "Print diagnostics as JSON on stderr");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic QA dataset (JSONL)");
    std::string gen_suite = "train", gen_out, gen_templates, gen_rows, gen_cols;
    std::size_t gen_n = 1000;
    std::uint64_t gen_seed = 1;
    double gen_r = 0.2, gen_s = 1.0;
    int gen_min = -1, gen_max = -1;
    bool gen_adv = false, gen_drop_empty = false;
    gen->add_option("--suite", gen_suite, "train|structure|consistency|compositional|mixability");
    gen->add_option("--n", gen_n, "Number of examples");
    gen->add_option("--seed", gen_seed, "Master seed");
    gen->add_option("--r,--R", gen_r, "Consistency replacement rate");
    gen->add_option("--s,--S", gen_s, "Mixability strength");
    gen->add_option("--templates", gen_templates, "Comma-separated template names");
    gen->add_option("--rows", gen_rows, "Comma-separated row counts to draw from");
    gen->add_option("--cols", gen_cols, "Comma-separated column counts to draw from");
    gen->add_option("--min", gen_min, "Smallest cell value");
    gen->add_option("--max", gen_max, "Largest cell value");
    gen->add_flag("--adversarial", gen_adv, "Draw condition values from the whole value universe");
    gen->add_flag("--drop-empty", gen_drop_empty, "Resample queries with empty answers");
    gen->add_option("--out", gen_out, "Output JSONL (default stdout)");

    // exec
    auto* exec = app.add_subcommand("exec", "Execute a query against a table");
    std::string exec_table, exec_query;
    exec->add_option("--table", exec_table, "Table JSON (or dataset line)")->required();
    exec->add_option("--query", exec_query, "SQL query")->required();

    // score
    auto* score = app.add_subcommand("score", "Denotation accuracy of predictions against gold");
    std::string score_pred, score_gold;
    bool score_set = false;
    score->add_option("--pred", score_pred, "Predictions JSONL with 'answer'")->required();
    score->add_option("--gold", score_gold, "Gold JSONL with 'answer'")->required();
    score->add_flag("--set-semantics", score_set, "Compare as sets instead of multisets");

    // dump-encoding
    auto* dump = app.add_subcommand("dump-encoding", "Print the per-token encoding as TSV");
    std::string dump_table, dump_query, dump_tokens = "T0", dump_pe = "TPE", dump_out;
    std::size_t dump_ctx = 512;
    dump->add_option("--in,--table", dump_table, "Table JSON or dataset line")->required();
    dump->add_option("--query", dump_query, "Question text (default: the line's query)");
    dump->add_option("--scheme,--tokens", dump_tokens, "T0|T1|T2");
    dump->add_option("--pe", dump_pe, "TPE|CPE");
    dump->add_option("--context", dump_ctx, "Context limit");
    dump->add_option("--out", dump_out, "Output file (default stdout)");

    // mask
    auto* mask = app.add_subcommand("mask", "Export the attention mask as block rectangles");
    std::string mask_table, mask_query, mask_tokens = "T2", mask_scheme = "M1", mask_out;
    std::size_t mask_ctx = 512;
    mask->add_option("--in,--table", mask_table, "Table JSON or dataset line")->required();
    mask->add_option("--query", mask_query, "Question text (default: the line's query)");
    mask->add_option("--tokens", mask_tokens, "T0|T1|T2");
    mask->add_option("--scheme", mask_scheme, "M0..M6");
    mask->add_option("--context", mask_ctx, "Context limit");
    mask->add_option("--out", mask_out, "Output file (default stdout)");

    // bench
    auto* bench = app.add_subcommand("bench", "Dense vs block-sparse attention timings");
    std::string bench_scheme = "M3", bench_lengths = "1024,2048,4096,8192,16384", bench_out;
    std::size_t bench_trials = 20;
    bench->add_option("--scheme", bench_scheme, "M0..M6");
    bench->add_option("--lengths", bench_lengths, "Comma-separated sequence lengths");
    bench->add_option("--trials", bench_trials, "Timed repetitions per length");
    bench->add_option("--out", bench_out, "Output CSV (default stdout)");

    // train
    auto* trn = app.add_subcommand("train", "Train the encoder-decoder");
    std::string train_cfg, train_data, train_out;
    bool train_verbose = false;
    trn->add_option("--config", train_cfg, "Model config JSON")->required();
    trn->add_option("--data", train_data, "Training JSONL")->required();
    trn->add_option("--out", train_out, "Checkpoint directory")->required();
    trn->add_flag("--verbose", train_verbose, "Progress on stderr");

    // eval
    auto* evl = app.add_subcommand("eval", "Greedy-decode a dataset with a checkpoint");
    std::string eval_ckpt, eval_data, eval_out;
    bool eval_set = false;
    evl->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
    evl->add_option("--data", eval_data, "Dataset JSONL")->required();
    evl->add_option("--out", eval_out, "Predictions JSONL")->required();
    evl->add_flag("--set-semantics", eval_set, "Compare as sets instead of multisets");

    // anova
    auto* anv = app.add_subcommand("anova", "ANOVA over a results CSV");
    std::string anova_in, anova_terms = "T,M,PE,B,E", anova_out;
    bool anova_unbalanced = false;
    anv->add_option("--in", anova_in, "results.csv")->required();
    anv->add_option("--terms", anova_terms, "Terms, e.g. T,M,PE,M*PE");
    anv->add_flag("--unbalanced", anova_unbalanced, "Accept an unbalanced design");
    anv->add_option("--out", anova_out, "Output CSV (default stdout)");

    // grid
    auto* grd = app.add_subcommand("grid", "Run a factor-grid experiment plan (resumable)");
    std::string grid_plan, grid_out_dir;
    grd->add_option("--plan", grid_plan, "Plan JSON")->required();
    grd->add_option("--out-dir", grid_out_dir, "Override the plan's output directory");

    // report
    auto* rep = app.add_subcommand("report", "Paired differences and ANOVA from results.csv");
    std::string report_in, report_out;
    rep->add_option("--in", report_in, "results.csv")->required();
    rep->add_option("--out-dir", report_out, "Directory for paired.csv and anova_<suite>.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error(json_errors, 2, "usage", e.what());
        return 2;
    }

    try {
        if (*gen) {
            auto spec = datagen::GenSpec::for_suite(gen_suite, gen_n, Seed{gen_seed}, gen_r, gen_s);
            if (!gen_templates.empty()) {
                spec.templates.clear();
                for (const auto& t : split_list(gen_templates)) spec.templates.push_back(datagen::parse_template(t));
            }
            auto ints = [](const std::string& s) {
                std::vector<int> v;
                for (const auto& x : split_list(s)) v.push_back(std::stoi(x));
                return v;
            };
            if (!gen_rows.empty()) spec.row_values = ints(gen_rows);
            if (!gen_cols.empty()) spec.col_values = ints(gen_cols);
            if (gen_min >= 0) spec.value_min = gen_min;
            if (gen_max >= 0) spec.value_max = gen_max;
            spec.adversarial = gen_adv;
            spec.drop_empty = gen_drop_empty;
            spec.validate();
            datagen::GenStats st;
            const auto data = datagen::gen_dataset(spec, &st);
            emit(gen_out, datagen::dataset_to_jsonl(data));
            std::cerr << "generated " << data.size() << " examples, " << st.skipped << " oracle failures skipped, "
                      << st.empty_answers << " empty answers\n";
        } else if (*exec) {
            const Table t = table_from_json_text(read_text_file(exec_table));
            std::cout << json_string_array(sql::execute(sql::parse_sql(exec_query), t)) << "\n";
        } else if (*score) {
            const auto sem = score_set ? sql::MatchSemantics::Set : sql::MatchSemantics::Multiset;
            std::cout << fmt4(sql::denotation_accuracy(read_answers(score_pred), read_answers(score_gold), sem))
                      << "\n";
        } else if (*dump) {
            const auto [t, q] = load_input(dump_table, dump_query);
            auto enc = assign_positions(linearize(q, t, parse_token_scheme(dump_tokens), {dump_ctx}),
                                        parse_position_scheme(dump_pe));
            if (enc.unk_count) std::cerr << enc.unk_count << " tokens mapped to UNK\n";
            emit(dump_out, encoding_to_tsv(enc));
        } else if (*mask) {
            const auto [t, q] = load_input(mask_table, mask_query);
            const auto enc = linearize(q, t, parse_token_scheme(mask_tokens), {mask_ctx});
            emit(mask_out, blocks_to_text(build_mask(enc, parse_mask_scheme(mask_scheme))));
        } else if (*bench) {
            std::vector<std::size_t> lengths;
            for (const auto& x : split_list(bench_lengths)) lengths.push_back(std::stoul(x));
            BenchOptions o;
            o.trials = bench_trials;
            emit(bench_out, bench_to_csv(bench_attention(lengths, parse_mask_scheme(bench_scheme), o)));
        } else if (*trn) {
            const ModelConfig cfg = model_config_from_json(read_text_file(train_cfg));
            const auto data = read_dataset(train_data);
            Seq2Seq model(cfg);
            const auto res = train(model, data, train_verbose);
            save_checkpoint(train_out, model, res.trace_csv);
            std::cerr << "trained " << res.steps_run << " steps, best eval DA " << fmt4(res.best_da) << " at step "
                      << res.best_step << (res.early_stopped ? " (early stop)" : "") << "\n";
        } else if (*evl) {
            const Seq2Seq model = load_checkpoint(eval_ckpt);
            const auto data = read_dataset(eval_data);
            const auto sem = eval_set ? sql::MatchSemantics::Set : sql::MatchSemantics::Multiset;
            std::string out;
            std::size_t ok = 0, truncated = 0;
            for (const auto& ex : data) {
                std::vector<std::string> pred;
                bool trunc = false;
                try {
                    pred = model.predict(ex);
                } catch (const TruncationError&) {
                    trunc = true;
                    ++truncated;
                }
                if (!trunc) ok += sql::denotation_match(pred, ex.answer, sem);
                out += "{\"query\": " + json_quote(ex.query) + ", \"answer\": " + json_string_array(pred) +
                       (trunc ? ", \"truncated\": true" : "") + "}\n";
            }
            write_file_atomic(eval_out, out);
            const double da = data.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(data.size());
            std::cout << fmt4(da) << "\n";
            if (truncated) std::cerr << truncated << " inputs exceeded the context limit and count as wrong\n";
        } else if (*anv) {
            const auto rows = stats::read_results_csv(anova_in);
            const auto r = stats::anova(rows, stats::parse_terms(anova_terms), {anova_unbalanced});
            emit(anova_out, stats::anova_to_csv(r));
        } else if (*grd) {
            ExperimentPlan plan = plan_from_json(read_text_file(grid_plan));
            if (!grid_out_dir.empty()) plan.out_dir = grid_out_dir;
            std::cerr << plan.configs.size() << " configurations, " << plan.dropped
                      << " illegal (T, M) points dropped\n";
            const auto prog = run_grid(plan);
            std::cerr << prog.runs_total << " runs, " << prog.runs_skipped << " already done, " << prog.runs_failed
                      << " failed\n";
        } else if (*rep) {
            const auto out = report(stats::read_results_csv(report_in));
            const std::filesystem::path dir = report_out;
            write_file_atomic(dir / "paired.csv", out.paired_csv);
            for (const auto& [suite, csv] : out.anova_csv) write_file_atomic(dir / ("anova_" + suite + ".csv"), csv);
            for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
            if (!out.anova_error.empty()) {
                std::string msg;
                for (const auto& [suite, e] : out.anova_error) msg += (msg.empty() ? "" : "; ") + suite + ": " + e;
                report_error(json_errors, 2, "anova", msg);
                return 2;
            }
        }
    } catch (const ValidationError& e) {
        report_error(json_errors, 2, "validation", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        report_error(json_errors, 2, "usage", std::string("bad numeric argument: ") + e.what());
        return 2;
    } catch (const std::out_of_range& e) {
        report_error(json_errors, 2, "usage", std::string("numeric argument out of range: ") + e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error(json_errors, 3, "runtime", e.what());
        return 3;
    }
    return 0;
}
