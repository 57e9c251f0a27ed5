#include "tabenc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tabenc/json_io.hpp"
#include "tabenc/sqlexec.hpp"

namespace tabenc::datagen {

namespace {

struct TemplateInfo {
    TemplateId id;
    const char* name;
    std::size_t columns;
};

constexpr TemplateInfo kTemplates[] = {
    {TemplateId::Select, "select", 0},         {TemplateId::SelectLimit, "select_limit", 0},
    {TemplateId::Where1, "where1", 1},         {TemplateId::Where2, "where2", 2},
    {TemplateId::Where3, "where3", 3},         {TemplateId::Where4, "where4", 4},
    {TemplateId::Subquery, "subquery", 1},     {TemplateId::In1, "in1", 1},
    {TemplateId::In2, "in2", 1},               {TemplateId::In3, "in3", 1},
    {TemplateId::InLimit, "in_limit", 1},      {TemplateId::WhereLimit, "where_limit", 1},
    {TemplateId::WhereIn, "where_in", 2},
};

const TemplateInfo& info(TemplateId id) { return kTemplates[static_cast<std::size_t>(id)]; }

}  // namespace

std::vector<TemplateId> training_templates() {
    return {TemplateId::Select,   TemplateId::SelectLimit, TemplateId::Where1, TemplateId::Where2, TemplateId::Where3,
            TemplateId::Where4,   TemplateId::Subquery,    TemplateId::In1,    TemplateId::In2,    TemplateId::In3};
}

std::vector<TemplateId> compositional_templates() {
    return {TemplateId::InLimit, TemplateId::WhereLimit, TemplateId::WhereIn};
}

std::string to_string(TemplateId id) { return info(id).name; }

TemplateId parse_template(std::string_view name) {
    for (const auto& t : kTemplates)
        if (name == t.name) return t.id;
    throw ConfigError("unknown template '" + std::string(name) + "'");
}

std::size_t required_columns(TemplateId id) { return info(id).columns; }

void GenSpec::validate() const {
    if (row_values.empty() || col_values.empty()) throw ConfigError("dimension ranges must be nonempty");
    for (int v : row_values)
        if (v < 1) throw ConfigError("row counts must be >= 1");
    for (int v : col_values)
        if (v < 1 || v > 16) throw ConfigError("column counts must be in 1..16");
    if (value_min > value_max || value_min < 0) throw ConfigError("value range must be a nonempty range of naturals");
    if (templates.empty()) throw ConfigError("at least one template is required");
    if (disturbance == Disturbance::Consistency && !(consistency_r >= 0.0 && consistency_r <= 1.0))
        throw ConfigError("consistency R must lie in [0, 1]");
    if (disturbance == Disturbance::Mixability && !(mixability_s >= 0.0 && mixability_s <= 1.0))
        throw ConfigError("mixability S must lie in [0, 1]");
    if (disturbance == Disturbance::Mixability &&
        (mix_alphabet < 1 || mix_alphabet > static_cast<std::size_t>(value_max - value_min + 1)))
        throw ConfigError("mixability alphabet larger than the value universe");
}

GenSpec GenSpec::for_suite(std::string_view suite, std::size_t n, Seed seed, double r, double s) {
    GenSpec spec;
    spec.n_examples = n;
    spec.seed = seed;
    if (suite == "train") {
    } else if (suite == "structure") {
        spec.disturbance = Disturbance::Structure;
        spec.row_values = spec.col_values = {4, 5, 9, 10, 11, 12};
    } else if (suite == "consistency") {
        spec.disturbance = Disturbance::Consistency;
        spec.consistency_r = r;
    } else if (suite == "compositional") {
        spec.disturbance = Disturbance::Compositional;
        spec.templates = compositional_templates();
    } else if (suite == "mixability") {
        spec.disturbance = Disturbance::Mixability;
        spec.mixability_s = s;
    } else {
        throw ConfigError("unknown suite '" + std::string(suite) + "'");
    }
    spec.validate();
    return spec;
}

// ---- transition matrices ----

TransitionMatrix TransitionMatrix::uniform(std::size_t a) {
    return TransitionMatrix(a, std::vector<double>(a * a, 1.0 / static_cast<double>(a)));
}

TransitionMatrix TransitionMatrix::deterministic(const std::vector<std::size_t>& successor) {
    const std::size_t a = successor.size();
    std::vector<double> p(a * a, 0.0);
    for (std::size_t i = 0; i < a; ++i) p[i * a + successor[i]] = 1.0;
    return TransitionMatrix(a, std::move(p));
}

TransitionMatrix TransitionMatrix::mix(double s, const TransitionMatrix& deter, const TransitionMatrix& unif) {
    if (deter.a_ != unif.a_) throw InputError("transition matrices differ in size");
    std::vector<double> p(deter.p_.size());
    for (std::size_t x = 0; x < p.size(); ++x) p[x] = s * deter.p_[x] + (1.0 - s) * unif.p_[x];
    return TransitionMatrix(deter.a_, std::move(p));
}

std::size_t TransitionMatrix::sample(std::size_t from, Rng& rng) const {
    const double u = rng.uniform01();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t j = 0; j < a_; ++j) {
        const double pj = p_[from * a_ + j];
        if (pj <= 0.0) continue;
        acc += pj;
        last_positive = j;
        if (u < acc) return j;
    }
    return last_positive;  // rounding left acc slightly below 1
}

bool TransitionMatrix::is_row_stochastic(double tol) const {
    for (std::size_t i = 0; i < a_; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < a_; ++j) {
            if (p_[i * a_ + j] < 0.0) return false;
            sum += p_[i * a_ + j];
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

MixabilityModel MixabilityModel::from_spec(const GenSpec& spec) {
    MixabilityModel m;
    Rng rng = derive_rng(spec.seed, "mix-alphabet", 0);
    std::set<int> chosen;
    while (chosen.size() < spec.mix_alphabet)
        chosen.insert(static_cast<int>(rng.uniform_int(spec.value_min, spec.value_max)));
    std::vector<int> values(chosen.begin(), chosen.end());
    rng.shuffle(std::span<int>(values));
    for (int v : values) m.alphabet.push_back(std::to_string(v));
    m.successor.resize(values.size());
    std::iota(m.successor.begin(), m.successor.end(), std::size_t{0});
    Rng prng = derive_rng(spec.seed, "mix-deter", 0);
    prng.shuffle(std::span<std::size_t>(m.successor));
    return m;
}

TransitionMatrix MixabilityModel::transition(double s) const {
    return TransitionMatrix::mix(s, TransitionMatrix::deterministic(successor), TransitionMatrix::uniform(alphabet.size()));
}

std::vector<std::size_t> generate_chain(std::size_t first, std::size_t length, const TransitionMatrix& m, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(length);
    if (length == 0) return out;
    out.push_back(first);
    while (out.size() < length) out.push_back(m.sample(out.back(), rng));
    return out;
}

// ---- tables ----

namespace {
std::pair<std::size_t, std::size_t> draw_dims(const GenSpec& spec, Rng& rng) {
    const auto r = static_cast<std::size_t>(spec.row_values[rng.index(spec.row_values.size())]);
    const auto c = static_cast<std::size_t>(spec.col_values[rng.index(spec.col_values.size())]);
    return {r, c};
}
}  // namespace

Table gen_table(const GenSpec& spec, Rng& rng) {
    auto [n_rows, n_cols] = draw_dims(spec, rng);
    std::vector<Row> rows(n_rows, Row(n_cols));
    for (auto& row : rows)
        for (auto& cell : row) cell = std::to_string(rng.uniform_int(spec.value_min, spec.value_max));
    return Table(default_headers(n_cols), std::move(rows));
}

Table gen_mixable_table(const GenSpec& spec, double s, Rng& rng) {
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("mixability S must lie in [0, 1]");
    const MixabilityModel model = MixabilityModel::from_spec(spec);
    const TransitionMatrix m = model.transition(s);
    auto [n_rows, n_cols] = draw_dims(spec, rng);
    std::vector<Row> rows;
    rows.reserve(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::size_t first = rng.index(model.alphabet.size());
        Row row;
        for (std::size_t idx : generate_chain(first, n_cols, m, rng)) row.push_back(model.alphabet[idx]);
        rows.push_back(std::move(row));
    }
    return Table(default_headers(n_cols), std::move(rows));
}

Table perturb_consistency(const Table& t, double r, const std::string& v0, Rng& rng) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("consistency R must lie in [0, 1]");
    std::vector<Row> rows = t.rows();
    for (auto& row : rows)
        for (auto& cell : row)
            if (rng.bernoulli(r)) cell = v0;
    return Table(t.headers(), std::move(rows));
}

std::string draw_v0(const GenSpec& spec) {
    Rng rng = derive_rng(spec.seed, "consistency-v0", 0);
    return std::to_string(rng.uniform_int(spec.value_min, spec.value_max));
}

// ---- query templates ----

namespace {

class QueryBuilder {
public:
    QueryBuilder(const Table& t, Rng& rng, const TemplateOptions& opts) : t_(t), rng_(rng), opts_(opts) {}

    std::string any_column() { return t_.headers()[rng_.index(t_.n_cols())]; }

    /// k distinct column indices.
    std::vector<std::size_t> distinct_columns(std::size_t k) {
        std::vector<std::size_t> idx(t_.n_cols());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng_.shuffle(std::span<std::size_t>(idx));
        idx.resize(k);
        return idx;
    }

    std::string value_for(std::size_t col) {
        if (opts_.adversarial) return std::to_string(rng_.uniform_int(opts_.value_min, opts_.value_max));
        return t_.cell(rng_.index(t_.n_rows()), col);
    }

    std::string comparison(std::size_t col) {
        const char* op = rng_.bernoulli(0.5) ? " = " : " != ";
        return t_.headers()[col] + op + value_for(col);
    }

    std::string connective() { return rng_.bernoulli(0.5) ? " and " : " or "; }

    std::string in_list(std::size_t col, std::size_t k) {
        // Distinct values when the column has enough of them.
        std::vector<std::string> pool;
        if (!opts_.adversarial) {
            std::set<std::string> seen;
            for (std::size_t r = 0; r < t_.n_rows(); ++r) seen.insert(t_.cell(r, col));
            pool.assign(seen.begin(), seen.end());
        }
        std::vector<std::string> vals;
        if (pool.size() >= k) {
            rng_.shuffle(std::span<std::string>(pool));
            vals.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
            for (std::size_t i = 0; i < k; ++i) vals.push_back(value_for(col));
        }
        std::string s = t_.headers()[col] + " in (";
        for (std::size_t i = 0; i < k; ++i) s += (i ? ", " : "") + vals[i];
        return s + ")";
    }

    std::string limit() { return " limit " + std::to_string(rng_.uniform_int(1, 3)); }

private:
    const Table& t_;
    Rng& rng_;
    const TemplateOptions& opts_;
};

}  // namespace

std::string instantiate_template(TemplateId id, const Table& t, Rng& rng, const TemplateOptions& opts) {
    if (t.n_cols() < required_columns(id))
        throw GenerationError("template " + to_string(id) + " needs " + std::to_string(required_columns(id)) +
                              " distinct columns, table has " + std::to_string(t.n_cols()));
    QueryBuilder b(t, rng, opts);
    std::string q = "select " + b.any_column();
    auto where_chain = [&](std::size_t atoms) {
        auto cols = b.distinct_columns(atoms);
        std::string s = " where " + b.comparison(cols[0]);
        for (std::size_t i = 1; i < atoms; ++i) s += b.connective() + b.comparison(cols[i]);
        return s;
    };
    switch (id) {
        case TemplateId::Select: break;
        case TemplateId::SelectLimit: q += b.limit(); break;
        case TemplateId::Where1: q += where_chain(1); break;
        case TemplateId::Where2: q += where_chain(2); break;
        case TemplateId::Where3: q += where_chain(3); break;
        case TemplateId::Where4: q += where_chain(4); break;
        case TemplateId::Subquery: {
            const std::size_t c = b.distinct_columns(1)[0];
            const std::string& name = t.headers()[c];
            q += " where " + name + " = (select " + name + " where " + name + " = " + b.value_for(c) + ")";
            break;
        }
        case TemplateId::In1:
        case TemplateId::In2:
        case TemplateId::In3: {
            const std::size_t k = id == TemplateId::In1 ? 1 : id == TemplateId::In2 ? 2 : 3;
            q += " where " + b.in_list(b.distinct_columns(1)[0], k);
            break;
        }
        case TemplateId::InLimit: {
            const auto k = static_cast<std::size_t>(rng.uniform_int(1, 3));
            q += " where " + b.in_list(b.distinct_columns(1)[0], k) + b.limit();
            break;
        }
        case TemplateId::WhereLimit: q += where_chain(1) + b.limit(); break;
        case TemplateId::WhereIn: {
            auto cols = b.distinct_columns(2);
            const auto k = static_cast<std::size_t>(rng.uniform_int(1, 3));
            q += " where " + b.comparison(cols[0]) + b.connective() + b.in_list(cols[1], k);
            break;
        }
    }
    return q;
}

// ---- datasets ----

QAExample gen_example(const GenSpec& spec, std::size_t index, GenStats* stats) {
    Rng rng = derive_rng(spec.seed, "example", index);
    const TemplateOptions topts{spec.adversarial, spec.value_min, spec.value_max};
    const std::string v0 = spec.disturbance == Disturbance::Consistency ? draw_v0(spec) : std::string();
    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Table table = spec.disturbance == Disturbance::Mixability ? gen_mixable_table(spec, spec.mixability_s, rng)
                                                                  : gen_table(spec, rng);
        if (spec.disturbance == Disturbance::Consistency) table = perturb_consistency(table, spec.consistency_r, v0, rng);

        std::string query;
        for (int retry = 0;; ++retry) {
            const TemplateId id = spec.templates[rng.index(spec.templates.size())];
            if (table.n_cols() >= required_columns(id)) {
                query = instantiate_template(id, table, rng, topts);
                break;
            }
            if (retry + 1 >= 10)
                throw GenerationError("no template fits a " + std::to_string(table.n_rows()) + "x" +
                                      std::to_string(table.n_cols()) + " table after 10 retries");
        }
        auto answer = sql::execute(query, table);
        if (answer.empty()) {
            if (stats) ++stats->empty_answers;
            if (spec.drop_empty) continue;
        }
        return QAExample{std::move(table), std::move(query), std::move(answer)};
    }
    throw GenerationError("example " + std::to_string(index) + ": no non-empty answer after " +
                          std::to_string(kMaxAttempts) + " attempts");
}

std::vector<QAExample> gen_dataset(const GenSpec& spec, GenStats* stats) {
    spec.validate();
    std::vector<QAExample> out;
    out.reserve(spec.n_examples);
    for (std::size_t i = 0; i < spec.n_examples; ++i) {
        try {
            out.push_back(gen_example(spec, i, stats));
        } catch (const sql::ExecutionError&) {
            if (stats) ++stats->skipped;
        }
    }
    return out;
}

std::string dataset_to_jsonl(const std::vector<QAExample>& examples) {
    std::string out;
    for (const auto& ex : examples) {
        out += example_to_json_line(ex);
        out += '\n';
    }
    return out;
}

}  // namespace tabenc::datagen
