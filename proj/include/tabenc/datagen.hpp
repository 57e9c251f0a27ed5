#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabenc/core.hpp"
#include "tabenc/rng.hpp"

namespace tabenc::datagen {

struct GenerationError : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

enum class TemplateId : std::uint8_t {
    // training ensemble
    Select,       // select cx
    SelectLimit,  // select cx limit k
    Where1,       // select cx where cy =|!= vy
    Where2,       // ... and|or cz =|!= vz
    Where3,
    Where4,
    Subquery,  // select cx where cy = (select cy where cy = vy)
    In1,       // select cx where cy in (vy)
    In2,       // select cx where cy in (vy, vy)
    In3,       // select cx where cy in (vy, vy, vy)
    // compositional: known pieces in new combinations
    InLimit,     // select cx where cy in (...) limit k
    WhereLimit,  // select cx where cy =|!= vy limit k
    WhereIn,     // select cx where cy =|!= vy and|or cz in (...)
};

std::vector<TemplateId> training_templates();
std::vector<TemplateId> compositional_templates();
std::string to_string(TemplateId id);
TemplateId parse_template(std::string_view name);
/// Distinct condition columns the template needs.
std::size_t required_columns(TemplateId id);

enum class Disturbance { None, Structure, Consistency, Compositional, Mixability };

struct GenSpec {
    std::vector<int> row_values{6, 7, 8};  // dimensions are drawn uniformly from these
    std::vector<int> col_values{6, 7, 8};
    int value_min = 0;
    int value_max = 999;
    std::size_t n_examples = 0;
    std::vector<TemplateId> templates = training_templates();
    Disturbance disturbance = Disturbance::None;
    double consistency_r = 0.2;  // Consistency: R in {0.2, 0.4}
    double mixability_s = 1.0;   // Mixability: S in [0, 1]
    std::size_t mix_alphabet = 20;
    Seed seed{};
    bool adversarial = false;  // condition values from the whole universe instead of the column
    bool drop_empty = false;

    /// Throws ConfigError on out-of-range parameters.
    void validate() const;

    /// train | structure | consistency | compositional | mixability
    static GenSpec for_suite(std::string_view suite, std::size_t n, Seed seed, double r = 0.2, double s = 1.0);
};

/// Square row-stochastic matrix over a reduced value alphabet.
class TransitionMatrix {
public:
    static TransitionMatrix uniform(std::size_t a);
    /// One 1 per row: i -> successor[i].
    static TransitionMatrix deterministic(const std::vector<std::size_t>& successor);
    /// s * deter + (1 - s) * unif.
    static TransitionMatrix mix(double s, const TransitionMatrix& deter, const TransitionMatrix& unif);

    std::size_t size() const { return a_; }
    double at(std::size_t from, std::size_t to) const { return p_[from * a_ + to]; }
    /// Inverse-CDF draw of the successor of `from`.
    std::size_t sample(std::size_t from, Rng& rng) const;
    bool is_row_stochastic(double tol = 1e-9) const;

private:
    TransitionMatrix(std::size_t a, std::vector<double> p) : a_(a), p_(std::move(p)) {}
    std::size_t a_;
    std::vector<double> p_;
};

/// Alphabet and deterministic successor map for mixability tables, both fixed by the dataset seed.
struct MixabilityModel {
    std::vector<std::string> alphabet;
    std::vector<std::size_t> successor;  // permutation used by the deterministic matrix

    static MixabilityModel from_spec(const GenSpec& spec);
    TransitionMatrix transition(double s) const;
};

/// Chain of alphabet indices: `first`, then draws from `m` conditioned on the previous value.
std::vector<std::size_t> generate_chain(std::size_t first, std::size_t length, const TransitionMatrix& m, Rng& rng);

Table gen_table(const GenSpec& spec, Rng& rng);
Table gen_mixable_table(const GenSpec& spec, double s, Rng& rng);

/// Each data cell independently becomes v0 with probability r; headers untouched.
Table perturb_consistency(const Table& t, double r, const std::string& v0, Rng& rng);
/// The single replacement value of a consistency dataset.
std::string draw_v0(const GenSpec& spec);

struct TemplateOptions {
    bool adversarial = false;
    int value_min = 0;
    int value_max = 999;
};

/// Throws GenerationError when the table has too few columns for the template.
std::string instantiate_template(TemplateId id, const Table& t, Rng& rng, const TemplateOptions& opts = {});

struct GenStats {
    std::size_t skipped = 0;  // oracle failures
    std::size_t empty_answers = 0;
};

QAExample gen_example(const GenSpec& spec, std::size_t index, GenStats* stats = nullptr);
std::vector<QAExample> gen_dataset(const GenSpec& spec, GenStats* stats = nullptr);
std::string dataset_to_jsonl(const std::vector<QAExample>& examples);

}  // namespace tabenc::datagen
