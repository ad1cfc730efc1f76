#pragma once

// Correlation statistics, treatment deltas, multiple-choice accuracy and
// the embedding/corpus whitespace-token analyses.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gcd_audit/formats.hpp"
#include "gcd_audit/harness.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::analysis {

// ---------------------------------------------------------------------------
// Scalar statistics. All sums use pairwise summation so results do not depend
// on how a caller chunks its data.
// ---------------------------------------------------------------------------

double pairwise_sum(std::span<const double> xs);

// 1-based ranks, ties share the average of the positions they span.
std::vector<double> average_ranks(std::span<const double> xs);

// Throw StatsError on length mismatch, fewer than two points, or a constant
// side (correlation undefined). mse only checks lengths and emptiness.
double spearman(std::span<const double> xs, std::span<const double> ys);
double pearson(std::span<const double> xs, std::span<const double> ys);
double mse(std::span<const double> xs, std::span<const double> ys);

// Edit distance over Unicode scalars (bytes when a side is not valid UTF-8).
size_t levenshtein(std::string_view a, std::string_view b);
// 1 - d / max(|a|, |b|); 1 when both are empty.
double levenshtein_similarity(std::string_view a, std::string_view b);
// Similarity prediction for each item's text pair.
std::vector<double> levenshtein_baseline(const std::vector<harness::BenchmarkItem> & items);

// ---------------------------------------------------------------------------
// Run-record tables
// ---------------------------------------------------------------------------

enum class GroupField { Model, ModelFamily, Size, Benchmark, Format, FormatFamily, Variant, Newline, Space };

std::string_view           to_string(GroupField f);
std::optional<GroupField>  parse_group_field(std::string_view s);
std::string                group_value(const harness::RunRecord & r, GroupField f);

struct CorrelationReport {
    std::vector<std::pair<std::string, std::string>> key;  // (field, value)
    double rho          = 0.0;  // NaN when undefined
    double r            = 0.0;  // NaN when undefined
    double mse          = 0.0;  // NaN when no valid record
    size_t n            = 0;    // valid records used
    size_t cells        = 0;    // all records in the group
    double failure_rate = 0.0;  // (cells - n) / cells
};

// One report per distinct key, ordered by key. Parse failures are excluded
// from the statistics and counted in failure_rate. Correlations are computed
// between value_norm and human_label. Multiple-choice records are skipped.
// Throws StatsError when nothing is left to correlate.
std::vector<CorrelationReport> correlation_table(const std::vector<harness::RunRecord> & records,
                                                 const std::vector<GroupField> & group_by);

// Mean over benchmarks of the Spearman correlation of plain cells (numeric
// variant, no treatment), per size class x model family x format family.
struct FormatTable {
    std::vector<std::string> sizes;           // row blocks
    std::vector<std::string> model_families;  // rows within a block
    // rho[size][model_family][family]; NaN when no benchmark had a defined rho
    std::map<std::string, std::map<std::string, std::map<formats::Family, double>>> rho;

    double at(const std::string & size, const std::string & model_family, formats::Family f) const;
    // Mean of the defined entries of one column within a size block.
    double column_mean(const std::string & size, formats::Family f) const;
};

FormatTable format_table(const std::vector<harness::RunRecord> & records);

// One correlation per experimental condition, the unit treatment deltas are
// computed from.
struct ConditionRho {
    std::string     model_family;
    std::string     size;
    std::string     benchmark;
    formats::Family family;
    formats::Variant variant;
    bool            with_newline = false;
    bool            with_space   = false;
    double          rho          = 0.0;
};

// Spearman per (model family, size, benchmark, format); undefined groups
// are dropped.
std::vector<ConditionRho> condition_rhos(const std::vector<harness::RunRecord> & records);

enum class Treatment { WithNewline, WithSpace, AsWord, AsLarge };
inline constexpr Treatment kTreatments[] = {Treatment::WithNewline, Treatment::WithSpace, Treatment::AsWord,
                                            Treatment::AsLarge};
std::string_view to_string(Treatment t);

struct DeltaTable {
    std::vector<std::string> model_families;
    // delta[treatment][model_family] = mean over matched condition pairs of
    // (rho with treatment - rho without)
    std::map<Treatment, std::map<std::string, double>> delta;
    std::map<Treatment, std::map<std::string, size_t>> pairs;  // matched pairs used

    // Mean over the four treatments for one model family.
    double family_mean(const std::string & model_family) const;
};

// Pairs every condition with its twin differing only in the treated arm:
// newline on/off, space on/off, word/numeric variant, "large"/"small" size.
// Throws StatsError if some family has no matched pair for a treatment.
DeltaTable treatment_deltas(const std::vector<ConditionRho> & conditions);
DeltaTable treatment_deltas(const std::vector<harness::RunRecord> & records);

struct AgreementMatrix {
    std::vector<std::string>         formats;  // format ids, sorted
    std::vector<std::vector<double>> rho;      // NaN where undefined
    std::vector<std::vector<size_t>> shared;   // items both formats parsed
};

// Spearman between the per-item values (mean over repeats) of every format
// pair of one model. Throws StatsError when fewer than two formats have any
// parsed value.
AgreementMatrix format_agreement_matrix(const std::vector<harness::RunRecord> & records, const std::string & model);

// Multiple-choice accuracy in whole percent, with change versus stock.
struct ChoiceRow {
    std::string                   benchmark;
    std::map<std::string, double> accuracy;  // arm id -> percent (may be fractional)
};

struct ChoiceTable {
    std::vector<std::string> arms;  // column order; first is the stock arm
    std::vector<ChoiceRow>   rows;  // per benchmark, then the mean row last

    // lround(accuracy) of a cell.
    static long   shown(double accuracy);
    // lround((shown(acc) - shown(stock)) / shown(stock) * 100).
    static long   percent_change(double accuracy, double stock);
};

// Accuracy per (benchmark, arm) from choice records; invalid outputs count
// as wrong. Throws StatsError if the stock arm is missing for a benchmark.
std::vector<ChoiceRow> choice_accuracy(const std::vector<harness::RunRecord> & records);

// Appends the mean row (mean of the shown accuracies, rounded) and fixes the
// column order: stock first, then the standard arms, then any others.
ChoiceTable choice_table(std::vector<ChoiceRow> rows, const std::string & stock_arm = "choice_stock");

// Baseline correlations: Pearson and MSE of a predictor against labels.
struct BaselineRow {
    std::string benchmark;
    std::string method;
    double      corr = 0.0;
    double      mse  = 0.0;
    size_t      n    = 0;
};

// Scores are compared against raw (source-scale) labels.
BaselineRow baseline_row(const std::string & benchmark, const std::string & method,
                         const std::vector<harness::BenchmarkItem> & items, const std::vector<double> & scores);

// `item_id<TAB or comma>score` lines; '#' comment lines skipped.
std::map<std::string, double> read_score_file(const std::filesystem::path & path);

// Aggregates as CSV `benchmark,method,corr,mse[,n]` with a header row.
std::vector<BaselineRow> read_baseline_aggregates(const std::filesystem::path & path);

// Mean of the corr column per method, in first-seen method order.
std::vector<std::pair<std::string, double>> baseline_means(const std::vector<BaselineRow> & rows);

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddingMatrix {
    size_t             rows = 0;
    size_t             cols = 0;
    std::vector<float> data;  // row-major

    std::span<const float> row(size_t i) const { return {data.data() + i * cols, cols}; }
};

// Binary: "GEMB", u64 rows, u64 cols (little endian), rows*cols LE float32.
// Text fallback: one row per line, whitespace-separated numbers.
// Throws IoError when unreadable, ValidationError when malformed.
EmbeddingMatrix load_embeddings(const std::filesystem::path & path);
void            save_embeddings(const EmbeddingMatrix & m, const std::filesystem::path & path);

// NaN for a zero vector.
double cosine(std::span<const float> a, std::span<const float> b);

struct PairSimStats {
    double mean          = 0.0;
    double std           = 0.0;  // sample standard deviation
    size_t n             = 0;
    size_t excluded      = 0;    // pairs with a zero vector
    double baseline_mean = 0.0;
    double baseline_std  = 0.0;
    size_t baseline_n    = 0;
    size_t baseline_excluded = 0;
    double cohens_d      = 0.0;  // pooled standard deviation
};

using IdPair = std::pair<uint32_t, uint32_t>;

// Cosines of `pairs` against `baseline_k` seeded random pairs of distinct
// ids. Throws ValidationError for out-of-range ids or baseline_k < 2.
PairSimStats pair_similarity_stats(const EmbeddingMatrix & m, std::span<const IdPair> pairs, size_t baseline_k,
                                   uint64_t seed);
PairSimStats pair_similarity_stats_serial(const EmbeddingMatrix & m, std::span<const IdPair> pairs,
                                          size_t baseline_k, uint64_t seed);

// The seeded random pairs used for the baseline.
std::vector<IdPair> random_id_pairs(size_t rows, size_t k, uint64_t seed);

double cohens_d(std::span<const double> a, std::span<const double> b);

// CSV `tag,pair,id,v0..v{d-1}`: a "lw" and a "bare" row per pair, then
// `background_k` seeded random rows tagged "background". Returns rows written.
size_t export_projection_inputs(const EmbeddingMatrix & m, std::span<const vocab::LwPair> pairs,
                                const std::filesystem::path & path, size_t background_k = 0, uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Corpus prevalence
// ---------------------------------------------------------------------------

struct PrevalenceReport {
    uint64_t              lw_count    = 0;  // occurrences of LW members
    uint64_t              bare_count  = 0;  // occurrences of bare members
    uint64_t              total_tokens = 0;
    uint64_t              total_bytes  = 0;
    std::optional<double> ratio;             // lw / bare, occurrence weighted
    std::optional<double> pair_mean_ratio;   // mean over pairs with bare > 0
    size_t                pairs_with_bare = 0;
    std::vector<std::pair<uint64_t, uint64_t>> per_pair;  // (lw, bare), pair order

    // bytes per token
    double compression() const { return total_tokens == 0 ? 0.0 : double(total_bytes) / double(total_tokens); }
};

// Encodes the stream in shards cut where a newline is followed by
// non-whitespace (pre-tokenization never spans such a point), in parallel.
// Throws VocabError when the corpus cannot be encoded.
PrevalenceReport corpus_prevalence(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs,
                                   std::istream & corpus, size_t block_bytes = 16u << 20);
PrevalenceReport corpus_prevalence(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs,
                                   std::string_view corpus);
// Reference: one encode() over the whole text.
PrevalenceReport corpus_prevalence_serial(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs,
                                          std::string_view corpus);

}  // namespace gcd_audit::analysis
