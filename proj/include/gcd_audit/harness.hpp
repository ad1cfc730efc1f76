#pragma once

// Benchmark ingestion, prompt rendering, inference backends and resumable
// run execution.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcd_audit/formats.hpp"

namespace gcd_audit::harness {

enum class BenchmarkKind { Stsb, Men, Qqp, ToxicChat, MultipleChoice };

std::string_view             to_string(BenchmarkKind k);
std::optional<BenchmarkKind> parse_kind(std::string_view s);

struct BenchmarkItem {
    std::string   id;
    std::string   text_a;
    std::string   text_b;            // empty for multiple-choice items
    double        label     = 0.0;   // normalized to [0, 1]
    double        raw_label = 0.0;   // as found in the source file
    double        source_lo = 0.0;
    double        source_hi = 1.0;
    BenchmarkKind kind      = BenchmarkKind::Stsb;
    std::vector<std::string> choices;  // multiple-choice only
    int                      gold = -1;
};

// Layouts:
//   stsb, men   TSV  text_a<TAB>text_b<TAB>score[<TAB>id]   (0-5 / 0-50)
//   qqp         CSV  id,qid1,qid2,question1,question2,is_duplicate (header row)
//   toxicchat   JSONL {"conv_id", "user_input", "model_output", "toxicity"}
//   multiple-choice JSONL {"id", "question", "choices": [...], "gold": k}
// Malformed rows throw ValidationError naming the line, unless `skip_bad`.
std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path & path, BenchmarkKind kind,
                                          bool skip_bad = false);
std::vector<BenchmarkItem> parse_benchmark(std::string_view text, BenchmarkKind kind, bool skip_bad = false);

// RFC 4180 records (quoted fields may contain commas, quotes and newlines).
// Each record carries the 1-based line it starts on.
struct CsvRecord {
    size_t                   line;
    std::vector<std::string> fields;
};
std::vector<CsvRecord> parse_csv(std::string_view text);

// Uniform sample without replacement, returned in source order. Throws
// ValidationError if n exceeds the item count.
std::vector<size_t>        sample_indices(size_t population, size_t n, uint64_t seed);
std::vector<BenchmarkItem> sample_items(const std::vector<BenchmarkItem> & items, size_t n, uint64_t seed);

// Prompt templates. `prefix`/`suffix` wrap the body for servers that do
// not apply a chat template themselves.
struct PromptWrap {
    std::string prefix;
    std::string suffix;
};

// Throws ValidationError for multiple-choice items.
std::string render_prompt(const BenchmarkItem & item, const formats::FormatSpec & spec, const PromptWrap & wrap = {});
// Throws ValidationError unless the item is multiple-choice.
std::string render_choice_prompt(const BenchmarkItem & item, const formats::ChoiceFormat & cf,
                                 const PromptWrap & wrap = {});

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

struct DecodeParams {
    double temperature = 0.8;  // llama.cpp server defaults
    double top_p       = 0.95;
    int    n_predict   = 8;
};

// One generation request. `item`, `spec` and `choice` let offline backends
// act on the item; network backends only use prompt, grammar and params.
struct Request {
    std::string                   prompt;
    std::string                   grammar;
    DecodeParams                  params;
    const BenchmarkItem *         item   = nullptr;
    const formats::FormatSpec *   spec   = nullptr;
    const formats::ChoiceFormat * choice = nullptr;
};

class Backend {
  public:
    virtual ~Backend() = default;
    // Returns the raw completion text. Throws BackendError on failure.
    virtual std::string complete(const Request & request) = 0;
    virtual bool        deterministic() const { return false; }
};

struct HttpOptions {
    std::string endpoint;         // http://host:port/path
    std::string auth_token;       // sent as "Authorization: Bearer <token>" when non-empty
    int         attempts   = 3;
    int         backoff_ms = 250;  // doubled after each failed attempt
    int         timeout_s  = 120;
};

// Resolves endpoint and token from GCD_AUDIT_ENDPOINT / GCD_AUDIT_TOKEN when
// set, falling back to the given values.
HttpOptions http_options_from_env(HttpOptions base);

class HttpBackend : public Backend {
  public:
    explicit HttpBackend(HttpOptions options);
    ~HttpBackend() override;
    std::string complete(const Request & request) override;

    // JSON body sent for a request (exposed for wire-format tests).
    static std::string request_body(const Request & request);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct MockKnobs {
    double   target_rho   = 1.0;
    uint64_t seed         = 0;
    double   invalid_rate = 0.0;  // fraction of cells answered outside the grammar
    double   accuracy     = 1.0;  // multiple-choice: chance of the gold answer
};

// Deterministic in (item id, spec id, seed). The latent value is the label
// plus Gaussian noise sized for the target rank correlation, then snapped
// to the nearest normalized value-map entry and emitted with treatment
// prefixes. target_rho <= 0 draws independently of the label (mirrored for
// negative targets).
std::string mock_complete(const BenchmarkItem & item, const formats::FormatSpec & spec, const MockKnobs & knobs);
std::string mock_choose(const BenchmarkItem & item, const formats::ChoiceFormat & cf, const MockKnobs & knobs);

class MockBackend : public Backend {
  public:
    explicit MockBackend(MockKnobs knobs) : knobs_(knobs) {}
    std::string complete(const Request & request) override;
    bool        deterministic() const override { return true; }

  private:
    MockKnobs knobs_;
};

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct BenchmarkSource {
    BenchmarkKind         kind;
    std::filesystem::path path;
};

struct RunConfig {
    std::string                  run_id = "run";
    std::string                  model  = "unknown";
    std::string                  model_family;
    std::string                  model_size;  // "small" / "large" or any tag
    std::vector<BenchmarkSource> benchmarks;
    size_t                       sample_size = 0;  // 0 = every item
    uint64_t                     seed        = 0;
    std::vector<std::string>     formats;          // spec ids, or "all"
    std::vector<std::string>     choice_formats;   // e.g. "choice_stock_newline", or "all"
    formats::FormatOptions       format_options;
    std::string                  backend = "mock";  // mock | http
    HttpOptions                  http;
    MockKnobs                    mock;
    DecodeParams                 decode;
    int                          context_length = 512;  // documented; enforced server-side
    int                          max_tokens     = 0;    // 0 = per-spec budget
    std::filesystem::path        vocab;                 // optional; enables token budget checks
    int                          repeats = 1;
    size_t                       jobs    = 0;  // 0 = logical CPUs, at most 16
    std::filesystem::path        output;
    PromptWrap                   wrap;
    bool                         skip_bad = false;
    std::optional<bool>          record_timing;  // default: on for http, off for mock
};

// `key = value` lines; '#' starts a comment; `benchmark = kind:path` may
// repeat. Relative paths resolve against `base_dir`. Throws ValidationError.
RunConfig parse_config(std::string_view text, const std::filesystem::path & base_dir = {});
RunConfig load_config(const std::filesystem::path & path);

// Checks the invariants that need no I/O: sample size, grid, repeats.
void validate_config(const RunConfig & config);

struct RunRecord {
    std::string           run_id;
    std::string           model;
    std::string           model_family;
    std::string           model_size;
    std::string           benchmark;
    std::string           item_id;
    std::string           format_id;
    std::string           family;   // format family, or "choice"
    std::string           variant;  // numeric/word, or the choice style
    bool                  with_newline = false;
    bool                  with_space   = false;
    int                   repeat       = 0;
    std::string           prompt_hash;
    std::string           raw_output;
    bool                  valid = false;
    std::optional<double> parsed_value;  // value, or chosen index for choices
    std::optional<double> value_norm;    // parsed value on [0, 1]
    double                human_label = 0.0;  // normalized label, or gold index
    std::optional<double> latency_ms;
    std::optional<std::string> timestamp;

    std::string cell_key() const;  // benchmark/item/format/repeat
};

inline constexpr int kRecordSchemaVersion = 1;

std::string to_jsonl(const RunRecord & r);  // one line, no trailing newline
RunRecord   record_from_json(std::string_view line);
std::vector<RunRecord> read_records(const std::filesystem::path & path);

struct RunSummary {
    size_t cells          = 0;
    size_t resumed        = 0;  // cells already present in the output
    size_t written        = 0;
    size_t parse_failures = 0;
};

// Executes every (benchmark item x format x repeat) cell not yet present in
// the output file. Records are appended in cell order. Throws BackendError
// when the backend gives up; records written so far stay on disk.
// `on_record` (optional) runs on the writer thread after each append.
RunSummary execute_run(const RunConfig & config, Backend & backend,
                       const std::function<void(const RunRecord &)> & on_record = {});

// Constructs the backend named by the config.
std::unique_ptr<Backend> make_backend(const RunConfig & config);

uint64_t    fnv1a64(std::string_view data);
std::string hex64(uint64_t v);

}  // namespace gcd_audit::harness
