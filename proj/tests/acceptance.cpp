// Acceptance checks. Prints one line per criterion; exits non-zero when a
// criterion fails that is not listed as a known failure.
//
// Optional real assets (environment variables):
//   GCD_AUDIT_LLAMA_VOCAB        Llama-family tokenizer.json (criterion 7)
//   GCD_AUDIT_PREVALENCE_VOCAB   tokenizer for criterion 9 (defaults to the above)
//   GCD_AUDIT_PREVALENCE_CORPUS  >= 100 MB UTF-8 web text (criterion 9)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/error.hpp"
#include "gcd_audit/formats.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/harness.hpp"
#include "gcd_audit/utf8.hpp"
#include "gcd_audit/vocab.hpp"
#include "support/oracles.hpp"

using namespace gcd_audit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool        pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char * f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, x);
    return buf;
}

std::string read_file(const fs::path & p) {
    std::ifstream      in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char * env(const char * name) {
    const char * v = std::getenv(name);
    return v && *v ? v : nullptr;
}

// 1 ---------------------------------------------------------------------------

Outcome mask_oracle() {
    const auto      t0 = Clock::now();
    std::mt19937_64 rng(1000);
    size_t          cases = 0, mismatches = 0;
    while (cases < 1000) {
        grammar::CompiledGrammar g;
        try {
            g = grammar::compile_gbnf(oracle::random_grammar(rng));
        } catch (const GrammarError &) {
            continue;
        }
        const auto v = oracle::random_vocab(rng);
        for (const auto & s : oracle::random_walk(rng, g)) {
            if (cases == 1000) {
                break;
            }
            const auto expected = oracle::brute_force_mask(g, s, v);
            mismatches += grammar::allowed_tokens(g, s, v) != expected;
            mismatches += grammar::allowed_tokens_serial(g, s, v.trie()) != expected;
            ++cases;
        }
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 30.0, std::to_string(cases) + " cases, " + std::to_string(mismatches) +
                                                " mismatches, " + fmt("%.2f s", secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome appendix_closure() {
    const auto     t0 = Clock::now();
    std::u32string alphabet;
    for (char32_t c = 0x20; c < 0x7F; ++c) {
        alphabet.push_back(c);
    }
    alphabet += U"\n\t";
    auto lang = [&](const char * file, size_t max_len) {
        return grammar::enumerate_language(grammar::compile_gbnf(read_file(fs::path("../grammars") / file)), alphabet,
                                           max_len);
    };
    std::vector<std::u32string> stsb_expected;
    for (int i = 0; i < 100; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "0.%02d", i);
        stsb_expected.push_back(*utf8::decode(buf));
    }
    const std::vector<std::u32string> likert{U"1", U"2", U"3", U"4", U"5"};
    const std::vector<std::u32string> boolean{U"False", U"True"};
    bool        ok = true;
    std::string detail;
    auto        check = [&](const char * name, const std::vector<std::u32string> & got,
                     const std::vector<std::u32string> & want) {
        ok = ok && got == want;
        detail += std::string(name) + " " + std::to_string(got.size()) + (got == want ? " ok" : " MISMATCH") + "; ";
    };
    check("stsb", lang("stsb.gbnf", 6), stsb_expected);
    check("men", lang("men.gbnf", 3), likert);
    check("toxicchat", lang("toxicchat.gbnf", 3), likert);
    check("quora", lang("quora.gbnf", 7), boolean);
    const double secs = seconds_since(t0);
    return {ok && secs < 1.0, detail + fmt("%.3f s", secs)};
}

// 3 ---------------------------------------------------------------------------

Outcome format_closure() {
    size_t checked = 0, bad = 0;
    for (bool coarse : {false, true}) {
        formats::FormatOptions o;
        o.real_coarse = coarse;
        for (const auto & spec : formats::all_formats(o)) {
            std::set<std::u32string> expected;
            std::set<char32_t>       chars{U' ', U'\n', U'\t', U'.', U'%', U'-', U'0', U'1', U'9'};
            size_t                   longest = 0;
            for (const auto & [surface, value] : spec.value_map) {
                const auto e = *utf8::decode(spec.emitted(surface));
                expected.insert(e);
                chars.insert(e.begin(), e.end());
                longest = std::max(longest, e.size());
            }
            const std::u32string alphabet(chars.begin(), chars.end());
            const auto           g    = grammar::compile_gbnf(spec.gbnf_text);
            const auto           lang = grammar::enumerate_language(g, alphabet, longest + 2);
            bool                 same = std::set<std::u32string>(lang.begin(), lang.end()) == expected;
            // Every surface parses back to its own value.
            for (const auto & [surface, value] : spec.value_map) {
                same = same && grammar::validate_output(g, spec.emitted(surface)) &&
                       formats::value_of(spec, spec.emitted(surface)) == value;
            }
            bad += !same;
            ++checked;
        }
    }
    return {bad == 0 && checked == 80,
            std::to_string(checked) + " specs (40 x 2 real ranges), " + std::to_string(bad) + " mismatches"};
}

// 4 ---------------------------------------------------------------------------

Outcome statistics_oracles() {
    double worst = 0;
    size_t cases = 0;
    auto   compare = [&](const std::vector<double> & x, const std::vector<double> & y) {
        worst = std::max(worst, std::abs(analysis::spearman(x, y) - oracle::textbook_spearman(x, y)));
        worst = std::max(worst, std::abs(analysis::pearson(x, y) - oracle::textbook_pearson(x, y)));
        worst = std::max(worst, std::abs(analysis::mse(x, y) - oracle::textbook_mse(x, y)));
        ++cases;
    };
    for (size_t n = 2; n <= 6; ++n) {
        std::vector<double> base(n);
        std::iota(base.begin(), base.end(), 1.0);
        auto perm = base;
        do {
            compare(base, perm);
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
    std::mt19937_64 rng(4);
    size_t          random_cases = 0;
    while (random_cases < 1000) {
        const size_t        n = 2 + rng() % 30;
        std::vector<double> x(n), y(n);
        const int           lx = 1 + static_cast<int>(rng() % 5), ly = 1 + static_cast<int>(rng() % 5);
        for (size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng() % lx);
            y[i] = static_cast<double>(rng() % ly);
        }
        const bool flat = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                          std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
        if (flat) {
            continue;
        }
        compare(x, y);
        ++random_cases;
    }
    size_t      lev_cases = 0, lev_bad = 0;
    const char  alpha[]   = "abc";
    for (int i = 0; i < 2000; ++i) {
        std::string a(rng() % 8, 'a'), b(rng() % 8, 'a');
        for (auto & c : a) c = alpha[rng() % 3];
        for (auto & c : b) c = alpha[rng() % 3];
        lev_bad += static_cast<int>(analysis::levenshtein(a, b)) != oracle::exhaustive_edit_distance(a, b);
        ++lev_cases;
    }
    return {worst <= 1e-12 && lev_bad == 0,
            std::to_string(cases) + " stat cases, max |diff| " + fmt("%.2e", worst) + "; " +
                std::to_string(lev_cases) + " edit-distance cases, " + std::to_string(lev_bad) + " mismatches"};
}

// 5 ---------------------------------------------------------------------------

harness::RunConfig mock_config(const fs::path & out, double rho, uint64_t seed, size_t jobs) {
    harness::RunConfig c;
    c.run_id       = "acceptance";
    c.model        = "mock";
    c.model_family = "mock";
    c.model_size   = "small";
    c.benchmarks   = {{harness::BenchmarkKind::Stsb, "fixtures/stsb_20.tsv"},
                      {harness::BenchmarkKind::Men, "fixtures/men_20.tsv"},
                      {harness::BenchmarkKind::Qqp, "fixtures/qqp_20.csv"},
                      {harness::BenchmarkKind::ToxicChat, "fixtures/toxicchat_20.jsonl"}};
    c.formats      = {"all"};
    c.mock.target_rho = rho;
    c.mock.seed       = seed;
    c.jobs            = jobs;
    c.output          = out;
    return c;
}

std::vector<analysis::CorrelationReport> run_and_correlate(const harness::RunConfig & c) {
    fs::remove(c.output);
    harness::MockBackend backend(c.mock);
    harness::execute_run(c, backend);
    return analysis::correlation_table(harness::read_records(c.output),
                                       {analysis::GroupField::Benchmark, analysis::GroupField::Format});
}

Outcome pipeline_determinism(const fs::path & tmp) {
    const auto t0 = Clock::now();
    const auto a  = tmp / "a.jsonl";
    const auto b  = tmp / "b.jsonl";
    const auto perfect = run_and_correlate(mock_config(a, 1.0, 0, 1));
    const double secs  = seconds_since(t0);
    run_and_correlate(mock_config(b, 1.0, 0, 8));
    const bool   identical = read_file(a) == read_file(b);
    const size_t cells     = harness::read_records(a).size();

    double worst = 0;
    for (const auto & r : perfect) {
        worst = std::max(worst, std::isnan(r.rho) ? 1.0 : std::abs(r.rho - 1.0));
    }

    // Per seed: mean rho over every (benchmark, format) group.
    double seed_sum = 0, worst_group = 0;
    size_t undefined = 0;
    std::map<std::string, double> per_group;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const auto reps = run_and_correlate(mock_config(tmp / "z.jsonl", 0.0, seed, 4));
        double     sum  = 0;
        size_t     n    = 0;
        for (const auto & r : reps) {
            if (std::isnan(r.rho)) {
                ++undefined;
                continue;
            }
            sum += r.rho;
            per_group[r.key[0].second + "/" + r.key[1].second] += r.rho / 20.0;
            ++n;
        }
        seed_sum += sum / static_cast<double>(n);
    }
    for (const auto & [k, v] : per_group) {
        worst_group = std::max(worst_group, std::abs(v));
    }
    const double mean_zero = seed_sum / 20.0;
    const bool   ok = cells == 4 * 20 * 40 && secs < 60.0 && identical && worst <= 1e-12 && std::abs(mean_zero) <= 0.1;
    return {ok, std::to_string(cells) + " cells in " + fmt("%.2f s", secs) + ", jobs 1 vs 8 " +
                    (identical ? "byte-identical" : "DIFFER") + ", max |rho-1| " + fmt("%.1e", worst) +
                    " over " + std::to_string(perfect.size()) + " groups, rho=0 mean over 20 seeds " +
                    fmt("%+.4f", mean_zero) + " (largest per-group seed mean " + fmt("%.3f", worst_group) + ", " +
                    std::to_string(undefined) + " undefined groups)"};
}

// 6 ---------------------------------------------------------------------------

struct Table5Cell {
    const char * benchmark;
    const char * arm;
    double       accuracy;
    long         printed_change;
};

Outcome table_arithmetic(std::vector<std::string> & known_mismatches) {
    // Treatment deltas: each published delta becomes a pair of condition
    // correlations, the means are recomputed.
    struct Family {
        const char * name;
        double       d[4];
        double       mean;
    };
    const Family fams[] = {{"llama", {0.056, 0.037, -0.497, 0.005}, -0.100},
                           {"gemma", {0.138, 0.016, -0.510, -0.019}, -0.094},
                           {"phi", {0.006, 0.036, -0.451, 0.014}, -0.099},
                           {"qwen", {0.037, 0.011, -0.815, 0.059}, -0.177}};
    std::vector<analysis::ConditionRho> conds;
    const double                        base = 0.3;
    using formats::Variant;
    for (const auto & f : fams) {
        auto add = [&](const char * size, Variant v, bool nl, bool sp, double rho) {
            conds.push_back({f.name, size, "fixture", formats::Family::Real, v, nl, sp, rho});
        };
        add("small", Variant::Numeric, false, false, base);
        add("small", Variant::Numeric, true, false, base + f.d[0]);
        add("small", Variant::Numeric, false, true, base + f.d[1]);
        add("small", Variant::Word, false, false, base + f.d[2]);
        add("large", Variant::Numeric, false, false, base + f.d[3]);
    }
    const auto deltas   = analysis::treatment_deltas(conds);
    size_t     t4_cells = 0, t4_bad = 0;
    auto       shown3   = [](double x) { return std::round(x * 1000.0) / 1000.0; };
    for (const auto & f : fams) {
        for (size_t t = 0; t < 4; ++t) {
            t4_bad += shown3(deltas.delta.at(analysis::kTreatments[t]).at(f.name)) != f.d[t];
            ++t4_cells;
        }
        t4_bad += shown3(deltas.family_mean(f.name)) != f.mean;
        ++t4_cells;
    }

    // Multiple-choice table: published accuracies in, percent changes out.
    const char * arms[] = {"choice_stock", "choice_stock_newline", "choice_stock_space", "choice_as_integer",
                           "choice_as_real", "choice_as_word"};
    struct Row {
        const char * benchmark;
        double       acc[6];
        long         change[5];
    };
    const Row rows[] = {{"ARC-C", {59, 77, 63, 32, 22, 54}, {30, 7, -46, -63, -8}},
                        {"BoolQ", {38, 58, 41, 56, 46, 32}, {53, 8, 47, 21, -16}},
                        {"CommonsenseQA", {39, 75, 62, 29, 20, 59}, {92, 59, -26, -49, 51}},
                        {"HellaSwag", {43, 62, 37, 28, 24, 43}, {44, -14, -35, -44, 0}},
                        {"MMLU", {50, 62, 52, 34, 24, 48}, {24, 4, -32, -52, -4}},
                        {"OpenBookQA", {58, 79, 66, 36, 23, 66}, {36, 14, -38, -60, 14}},
                        {"Winogrande", {53, 58, 56, 49, 51, 54}, {9, 6, -8, -4, 2}}};
    const long mean_shown[]  = {49, 67, 54, 38, 30, 51};
    const long mean_change[] = {37, 10, -22, -39, 4};

    std::vector<analysis::ChoiceRow> input;
    for (const auto & r : rows) {
        analysis::ChoiceRow row{r.benchmark, {}};
        for (size_t k = 0; k < 6; ++k) {
            row.accuracy[arms[k]] = r.acc[k];
        }
        input.push_back(row);
    }
    const auto table = analysis::choice_table(input);
    size_t     t5_cells = 0;
    for (const auto & row : table.rows) {
        const bool   is_mean = row.benchmark == "mean";
        const Row *  src     = nullptr;
        for (const auto & r : rows) {
            if (row.benchmark == r.benchmark) {
                src = &r;
            }
        }
        const double stock = row.accuracy.at(arms[0]);
        if (is_mean && analysis::ChoiceTable::shown(stock) != mean_shown[0]) {
            known_mismatches.push_back("mean stock shown " + std::to_string(analysis::ChoiceTable::shown(stock)));
        }
        for (size_t k = 1; k < 6; ++k) {
            const double acc  = row.accuracy.at(arms[k]);
            const long   got  = analysis::ChoiceTable::percent_change(acc, stock);
            const long   want = is_mean ? mean_change[k - 1] : src->change[k - 1];
            ++t5_cells;
            if (is_mean && analysis::ChoiceTable::shown(acc) != mean_shown[k]) {
                known_mismatches.push_back("mean " + std::string(arms[k]) + " shown " +
                                           std::to_string(analysis::ChoiceTable::shown(acc)));
            }
            if (got != want) {
                known_mismatches.push_back(row.benchmark + " " + arms[k] + ": computed " + std::to_string(got) +
                                           "%, printed " + std::to_string(want) + "%");
            }
        }
    }
    std::string detail = "deltas " + std::to_string(t4_cells - t4_bad) + "/" + std::to_string(t4_cells) +
                         " cells match; choice table " + std::to_string(t5_cells - known_mismatches.size()) + "/" +
                         std::to_string(t5_cells) + " percent changes match (mean row 49 -> 67 gives " +
                         (analysis::ChoiceTable::percent_change(table.rows.back().accuracy.at(arms[1]),
                                                                table.rows.back().accuracy.at(arms[0])) >= 0
                              ? "+"
                              : "") +
                         std::to_string(analysis::ChoiceTable::percent_change(table.rows.back().accuracy.at(arms[1]),
                                                                              table.rows.back().accuracy.at(arms[0]))) +
                         "%)";
    for (const auto & m : known_mismatches) {
        detail += "; " + m;
    }
    return {t4_bad == 0 && known_mismatches.empty(), detail};
}

// 7 ---------------------------------------------------------------------------

Outcome lw_pairs() {
    const auto v     = vocab::load_vocab("fixtures/toy_vocab.json");
    const auto pairs = vocab::find_lw_pairs(v);
    const bool toy_ok = pairs == std::vector<vocab::LwPair>{{1, 0}, {3, 4}} &&
                        vocab::pair_participation_rate(v, pairs) == 4.0 / 10.0;
    std::string detail = std::string("toy vocabulary: 2 pairs, participation 0.4 ") + (toy_ok ? "exact" : "WRONG");
    bool        ok     = toy_ok;
    if (const char * path = env("GCD_AUDIT_LLAMA_VOCAB")) {
        const auto   real      = vocab::load_vocab(path);
        const auto   rp        = vocab::find_lw_pairs(real);
        const double rate      = vocab::pair_participation_rate(real, rp);
        const auto   culture   = real.find("culture");
        const auto   s_culture = real.find(" culture");
        const bool   has_pair  = culture && s_culture &&
                              std::find(rp.begin(), rp.end(), vocab::LwPair{*s_culture, *culture}) != rp.end();
        const bool in_band = rate >= 0.22 && rate <= 0.32;
        ok                 = ok && in_band && has_pair;
        detail += "; real tokenizer: " + std::to_string(rp.size()) + " pairs, participation " + fmt("%.4f", rate) +
                  (in_band ? " in [0.22, 0.32]" : " OUTSIDE [0.22, 0.32]") +
                  (has_pair ? ", culture pair present" : ", culture pair MISSING");
    } else {
        detail += "; real tokenizer SKIP (optional asset)";
    }
    return {ok, detail};
}

// 8 ---------------------------------------------------------------------------

Outcome embedding_stats() {
    const size_t                     dim = 64, n_pairs = 500, rows = 2 * n_pairs + 500;
    std::mt19937_64                  rng(88);
    std::normal_distribution<double> g(0, 1);
    analysis::EmbeddingMatrix        m;
    m.rows = rows;
    m.cols = dim;
    m.data.resize(rows * dim);
    for (auto & x : m.data) {
        x = static_cast<float>(g(rng));
    }
    const double                  planted = 0.6;
    std::vector<analysis::IdPair> pairs;
    for (size_t k = 0; k < n_pairs; ++k) {
        std::vector<double> u(dim), w(dim);
        double              nu = 0, dot = 0, nw = 0;
        for (size_t i = 0; i < dim; ++i) {
            u[i] = m.data[2 * k * dim + i];
            nu += u[i] * u[i];
        }
        for (auto & x : u) x /= std::sqrt(nu);
        for (size_t i = 0; i < dim; ++i) {
            w[i] = g(rng);
            dot += w[i] * u[i];
        }
        for (size_t i = 0; i < dim; ++i) {
            w[i] -= dot * u[i];
            nw += w[i] * w[i];
        }
        for (size_t i = 0; i < dim; ++i) {
            m.data[(2 * k + 1) * dim + i] =
                static_cast<float>(planted * u[i] + std::sqrt(1 - planted * planted) * w[i] / std::sqrt(nw));
        }
        pairs.emplace_back(static_cast<uint32_t>(2 * k), static_cast<uint32_t>(2 * k + 1));
    }
    const size_t k    = 20000;
    const auto   s    = analysis::pair_similarity_stats(m, pairs, k, 9);
    const auto   ser  = analysis::pair_similarity_stats_serial(m, pairs, k, 9);
    std::vector<double> pc, bc;
    for (const auto & [a, b] : pairs) pc.push_back(analysis::cosine(m.row(a), m.row(b)));
    for (const auto & [a, b] : analysis::random_id_pairs(rows, k, 9)) bc.push_back(analysis::cosine(m.row(a), m.row(b)));
    const double d_err = std::abs(s.cohens_d - oracle::textbook_cohens_d(pc, bc));

    auto same = [](const analysis::PairSimStats & x, const analysis::PairSimStats & y) {
        return x.mean == y.mean && x.std == y.std && x.baseline_mean == y.baseline_mean &&
               x.baseline_std == y.baseline_std && x.cohens_d == y.cohens_d;
    };
    bool exact = true;
    for (float c : {2.0f, 0.5f, 8.0f, 0.0625f, 1024.0f}) {
        auto scaled = m;
        for (auto & x : scaled.data) x *= c;
        exact = exact && same(analysis::pair_similarity_stats(scaled, pairs, k, 9), s);
    }
    double drift = 0;
    for (float c : {3.0f, 0.7f, 123.456f}) {
        auto scaled = m;
        for (auto & x : scaled.data) x *= c;
        const auto t = analysis::pair_similarity_stats(scaled, pairs, k, 9);
        drift        = std::max({drift, std::abs(t.mean - s.mean), std::abs(t.cohens_d - s.cohens_d)});
    }
    const bool ok = std::abs(s.mean - planted) <= 0.02 && d_err <= 1e-9 && exact && same(s, ser);
    return {ok, "planted " + fmt("%.2f", planted) + " recovered " + fmt("%.4f", s.mean) + ", Cohen's d " +
                    fmt("%.4f", s.cohens_d) + " (|diff| to formula " + fmt("%.1e", d_err) + "), scaling by powers of two " +
                    (exact ? "bit-exact" : "NOT exact") + ", other constants drift " + fmt("%.1e", drift) +
                    " (float32 re-rounding), parallel " + (same(s, ser) ? "==" : "!=") + " serial"};
}

// 9 ---------------------------------------------------------------------------

Outcome prevalence() {
    const auto v     = vocab::load_vocab("fixtures/toy_vocab.json");
    const auto pairs = vocab::find_lw_pairs(v);
    std::ifstream in("fixtures/toy_corpus.txt", std::ios::binary);
    const auto r = analysis::corpus_prevalence(v, pairs, in, 8);
    // Hand tokenization of "the cat\ncat cat the\n the dog\n":
    //   the | " cat" | \n | cat | " cat" | " the" | \n | " the" | " " dog | \n
    // cat pair: 2 LW, 1 bare; the pair: 2 LW, 1 bare.
    const bool toy_ok = r.per_pair == std::vector<std::pair<uint64_t, uint64_t>>{{2, 1}, {2, 1}} &&
                        r.lw_count == 4 && r.bare_count == 2 && r.ratio == 2.0 && r.pair_mean_ratio == 2.0 &&
                        r.total_tokens == 11;
    std::string detail = "toy corpus: LW 4, bare 2, ratio " + fmt("%.4f", r.ratio.value_or(NAN)) +
                         (toy_ok ? " exact" : " WRONG (" + std::to_string(r.lw_count) + "/" +
                                                  std::to_string(r.bare_count) + ", " +
                                                  std::to_string(r.total_tokens) + " tokens)");
    bool ok = toy_ok;
    const char * corpus = env("GCD_AUDIT_PREVALENCE_CORPUS");
    const char * tok    = env("GCD_AUDIT_PREVALENCE_VOCAB") ? env("GCD_AUDIT_PREVALENCE_VOCAB")
                                                            : env("GCD_AUDIT_LLAMA_VOCAB");
    if (corpus && tok) {
        const auto    real = vocab::load_vocab(tok);
        const auto    rp   = vocab::find_lw_pairs(real);
        std::ifstream cin(corpus, std::ios::binary);
        const auto    rr   = analysis::corpus_prevalence(real, rp, cin);
        const bool    big  = rr.total_bytes >= 100'000'000;
        ok                 = ok && rr.ratio.has_value() && big;
        detail += "; real corpus " + fmt("%.0f MB", rr.total_bytes / 1e6) + (big ? "" : " (BELOW 100 MB)") +
                  ", ratio " + (rr.ratio ? fmt("%.3f", *rr.ratio) : std::string("undefined")) + ", pair mean " +
                  (rr.pair_mean_ratio ? fmt("%.3f", *rr.pair_mean_ratio) : std::string("undefined")) +
                  (rr.ratio && *rr.ratio >= 1.66 && *rr.ratio <= 2.7 ? ", inside" : ", outside") +
                  " the published 1.66-2.7 range";
    } else {
        detail += "; real corpus SKIP (optional asset)";
    }
    return {ok, detail};
}

}  // namespace

int main() {
    // Fixtures are addressed relative to the tests directory.
    if (!fs::exists("fixtures")) {
        for (const char * name : {"GCD_AUDIT_LLAMA_VOCAB", "GCD_AUDIT_PREVALENCE_VOCAB", "GCD_AUDIT_PREVALENCE_CORPUS"}) {
            if (const char * v = env(name)) {
                setenv(name, fs::absolute(v).c_str(), 1);
            }
        }
        fs::current_path(GCD_AUDIT_TESTS_DIR);
    }
    const fs::path tmp = fs::temp_directory_path() / ("gcd_acceptance_" + std::to_string(std::random_device{}()));
    fs::create_directories(tmp);

    // Criteria whose failure is explained in the project notes and does not
    // fail the build.
    const std::set<int> known_failures{6};

    std::vector<std::string>                           table_mismatches;
    std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, mask_oracle},
        {2, appendix_closure},
        {3, format_closure},
        {4, statistics_oracles},
        {5, [&] { return pipeline_determinism(tmp); }},
        {6, [&] { return table_arithmetic(table_mismatches); }},
        {7, lw_pairs},
        {8, embedding_stats},
        {9, prevalence},
    };
    int unexpected = 0;
    for (const auto & [id, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception & e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %d: %s - %s%s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    !o.pass && known_failures.count(id) ? " [known failure]" : "");
        std::fflush(stdout);
        if (!o.pass && !known_failures.count(id)) {
            ++unexpected;
        }
    }
    std::error_code ec;
    fs::remove_all(tmp, ec);
    return unexpected == 0 ? 0 : 1;
}
