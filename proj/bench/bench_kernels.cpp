// Serial versus OpenMP timings for the three parallel kernels.
//
//   bench_kernels [--vocab N] [--corpus-mb N] [--rows N] [--reps N]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include <omp.h>

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/vocab.hpp"

using namespace gcd_audit;

namespace {

template <typename F> double best_ms(int reps, F && f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        best          = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void report(const char * name, double serial, double parallel, bool same) {
    std::printf("%-12s serial %9.2f ms  parallel %9.2f ms  speedup %5.2fx  %s\n", name, serial, parallel,
                serial / parallel, same ? "identical" : "MISMATCH");
}

vocab::Vocabulary synthetic_vocab(size_t n, std::mt19937_64 & rng) {
    const std::string        alpha = "abcdefghijklmnopqrstuvwxyz0123456789.,";
    std::vector<std::string> tokens;
    for (int b = 0; b < 256; ++b) {
        if (b >= 0x20 && b < 0x7F) {
            tokens.emplace_back(1, static_cast<char>(b));
        }
    }
    tokens.emplace_back("\n");
    while (tokens.size() < n) {
        std::string t = rng() % 2 ? " " : "";
        const size_t len = 2 + rng() % 7;
        for (size_t i = 0; i < len; ++i) {
            t += alpha[rng() % alpha.size()];
        }
        tokens.push_back(std::move(t));
    }
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return vocab::Vocabulary::from_tokens(std::move(tokens));
}

size_t arg(int argc, char ** argv, const char * name, size_t def) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::strcmp(argv[i], name) == 0) {
            return std::strtoull(argv[i + 1], nullptr, 10);
        }
    }
    return def;
}

}  // namespace

int main(int argc, char ** argv) {
    const size_t n_vocab   = arg(argc, argv, "--vocab", 128000);
    const size_t corpus_mb = arg(argc, argv, "--corpus-mb", 16);
    const size_t rows      = arg(argc, argv, "--rows", 32000);
    const int    reps      = static_cast<int>(arg(argc, argv, "--reps", 3));
    std::printf("threads %d\n", omp_get_max_threads());

    std::mt19937_64 rng(1);
    const auto      v    = synthetic_vocab(n_vocab, rng);
    const auto &    trie = v.trie();

    // Token mask: a permissive grammar keeps most of the prefix tree live.
    {
        const auto g = grammar::compile_gbnf("root ::= (\" \"? [a-z0-9.,]+)+");
        const auto s = grammar::advance_utf8(g, grammar::initial_state(g), "ab");
        grammar::TokenMask a, b;
        const double       ts = best_ms(reps, [&] { a = grammar::allowed_tokens_serial(g, s, trie); });
        const double       tp = best_ms(reps, [&] { b = grammar::allowed_tokens(g, s, trie); });
        std::printf("mask: %zu tokens, %zu allowed\n", v.size(), a.count());
        report("mask", ts, tp, a == b);
    }

    // Prevalence: Zipf-distributed words, one sentence per line.
    {
        const std::string        letters = "abcdefghijklmnopqrstuvwxyz";
        std::vector<std::string> lexicon(20000);
        std::vector<double>      weights(lexicon.size());
        for (size_t i = 0; i < lexicon.size(); ++i) {
            const size_t len = 1 + rng() % 9;
            for (size_t k = 0; k < len; ++k) {
                lexicon[i] += letters[rng() % letters.size()];
            }
            weights[i] = 1.0 / static_cast<double>(i + 1);
        }
        std::discrete_distribution<size_t> zipf(weights.begin(), weights.end());
        std::string                        corpus;
        corpus.reserve(corpus_mb << 20);
        while (corpus.size() < (corpus_mb << 20)) {
            const size_t words = 5 + rng() % 15;
            for (size_t w = 0; w < words; ++w) {
                if (w) {
                    corpus += ' ';
                }
                corpus += lexicon[zipf(rng)];
            }
            corpus += ".\n";
        }
        const auto                 pairs = vocab::find_lw_pairs(v);
        analysis::PrevalenceReport a, b;
        const double ts = best_ms(reps, [&] { a = analysis::corpus_prevalence_serial(v, pairs, corpus); });
        const double tp = best_ms(reps, [&] { b = analysis::corpus_prevalence(v, pairs, std::string_view(corpus)); });
        std::printf("prevalence: %zu MiB, %zu pairs, %llu tokens\n", corpus_mb, pairs.size(),
                    static_cast<unsigned long long>(a.total_tokens));
        report("prevalence", ts, tp, a.per_pair == b.per_pair && a.total_tokens == b.total_tokens);
    }

    // Pair cosine statistics over a random matrix.
    {
        analysis::EmbeddingMatrix m;
        m.rows = rows;
        m.cols = 256;
        m.data.resize(m.rows * m.cols);
        std::normal_distribution<float> g(0, 1);
        for (auto & x : m.data) {
            x = g(rng);
        }
        const auto             pairs = analysis::random_id_pairs(rows, rows / 4, 2);
        analysis::PairSimStats a, b;
        const double ts = best_ms(reps, [&] { a = analysis::pair_similarity_stats_serial(m, pairs, 200000, 3); });
        const double tp = best_ms(reps, [&] { b = analysis::pair_similarity_stats(m, pairs, 200000, 3); });
        std::printf("embsim: %zu x %zu, %zu pairs + 200000 baseline\n", m.rows, m.cols, pairs.size());
        report("embsim", ts, tp, a.mean == b.mean && a.cohens_d == b.cohens_d);
    }
    return 0;
}
