#include <exception>
#include <istream>
#include <string>
#include <unordered_map>

#include <omp.h>

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/error.hpp"

namespace gcd_audit::analysis {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// A newline followed by non-whitespace: no pre-tokenized piece spans it.
bool safe_cut(std::string_view text, size_t i) {
    return i > 0 && i < text.size() && text[i - 1] == '\n' && !is_space(text[i]);
}

size_t next_cut(std::string_view text, size_t from) {
    for (size_t i = std::max<size_t>(from, 1); i < text.size(); ++i) {
        if (safe_cut(text, i)) {
            return i;
        }
    }
    return text.size();
}

size_t last_cut(std::string_view text) {
    for (size_t i = text.size(); i-- > 1;) {
        if (safe_cut(text, i)) {
            return i;
        }
    }
    return 0;
}

struct PieceHash {
    using is_transparent = void;
    size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

using PieceCache = std::unordered_map<std::string, std::vector<uint32_t>, PieceHash, std::equal_to<>>;
constexpr size_t kMaxCacheEntries = 1u << 20;

struct Counter {
    explicit Counter(size_t vocab_size) : counts(vocab_size, 0) {}

    void add(std::span<const uint32_t> ids) {
        for (uint32_t id : ids) {
            ++counts[id];
        }
        tokens += ids.size();
    }

    std::vector<uint64_t> counts;
    uint64_t              tokens = 0;
};

void encode_shard(const vocab::Vocabulary & v, std::string_view text, PieceCache & cache, Counter & counter) {
    std::vector<uint32_t> ids;
    for (auto piece : vocab::pre_split(text)) {
        auto it = cache.find(piece);
        if (it == cache.end()) {
            ids.clear();
            vocab::encode_piece(v, piece, ids);
            if (cache.size() >= kMaxCacheEntries) {
                cache.clear();
            }
            it = cache.emplace(std::string(piece), ids).first;
        }
        counter.add(it->second);
    }
}

PrevalenceReport finish(std::span<const vocab::LwPair> pairs, const std::vector<uint64_t> & counts, uint64_t tokens,
                        uint64_t bytes) {
    PrevalenceReport r;
    r.total_tokens = tokens;
    r.total_bytes  = bytes;
    std::vector<double> ratios;
    for (const auto & p : pairs) {
        const uint64_t lw   = counts[p.lw_id];
        const uint64_t bare = counts[p.bare_id];
        r.per_pair.emplace_back(lw, bare);
        r.lw_count += lw;
        r.bare_count += bare;
        if (bare > 0) {
            ratios.push_back(static_cast<double>(lw) / static_cast<double>(bare));
        }
    }
    r.pairs_with_bare = ratios.size();
    if (r.bare_count > 0) {
        r.ratio = static_cast<double>(r.lw_count) / static_cast<double>(r.bare_count);
    }
    if (!ratios.empty()) {
        r.pair_mean_ratio = pairwise_sum(ratios) / static_cast<double>(ratios.size());
    }
    return r;
}

void check_pairs(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs) {
    for (const auto & p : pairs) {
        if (p.lw_id >= v.size() || p.bare_id >= v.size()) {
            throw ValidationError("pair (" + std::to_string(p.lw_id) + ", " + std::to_string(p.bare_id) +
                                  ") is outside the vocabulary");
        }
    }
}

class ParallelCounter {
  public:
    explicit ParallelCounter(const vocab::Vocabulary & v) : v_(v), total_(v.size()) {}

    // Shards `text` at safe cuts and encodes the shards concurrently.
    void add(std::string_view text) {
        caches_.resize(std::max(caches_.size(), static_cast<size_t>(omp_get_max_threads())));
        const size_t        want = std::max<size_t>(1, caches_.size() * 4);
        std::vector<size_t> cuts{0};
        for (size_t k = 1; k < want; ++k) {
            const size_t c = next_cut(text, text.size() * k / want);
            if (c > cuts.back() && c < text.size()) {
                cuts.push_back(c);
            }
        }
        cuts.push_back(text.size());
        const int64_t      shards = static_cast<int64_t>(cuts.size()) - 1;
        std::exception_ptr failure;
#pragma omp parallel
        {
            Counter local(v_.size());
            auto &  cache = caches_[static_cast<size_t>(omp_get_thread_num())];
#pragma omp for schedule(dynamic, 1)
            for (int64_t s = 0; s < shards; ++s) {
                try {
                    encode_shard(v_, text.substr(cuts[s], cuts[s + 1] - cuts[s]), cache, local);
                } catch (...) {
#pragma omp critical(gcd_prevalence_error)
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
#pragma omp critical(gcd_prevalence_merge)
            {
                for (size_t i = 0; i < local.counts.size(); ++i) {
                    total_.counts[i] += local.counts[i];
                }
                total_.tokens += local.tokens;
            }
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
        bytes_ += text.size();
    }

    PrevalenceReport report(std::span<const vocab::LwPair> pairs) const {
        return finish(pairs, total_.counts, total_.tokens, bytes_);
    }

  private:
    const vocab::Vocabulary & v_;
    Counter                   total_;
    uint64_t                  bytes_ = 0;
    std::vector<PieceCache>   caches_;
};

}  // namespace

PrevalenceReport corpus_prevalence_serial(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs,
                                          std::string_view corpus) {
    check_pairs(v, pairs);
    std::vector<uint64_t> counts(v.size(), 0);
    const auto            ids = vocab::encode(v, corpus);
    for (uint32_t id : ids) {
        ++counts[id];
    }
    return finish(pairs, counts, ids.size(), corpus.size());
}

PrevalenceReport corpus_prevalence(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs,
                                   std::string_view corpus) {
    check_pairs(v, pairs);
    ParallelCounter counter(v);
    counter.add(corpus);
    return counter.report(pairs);
}

PrevalenceReport corpus_prevalence(const vocab::Vocabulary & v, std::span<const vocab::LwPair> pairs,
                                   std::istream & corpus, size_t block_bytes) {
    check_pairs(v, pairs);
    if (block_bytes == 0) {
        throw ValidationError("block size must be positive");
    }
    ParallelCounter counter(v);
    std::string     buffer;
    std::string     block(block_bytes, '\0');
    while (corpus) {
        corpus.read(block.data(), static_cast<std::streamsize>(block.size()));
        const auto got = static_cast<size_t>(corpus.gcount());
        if (got == 0) {
            break;
        }
        buffer.append(block.data(), got);
        const size_t cut = last_cut(buffer);
        if (cut > 0) {
            counter.add(std::string_view(buffer).substr(0, cut));
            buffer.erase(0, cut);
        }
    }
    if (corpus.bad()) {
        throw IoError("read error in corpus stream");
    }
    if (!buffer.empty()) {
        counter.add(buffer);
    }
    return counter.report(pairs);
}

}  // namespace gcd_audit::analysis
