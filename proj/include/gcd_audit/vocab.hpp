#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gcd_audit::vocab {

class Vocabulary;

// Prefix tree over the decoded Unicode scalars of every non-special token
// whose bytes are valid UTF-8. Node 0 is the root.
class TokenTrie {
  public:
    struct Node {
        std::vector<std::pair<char32_t, uint32_t>> children;  // sorted by scalar
        std::vector<uint32_t>                      tokens;    // ids whose surface ends here
    };

    // `surfaces` pairs a token id with its scalar surface; ids not listed are
    // never reachable. `vocab_size` bounds the ids.
    TokenTrie(size_t vocab_size, std::vector<std::pair<uint32_t, std::u32string>> surfaces);

    static TokenTrie build(const Vocabulary & v);

    size_t       vocab_size() const { return vocab_size_; }
    size_t       node_count() const { return nodes_.size(); }
    const Node & node(uint32_t i) const { return nodes_[i]; }

    // Every (id, surface) stored in the tree, in id order.
    std::vector<std::pair<uint32_t, std::u32string>> surfaces() const;

  private:
    size_t            vocab_size_;
    std::vector<Node> nodes_;
};

enum class VocabMode {
    ByteLevel,      // GPT-2 style byte-to-unicode surrogates in the file
    SentencePiece,  // U+2581 marks spaces; <0xNN> byte-fallback tokens
    Plain,          // surfaces stored verbatim
};

enum class SpecialDecode { Empty, Marker };

struct Merge {
    std::string left;
    std::string right;
};

// Immutable token table. Token surfaces are real bytes: byte-level surrogates
// are resolved and the SentencePiece space marker is normalized to ' ' when
// loading.
class Vocabulary {
  public:
    struct Options {
        VocabMode            mode = VocabMode::Plain;
        std::vector<Merge>   merges;
        std::vector<uint32_t> special_ids;
        std::vector<uint32_t> byte_fallback_ids;  // SentencePiece <0xNN> tokens, index = byte
    };

    // Tokens are given as real byte strings, id = position.
    static Vocabulary from_tokens(std::vector<std::string> tokens, Options options);
    static Vocabulary from_tokens(std::vector<std::string> tokens) { return from_tokens(std::move(tokens), Options()); }

    size_t              size() const { return tokens_.size(); }
    const std::string & bytes(uint32_t id) const { return tokens_.at(id); }
    bool                is_special(uint32_t id) const { return special_[id]; }
    VocabMode           mode() const { return mode_; }

    // Regular tokens only; specials and byte-fallback tokens are not indexed.
    std::optional<uint32_t> find(std::string_view surface) const;

    const std::vector<Merge> & merges() const { return merges_; }
    std::optional<uint32_t>    merge_rank(std::string_view left, std::string_view right) const;
    std::optional<uint32_t>    byte_token(uint8_t b) const;
    size_t                     max_token_bytes() const { return max_token_bytes_; }

    // Built on first use and shared by copies; safe to call concurrently.
    const TokenTrie & trie() const;

  private:
    struct PairHash {
        size_t operator()(const std::pair<std::string, std::string> & p) const noexcept;
    };
    struct TrieCache;

    std::vector<std::string>                                               tokens_;
    std::vector<bool>                                                      special_;
    std::unordered_map<std::string, uint32_t>                              inverse_;
    std::vector<Merge>                                                     merges_;
    std::unordered_map<std::pair<std::string, std::string>, uint32_t, PairHash> merge_ranks_;
    std::vector<std::optional<uint32_t>>                                   byte_tokens_;
    VocabMode                                                              mode_ = VocabMode::Plain;
    size_t                                                                 max_token_bytes_ = 0;
    std::shared_ptr<TrieCache>                                             trie_cache_;
};

// GPT-2 byte <-> printable-scalar table used by byte-level vocabulary files.
char32_t                byte_to_surrogate(uint8_t b);
std::optional<uint8_t>  surrogate_to_byte(char32_t c);

// Reads a tokenizer JSON description: either the common `tokenizer.json`
// layout (model.vocab, model.merges, added_tokens) or a flat object with
// `vocab`, optional `merges`, `special_tokens` and `mode`.
// Throws VocabError for malformed content, IoError if the file is unreadable.
Vocabulary load_vocab(const std::filesystem::path & path);
Vocabulary parse_vocab_json(std::string_view json_text);

// GPT-2 style pre-tokenization (ASCII character classes; bytes >= 0x80 count
// as letters). Pieces never span a newline followed by non-whitespace.
std::vector<std::string_view> pre_split(std::string_view text);

// Encodes one pre-split piece. Uses BPE merges when the vocabulary has any,
// otherwise greedy longest match. Throws VocabError for unencodable bytes.
void encode_piece(const Vocabulary & v, std::string_view piece, std::vector<uint32_t> & out);

std::vector<uint32_t> encode(const Vocabulary & v, std::string_view text);

// Fewest tokens whose concatenated surfaces equal `text` (shortest path
// segmentation); nullopt if no segmentation exists.
std::optional<size_t> min_token_count(const Vocabulary & v, std::string_view text);

// Throws VocabError for an out-of-range id.
std::string decode(const Vocabulary & v, std::span<const uint32_t> ids, SpecialDecode specials = SpecialDecode::Empty);

struct LwPair {
    uint32_t lw_id;
    uint32_t bare_id;

    bool operator==(const LwPair &) const = default;
};

// Pairs (" " + s, s) where both are regular tokens. Ordered by bare_id.
std::vector<LwPair> find_lw_pairs(const Vocabulary & v);

// Tokens t not starting with `prefix` such that prefix + t is also a token.
size_t count_prefix_twins(const Vocabulary & v, char prefix);

// Distinct token ids appearing in any pair, divided by |V|.
double pair_participation_rate(const Vocabulary & v, std::span<const LwPair> pairs);

}  // namespace gcd_audit::vocab
