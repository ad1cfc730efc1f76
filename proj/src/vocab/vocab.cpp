#include <algorithm>
#include <array>
#include <fstream>
#include <mutex>
#include <sstream>

#include "json.hpp"

#include "gcd_audit/error.hpp"
#include "gcd_audit/utf8.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::vocab {

namespace {

struct SurrogateTable {
    std::array<char32_t, 256>                    forward{};
    std::unordered_map<char32_t, uint8_t>        inverse;

    SurrogateTable() {
        auto printable = [](int b) { return (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255); };
        char32_t next  = 256;
        for (int b = 0; b < 256; ++b) {
            forward[b] = printable(b) ? static_cast<char32_t>(b) : next++;
            inverse.emplace(forward[b], static_cast<uint8_t>(b));
        }
    }
};

const SurrogateTable & surrogates() {
    static const SurrogateTable table;
    return table;
}

constexpr std::string_view kSpMarker = "\xE2\x96\x81";  // U+2581

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::optional<uint8_t> parse_byte_fallback(std::string_view s) {
    // <0xNN>
    if (s.size() != 6 || s.substr(0, 3) != "<0x" || s[5] != '>') {
        return std::nullopt;
    }
    unsigned v = 0;
    for (char c : s.substr(3, 2)) {
        v <<= 4;
        if (c >= '0' && c <= '9') {
            v |= static_cast<unsigned>(c - '0');
        } else if (c >= 'A' && c <= 'F') {
            v |= static_cast<unsigned>(c - 'A' + 10);
        } else if (c >= 'a' && c <= 'f') {
            v |= static_cast<unsigned>(c - 'a' + 10);
        } else {
            return std::nullopt;
        }
    }
    return static_cast<uint8_t>(v);
}

bool mentions_byte_level(const nlohmann::json & node) {
    if (node.is_object()) {
        if (node.contains("type") && node["type"] == "ByteLevel") {
            return true;
        }
        for (const auto & [key, value] : node.items()) {
            if (mentions_byte_level(value)) {
                return true;
            }
        }
    } else if (node.is_array()) {
        for (const auto & value : node) {
            if (mentions_byte_level(value)) {
                return true;
            }
        }
    }
    return false;
}

}  // namespace

char32_t byte_to_surrogate(uint8_t b) {
    return surrogates().forward[b];
}

std::optional<uint8_t> surrogate_to_byte(char32_t c) {
    const auto & inv = surrogates().inverse;
    auto         it  = inv.find(c);
    if (it == inv.end()) {
        return std::nullopt;
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// TokenTrie
// ---------------------------------------------------------------------------

TokenTrie::TokenTrie(size_t vocab_size, std::vector<std::pair<uint32_t, std::u32string>> surfaces)
    : vocab_size_(vocab_size) {
    std::sort(surfaces.begin(), surfaces.end(),
              [](const auto & a, const auto & b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
    nodes_.emplace_back();
    // Sorted insertion: the child to extend is always the most recently added.
    std::vector<uint32_t> path{0};
    std::u32string        prev;
    for (const auto & [id, s] : surfaces) {
        size_t common = 0;
        while (common < s.size() && common < prev.size() && s[common] == prev[common]) {
            ++common;
        }
        path.resize(std::min(path.size(), common + 1));
        for (size_t k = path.size() - 1; k < s.size(); ++k) {
            const auto child = static_cast<uint32_t>(nodes_.size());
            nodes_.emplace_back();
            nodes_[path.back()].children.emplace_back(s[k], child);
            path.push_back(child);
        }
        nodes_[path[s.size()]].tokens.push_back(id);
        prev = s;
    }
}

TokenTrie TokenTrie::build(const Vocabulary & v) {
    std::vector<std::pair<uint32_t, std::u32string>> surfaces;
    surfaces.reserve(v.size());
    for (uint32_t id = 0; id < v.size(); ++id) {
        if (v.is_special(id)) {
            continue;
        }
        if (auto s = utf8::decode(v.bytes(id))) {
            surfaces.emplace_back(id, std::move(*s));
        }
    }
    return TokenTrie(v.size(), std::move(surfaces));
}

std::vector<std::pair<uint32_t, std::u32string>> TokenTrie::surfaces() const {
    std::vector<std::pair<uint32_t, std::u32string>> out;
    std::vector<std::pair<uint32_t, std::u32string>> todo{{0, U""}};
    while (!todo.empty()) {
        auto [n, prefix] = std::move(todo.back());
        todo.pop_back();
        for (uint32_t id : nodes_[n].tokens) {
            out.emplace_back(id, prefix);
        }
        for (const auto & [c, child] : nodes_[n].children) {
            todo.emplace_back(child, prefix + c);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

struct Vocabulary::TrieCache {
    std::once_flag             once;
    std::unique_ptr<TokenTrie> trie;
};

size_t Vocabulary::PairHash::operator()(const std::pair<std::string, std::string> & p) const noexcept {
    const size_t h1 = std::hash<std::string>{}(p.first);
    const size_t h2 = std::hash<std::string>{}(p.second);
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, Options options) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.mode_   = options.mode;
    v.special_.assign(v.tokens_.size(), false);
    v.byte_tokens_.assign(256, std::nullopt);
    v.trie_cache_ = std::make_shared<TrieCache>();

    for (uint32_t id : options.special_ids) {
        if (id >= v.tokens_.size()) {
            throw VocabError("special token id " + std::to_string(id) + " out of range");
        }
        v.special_[id] = true;
    }
    std::vector<bool> fallback(v.tokens_.size(), false);
    for (size_t b = 0; b < options.byte_fallback_ids.size() && b < 256; ++b) {
        const uint32_t id = options.byte_fallback_ids[b];
        if (id < v.tokens_.size()) {
            fallback[id]      = true;
            v.byte_tokens_[b] = id;
        }
    }

    for (uint32_t id = 0; id < v.tokens_.size(); ++id) {
        v.max_token_bytes_ = std::max(v.max_token_bytes_, v.tokens_[id].size());
        if (v.special_[id] || fallback[id]) {
            continue;
        }
        auto [it, inserted] = v.inverse_.emplace(v.tokens_[id], id);
        if (!inserted) {
            throw VocabError("duplicate token surface for ids " + std::to_string(it->second) + " and " +
                             std::to_string(id));
        }
        if (v.tokens_[id].size() == 1 && !v.byte_tokens_[static_cast<uint8_t>(v.tokens_[id][0])]) {
            v.byte_tokens_[static_cast<uint8_t>(v.tokens_[id][0])] = id;
        }
    }

    v.merges_ = std::move(options.merges);
    for (uint32_t rank = 0; rank < v.merges_.size(); ++rank) {
        v.merge_ranks_.emplace(std::make_pair(v.merges_[rank].left, v.merges_[rank].right), rank);
    }
    return v;
}

std::optional<uint32_t> Vocabulary::find(std::string_view surface) const {
    auto it = inverse_.find(std::string(surface));
    if (it == inverse_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<uint32_t> Vocabulary::merge_rank(std::string_view left, std::string_view right) const {
    auto it = merge_ranks_.find({std::string(left), std::string(right)});
    if (it == merge_ranks_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<uint32_t> Vocabulary::byte_token(uint8_t b) const {
    return byte_tokens_[b];
}

const TokenTrie & Vocabulary::trie() const {
    std::call_once(trie_cache_->once, [this] { trie_cache_->trie = std::make_unique<TokenTrie>(TokenTrie::build(*this)); });
    return *trie_cache_->trie;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

Vocabulary parse_vocab_json(std::string_view json_text) {
    using nlohmann::json;
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error & e) {
        throw VocabError(std::string("tokenizer file is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw VocabError("tokenizer file must contain a JSON object");
    }

    const bool        hf_layout = root.contains("model") && root["model"].is_object();
    const json &      model     = hf_layout ? root["model"] : root;
    if (!model.contains("vocab") || !model["vocab"].is_object()) {
        throw VocabError("tokenizer file has no 'vocab' object");
    }
    const json & vocab_obj = model["vocab"];

    VocabMode mode = VocabMode::Plain;
    if (root.contains("mode")) {
        const std::string m = root["mode"].get<std::string>();
        if (m == "byte_level") {
            mode = VocabMode::ByteLevel;
        } else if (m == "sentencepiece") {
            mode = VocabMode::SentencePiece;
        } else if (m != "plain") {
            throw VocabError("unknown vocabulary mode '" + m + "'");
        }
    } else if (hf_layout && (mentions_byte_level(root.value("decoder", json())) ||
                             mentions_byte_level(root.value("pre_tokenizer", json())))) {
        mode = VocabMode::ByteLevel;
    } else {
        for (const auto & [surface, id] : vocab_obj.items()) {
            if (surface.find(kSpMarker) != std::string::npos) {
                mode = VocabMode::SentencePiece;
                break;
            }
        }
    }

    auto resolve = [mode](const std::string & surface) -> std::string {
        switch (mode) {
            case VocabMode::ByteLevel: {
                auto scalars = utf8::decode(surface);
                if (!scalars) {
                    return surface;
                }
                std::string out;
                for (char32_t c : *scalars) {
                    auto b = surrogate_to_byte(c);
                    if (!b) {
                        return surface;  // not surrogate-encoded; keep verbatim
                    }
                    out.push_back(static_cast<char>(*b));
                }
                return out;
            }
            case VocabMode::SentencePiece: return replace_all(surface, kSpMarker, " ");
            case VocabMode::Plain: return surface;
        }
        return surface;
    };

    std::vector<std::optional<std::string>> table;
    auto                                    put = [&](int64_t id, std::string surface, bool override_ok) {
        if (id < 0) {
            throw VocabError("negative token id");
        }
        const auto idx = static_cast<size_t>(id);
        if (idx >= table.size()) {
            table.resize(idx + 1);
        }
        if (table[idx] && !override_ok) {
            throw VocabError("token id " + std::to_string(id) + " assigned twice");
        }
        table[idx] = std::move(surface);
    };

    Vocabulary::Options options;
    options.mode = mode;
    options.byte_fallback_ids.assign(256, UINT32_MAX);
    bool has_fallback = false;

    for (const auto & [surface, id_node] : vocab_obj.items()) {
        if (!id_node.is_number_integer()) {
            throw VocabError("vocab entry '" + surface + "' has a non-integer id");
        }
        const auto id = id_node.get<int64_t>();
        if (mode == VocabMode::SentencePiece) {
            if (auto b = parse_byte_fallback(surface)) {
                options.byte_fallback_ids[*b] = static_cast<uint32_t>(id);
                has_fallback                  = true;
                put(id, std::string(1, static_cast<char>(*b)), false);
                continue;
            }
        }
        put(id, resolve(surface), false);
    }

    const json * specials = nullptr;
    if (root.contains("added_tokens")) {
        specials = &root["added_tokens"];
    } else if (root.contains("special_tokens")) {
        specials = &root["special_tokens"];
    }
    if (specials != nullptr) {
        if (!specials->is_array()) {
            throw VocabError("added/special tokens must be an array");
        }
        for (const auto & entry : *specials) {
            if (!entry.is_object() || !entry.contains("id") || !entry.contains("content")) {
                throw VocabError("added token entries need 'id' and 'content'");
            }
            const auto id      = entry["id"].get<int64_t>();
            const bool special = entry.value("special", true);
            put(id, entry["content"].get<std::string>(), true);
            if (special) {
                options.special_ids.push_back(static_cast<uint32_t>(id));
            }
        }
    }

    if (model.contains("merges")) {
        for (const auto & m : model["merges"]) {
            std::string left;
            std::string right;
            if (m.is_string()) {
                const std::string s   = m.get<std::string>();
                const size_t      sep = s.find(' ', 1);
                if (sep == std::string::npos) {
                    throw VocabError("merge rule '" + s + "' has no separator");
                }
                left  = s.substr(0, sep);
                right = s.substr(sep + 1);
            } else if (m.is_array() && m.size() == 2) {
                left  = m[0].get<std::string>();
                right = m[1].get<std::string>();
            } else {
                throw VocabError("merge rules must be strings or [left, right] pairs");
            }
            options.merges.push_back({resolve(left), resolve(right)});
        }
    }

    std::vector<std::string> tokens;
    tokens.reserve(table.size());
    for (size_t id = 0; id < table.size(); ++id) {
        if (!table[id]) {
            throw VocabError("token ids are not dense: id " + std::to_string(id) + " is missing");
        }
        tokens.push_back(std::move(*table[id]));
    }
    if (!has_fallback) {
        options.byte_fallback_ids.clear();
    }
    return Vocabulary::from_tokens(std::move(tokens), std::move(options));
}

Vocabulary load_vocab(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open tokenizer file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_vocab_json(ss.str());
}

}  // namespace gcd_audit::vocab
