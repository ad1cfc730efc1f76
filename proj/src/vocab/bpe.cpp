#include <limits>

#include "gcd_audit/error.hpp"
#include "gcd_audit/utf8.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::vocab {

namespace {

enum class CharKind { Letter, Digit, Space, OtherSpace, Punct };

CharKind kind_of(char ch) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80) {
        return CharKind::Letter;
    }
    if (c >= '0' && c <= '9') {
        return CharKind::Digit;
    }
    if (c == ' ') {
        return CharKind::Space;
    }
    if (c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
        return CharKind::OtherSpace;
    }
    return CharKind::Punct;
}

bool is_ws(char c) {
    const auto k = kind_of(c);
    return k == CharKind::Space || k == CharKind::OtherSpace;
}

size_t contraction_length(std::string_view rest) {
    // 's 't 're 've 'm 'll 'd
    if (rest.size() < 2 || rest[0] != '\'') {
        return 0;
    }
    for (std::string_view c : {"re", "ve", "ll"}) {
        if (rest.substr(1, 2) == c) {
            return 3;
        }
    }
    switch (rest[1]) {
        case 's':
        case 't':
        case 'm':
        case 'd': return 2;
        default: return 0;
    }
}

// Splits into initial BPE symbols: bytes for byte-level vocabularies,
// UTF-8 characters otherwise (invalid sequences fall back to single bytes).
std::vector<std::string> initial_symbols(const Vocabulary & v, std::string_view piece) {
    std::vector<std::string> symbols;
    size_t                   i = 0;
    while (i < piece.size()) {
        size_t len = 1;
        if (v.mode() != VocabMode::ByteLevel) {
            const auto b0 = static_cast<unsigned char>(piece[i]);
            len           = b0 < 0x80 ? 1 : (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3 : (b0 & 0xF8) == 0xF0 ? 4 : 1;
            if (i + len > piece.size() || !utf8::decode(piece.substr(i, len))) {
                len = 1;
            }
        }
        symbols.emplace_back(piece.substr(i, len));
        i += len;
    }
    return symbols;
}

void emit_symbol(const Vocabulary & v, const std::string & symbol, std::vector<uint32_t> & out) {
    if (auto id = v.find(symbol)) {
        out.push_back(*id);
        return;
    }
    for (char c : symbol) {
        auto id = v.byte_token(static_cast<uint8_t>(c));
        if (!id) {
            throw VocabError("cannot encode byte 0x" + std::to_string(static_cast<unsigned char>(c)) +
                             ": vocabulary has no token for it");
        }
        out.push_back(*id);
    }
}

void encode_greedy(const Vocabulary & v, std::string_view piece, std::vector<uint32_t> & out) {
    size_t i = 0;
    while (i < piece.size()) {
        size_t len = std::min(v.max_token_bytes(), piece.size() - i);
        for (; len > 0; --len) {
            if (auto id = v.find(piece.substr(i, len))) {
                out.push_back(*id);
                break;
            }
        }
        if (len == 0) {
            emit_symbol(v, std::string(1, piece[i]), out);
            len = 1;
        }
        i += len;
    }
}

}  // namespace

std::vector<std::string_view> pre_split(std::string_view text) {
    std::vector<std::string_view> pieces;
    const size_t                  n = text.size();
    size_t                        i = 0;
    while (i < n) {
        const size_t start = i;
        if (size_t c = contraction_length(text.substr(i)); c > 0) {
            pieces.push_back(text.substr(start, c));
            i += c;
            continue;
        }
        size_t j = i;
        if (text[i] == ' ' && i + 1 < n && !is_ws(text[i + 1])) {
            j = i + 1;
        }
        if (!is_ws(text[j])) {
            const CharKind k = kind_of(text[j]);
            size_t         e = j + 1;
            while (e < n && kind_of(text[e]) == k && !(k == CharKind::Punct && contraction_length(text.substr(e)) > 0)) {
                ++e;
            }
            pieces.push_back(text.substr(start, e - start));
            i = e;
            continue;
        }
        // whitespace run; the last space of a run followed by a word joins that word
        size_t e = i;
        while (e < n && is_ws(text[e])) {
            ++e;
        }
        if (e < n && e - i > 1 && text[e - 1] == ' ') {
            --e;
        }
        pieces.push_back(text.substr(start, e - start));
        i = e;
    }
    return pieces;
}

void encode_piece(const Vocabulary & v, std::string_view piece, std::vector<uint32_t> & out) {
    if (piece.empty()) {
        return;
    }
    if (v.merges().empty()) {
        encode_greedy(v, piece, out);
        return;
    }
    std::vector<std::string> symbols = initial_symbols(v, piece);
    while (symbols.size() > 1) {
        uint32_t best_rank = std::numeric_limits<uint32_t>::max();
        size_t   best      = 0;
        for (size_t k = 0; k + 1 < symbols.size(); ++k) {
            if (auto r = v.merge_rank(symbols[k], symbols[k + 1]); r && *r < best_rank) {
                best_rank = *r;
                best      = k;
            }
        }
        if (best_rank == std::numeric_limits<uint32_t>::max()) {
            break;
        }
        symbols[best] += symbols[best + 1];
        symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    }
    for (const auto & s : symbols) {
        emit_symbol(v, s, out);
    }
}

std::vector<uint32_t> encode(const Vocabulary & v, std::string_view text) {
    std::vector<uint32_t> out;
    for (auto piece : pre_split(text)) {
        encode_piece(v, piece, out);
    }
    return out;
}

std::optional<size_t> min_token_count(const Vocabulary & v, std::string_view text) {
    constexpr size_t    kInf = std::numeric_limits<size_t>::max();
    std::vector<size_t> best(text.size() + 1, kInf);
    best[0] = 0;
    for (size_t i = 0; i < text.size(); ++i) {
        if (best[i] == kInf) {
            continue;
        }
        const size_t max_len = std::min(v.max_token_bytes(), text.size() - i);
        for (size_t len = 1; len <= max_len; ++len) {
            const bool hit = v.find(text.substr(i, len)).has_value() ||
                             (len == 1 && v.byte_token(static_cast<uint8_t>(text[i])).has_value());
            if (hit) {
                best[i + len] = std::min(best[i + len], best[i] + 1);
            }
        }
    }
    if (best[text.size()] == kInf) {
        return std::nullopt;
    }
    return best[text.size()];
}

std::string decode(const Vocabulary & v, std::span<const uint32_t> ids, SpecialDecode specials) {
    std::string out;
    for (uint32_t id : ids) {
        if (id >= v.size()) {
            throw VocabError("token id " + std::to_string(id) + " out of range (vocabulary size " +
                             std::to_string(v.size()) + ")");
        }
        if (v.is_special(id) && specials == SpecialDecode::Empty) {
            continue;
        }
        out += v.bytes(id);
    }
    return out;
}

}  // namespace gcd_audit::vocab
