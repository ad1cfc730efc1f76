#pragma once

// GBNF parsing, compilation and incremental recognition.
//
// The recognizer is a stack-set machine in the style of the llama.cpp GBNF
// implementation: a state is the set of pushdown stacks that survive the
// consumed prefix, each stack ending in a character-class position.
// Recognition works on Unicode scalar values, never on raw bytes.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gcd_audit::vocab {
class TokenTrie;
class Vocabulary;
}  // namespace gcd_audit::vocab

namespace gcd_audit::grammar {

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

struct CharRange {
    char32_t lo;
    char32_t hi;

    bool operator==(const CharRange &) const = default;
};

struct Element;
using Sequence    = std::vector<Element>;
using Alternation = std::vector<Sequence>;

struct Literal {
    std::u32string text;
};

// `.` parses as a negated class with no ranges.
struct CharClass {
    std::vector<CharRange> ranges;
    bool                   negated = false;
};

struct RuleRef {
    std::string name;
};

struct Group {
    Alternation alternatives;
};

enum class RepeatKind { ZeroOrMore, OneOrMore, Optional };

struct Repeat {
    std::vector<Element> inner;  // always exactly one element
    RepeatKind           kind;
};

struct Element {
    std::variant<Literal, CharClass, RuleRef, Group, Repeat> node;
};

struct Rule {
    std::string name;
    Alternation alternatives;
    size_t      line = 0;
};

struct GrammarAst {
    std::vector<Rule> rules;  // definition order

    const Rule * find(std::string_view name) const;
};

// Throws GrammarError (with line/column) on syntax errors, undefined rule
// references, duplicate definitions, or a missing `root` rule.
GrammarAst parse_gbnf(std::string_view text);

// ---------------------------------------------------------------------------
// Compiled grammar
// ---------------------------------------------------------------------------

enum class SymbolKind : uint8_t { End, Chars, Rule };

struct Symbol {
    SymbolKind kind;
    uint32_t   value;  // class index for Chars, rule id for Rule
};

class CompiledGrammar {
  public:
    uint32_t root() const { return root_; }
    size_t   rule_count() const { return alt_starts_.size(); }
    const std::string & rule_name(uint32_t rule) const { return names_[rule]; }

    // Offsets of the first symbol of every alternative of `rule`.
    std::span<const uint32_t> alternatives(uint32_t rule) const { return alt_starts_[rule]; }

    const Symbol & symbol(uint32_t pos) const { return symbols_[pos]; }
    bool           matches(uint32_t pos, char32_t c) const;
    bool           nullable(uint32_t rule) const { return nullable_[rule]; }
    bool           is_nullable() const { return nullable_[root_]; }

    // Rule-by-rule listing of the normalized table, for debugging and docs.
    std::string dump() const;

  private:
    friend CompiledGrammar compile(const GrammarAst & ast);

    std::vector<Symbol>                symbols_;
    std::vector<CharClass>             classes_;
    std::vector<std::vector<uint32_t>> alt_starts_;
    std::vector<std::string>           names_;
    std::vector<bool>                  nullable_;
    uint32_t                           root_ = 0;
};

// Desugars repetitions and groups into auxiliary rules, numbers rules in
// definition order (auxiliary rules appended in traversal order), and
// rejects left recursion and a root that derives no finite string.
CompiledGrammar compile(const GrammarAst & ast);

inline CompiledGrammar compile_gbnf(std::string_view text) {
    return compile(parse_gbnf(text));
}

// ---------------------------------------------------------------------------
// Recognition
// ---------------------------------------------------------------------------

using Stack = std::vector<uint32_t>;

inline constexpr size_t kMaxStackDepth = 1024;

class ConstraintState {
  public:
    ConstraintState() = default;

    bool   rejected() const { return stacks_.empty(); }
    // Stacks are kept sorted, so an empty stack can only be the first one.
    bool   terminable() const { return !stacks_.empty() && stacks_.front().empty(); }
    size_t consumed() const { return consumed_; }

    const std::vector<Stack> & stacks() const { return stacks_; }

    bool operator==(const ConstraintState &) const = default;

  private:
    friend ConstraintState initial_state(const CompiledGrammar & g);
    friend ConstraintState advance(const CompiledGrammar & g, const ConstraintState & s, char32_t c);

    std::vector<Stack> stacks_;
    size_t             consumed_ = 0;
};

ConstraintState initial_state(const CompiledGrammar & g);

// A rejected input state stays rejected. Throws GrammarError if a stack would
// exceed kMaxStackDepth.
ConstraintState advance(const CompiledGrammar & g, const ConstraintState & s, char32_t c);
ConstraintState advance_text(const CompiledGrammar & g, ConstraintState s, std::u32string_view text);

// Invalid UTF-8 yields a rejected state.
ConstraintState advance_utf8(const CompiledGrammar & g, ConstraintState s, std::string_view text);

bool validate_output(const CompiledGrammar & g, std::string_view utf8_text);

// True if some stack in `s` can consume `c` next.
bool accepts_next(const CompiledGrammar & g, const ConstraintState & s, char32_t c);

// All strings of the grammar's language of length <= max_len over `alphabet`,
// found by depth-first search over recognizer states. Sorted, unique.
std::vector<std::u32string> enumerate_language(const CompiledGrammar & g,
                                               std::span<const char32_t> alphabet,
                                               size_t max_len);

// ---------------------------------------------------------------------------
// Token masks
// ---------------------------------------------------------------------------

class TokenMask {
  public:
    TokenMask() = default;
    explicit TokenMask(size_t n) : size_(n), words_((n + 63) / 64, 0) {}

    size_t size() const { return size_; }
    void   set(size_t i) { words_[i / 64] |= uint64_t{1} << (i % 64); }
    bool   test(size_t i) const { return (words_[i / 64] >> (i % 64)) & 1; }
    size_t count() const;

    std::vector<uint32_t> ids() const;

    bool eos_allowed = false;

    bool operator==(const TokenMask &) const = default;

  private:
    size_t                size_ = 0;
    std::vector<uint64_t> words_;
};

// Bit i is set iff advancing `s` by token i's decoded scalars is not a
// rejection. Special tokens and tokens that are not valid UTF-8 are never set.
// The search walks the vocabulary prefix tree; subtrees under distinct first
// scalars are processed in parallel with OpenMP. Throws std::invalid_argument
// for a rejected state.
TokenMask allowed_tokens(const CompiledGrammar & g, const ConstraintState & s, const vocab::TokenTrie & trie);
TokenMask allowed_tokens(const CompiledGrammar & g, const ConstraintState & s, const vocab::Vocabulary & v);

// Single-threaded prefix-tree walk; the reference for the parallel kernel.
TokenMask allowed_tokens_serial(const CompiledGrammar & g, const ConstraintState & s,
                                const vocab::TokenTrie & trie);

}  // namespace gcd_audit::grammar
