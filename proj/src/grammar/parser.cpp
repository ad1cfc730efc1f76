#include "gcd_audit/error.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/utf8.hpp"

namespace gcd_audit::grammar {

const Rule * GrammarAst::find(std::string_view name) const {
    for (const auto & r : rules) {
        if (r.name == name) {
            return &r;
        }
    }
    return nullptr;
}

namespace {

bool is_name_char(char32_t c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
}

int hex_value(char32_t c) {
    if (c >= '0' && c <= '9') {
        return static_cast<int>(c - '0');
    }
    if (c >= 'a' && c <= 'f') {
        return static_cast<int>(c - 'a' + 10);
    }
    if (c >= 'A' && c <= 'F') {
        return static_cast<int>(c - 'A' + 10);
    }
    return -1;
}

struct PendingRef {
    std::string name;
    size_t      offset;
};

class Parser {
  public:
    explicit Parser(std::u32string src) : src_(std::move(src)) {}

    GrammarAst parse() {
        GrammarAst ast;
        skip_space(true);
        while (!at_end()) {
            const size_t start = pos_;
            std::string  name  = parse_name();
            if (name.empty()) {
                fail("expected rule name");
            }
            skip_space(false);
            expect(U"::=");
            skip_space(true);
            Alternation alts = parse_alternates(false);
            if (!at_end() && peek() != '\n' && peek() != '\r') {
                fail("expected end of rule");
            }
            if (ast.find(name) != nullptr) {
                pos_ = start;
                fail("rule '" + name + "' defined twice");
            }
            ast.rules.push_back(Rule{std::move(name), std::move(alts), location(start).first});
            skip_space(true);
        }

        for (const auto & ref : refs_) {
            if (ast.find(ref.name) == nullptr) {
                pos_ = ref.offset;
                fail("undefined rule '" + ref.name + "'");
            }
        }
        if (ast.find("root") == nullptr) {
            throw GrammarError("grammar does not define 'root'");
        }
        return ast;
    }

  private:
    bool     at_end() const { return pos_ >= src_.size(); }
    char32_t peek(size_t k = 0) const { return pos_ + k < src_.size() ? src_[pos_ + k] : U'\0'; }

    std::pair<size_t, size_t> location(size_t offset) const {
        size_t line = 1;
        size_t col  = 1;
        for (size_t i = 0; i < offset && i < src_.size(); ++i) {
            if (src_[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        return {line, col};
    }

    [[noreturn]] void fail(const std::string & msg) const {
        auto [line, col] = location(pos_);
        throw GrammarError(msg, line, col);
    }

    void expect(std::u32string_view token) {
        if (src_.compare(pos_, token.size(), token) != 0) {
            fail("expected '" + utf8::encode(token) + "'");
        }
        pos_ += token.size();
    }

    void skip_space(bool newline_ok) {
        while (!at_end()) {
            const char32_t c = peek();
            if (c == ' ' || c == '\t') {
                ++pos_;
            } else if (c == '#') {
                while (!at_end() && peek() != '\n') {
                    ++pos_;
                }
            } else if (newline_ok && (c == '\n' || c == '\r')) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string parse_name() {
        std::string name;
        while (!at_end() && is_name_char(peek())) {
            name.push_back(static_cast<char>(peek()));
            ++pos_;
        }
        return name;
    }

    char32_t parse_hex(int digits) {
        char32_t v = 0;
        for (int i = 0; i < digits; ++i) {
            const int h = hex_value(peek());
            if (h < 0) {
                fail("expected hex digit");
            }
            v = (v << 4) | static_cast<char32_t>(h);
            ++pos_;
        }
        if (v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF)) {
            fail("escape is not a Unicode scalar value");
        }
        return v;
    }

    char32_t parse_char() {
        if (at_end()) {
            fail("unexpected end of input");
        }
        const char32_t c = peek();
        ++pos_;
        if (c != '\\') {
            return c;
        }
        const char32_t e = peek();
        ++pos_;
        switch (e) {
            case 'n': return '\n';
            case 't': return '\t';
            case 'r': return '\r';
            case '"':
            case '\\':
            case '[':
            case ']':
            case '-':
            case '\'': return e;
            case 'x': return parse_hex(2);
            case 'u': return parse_hex(4);
            case 'U': return parse_hex(8);
            default: --pos_; fail("unknown escape");
        }
    }

    Literal parse_literal() {
        ++pos_;  // opening quote
        Literal lit;
        while (peek() != '"') {
            if (at_end() || peek() == '\n') {
                fail("unterminated string literal");
            }
            lit.text.push_back(parse_char());
        }
        ++pos_;
        return lit;
    }

    CharClass parse_class() {
        ++pos_;  // '['
        CharClass cls;
        if (peek() == '^') {
            cls.negated = true;
            ++pos_;
        }
        while (peek() != ']') {
            if (at_end()) {
                fail("unterminated character class");
            }
            const size_t   start = pos_;
            const char32_t lo    = parse_char();
            char32_t       hi    = lo;
            if (peek() == '-' && peek(1) != ']' && pos_ + 1 < src_.size()) {
                ++pos_;
                hi = parse_char();
            }
            if (lo > hi) {
                pos_ = start;
                fail("character range is reversed");
            }
            cls.ranges.push_back({lo, hi});
        }
        if (cls.ranges.empty()) {
            fail("empty character class");
        }
        ++pos_;
        return cls;
    }

    Alternation parse_alternates(bool nested) {
        Alternation alts;
        alts.push_back(parse_sequence(nested));
        while (peek() == '|') {
            ++pos_;
            skip_space(true);
            alts.push_back(parse_sequence(nested));
        }
        return alts;
    }

    Sequence parse_sequence(bool nested) {
        Sequence seq;
        while (!at_end()) {
            const char32_t c = peek();
            if (c == '"') {
                seq.push_back({parse_literal()});
            } else if (c == '[') {
                seq.push_back({parse_class()});
            } else if (c == '.') {
                ++pos_;
                seq.push_back({CharClass{{}, true}});
            } else if (is_name_char(c)) {
                const size_t start = pos_;
                std::string  name  = parse_name();
                refs_.push_back({name, start});
                seq.push_back({RuleRef{std::move(name)}});
            } else if (c == '(') {
                ++pos_;
                skip_space(true);
                Group group{parse_alternates(true)};
                if (peek() != ')') {
                    fail("expected ')'");
                }
                ++pos_;
                seq.push_back({std::move(group)});
            } else if (c == '*' || c == '+' || c == '?') {
                if (seq.empty()) {
                    fail("repetition operator without preceding element");
                }
                const RepeatKind kind = c == '*' ? RepeatKind::ZeroOrMore
                                        : c == '+' ? RepeatKind::OneOrMore
                                                   : RepeatKind::Optional;
                ++pos_;
                Repeat rep{{std::move(seq.back())}, kind};
                seq.back() = Element{std::move(rep)};
            } else if (c == '{') {
                fail("bounded repetition '{m,n}' is not supported");
            } else {
                break;
            }
            skip_space(nested);
        }
        return seq;
    }

    std::u32string          src_;
    size_t                  pos_ = 0;
    std::vector<PendingRef> refs_;
};

}  // namespace

GrammarAst parse_gbnf(std::string_view text) {
    auto decoded = utf8::decode(text);
    if (!decoded) {
        throw GrammarError("grammar source is not valid UTF-8");
    }
    return Parser(std::move(*decoded)).parse();
}

}  // namespace gcd_audit::grammar
