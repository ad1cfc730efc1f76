#include <sstream>
#include <unordered_map>

#include "gcd_audit/error.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/utf8.hpp"

namespace gcd_audit::grammar {

namespace {

using AltSymbols = std::vector<Symbol>;

class Lowering {
  public:
    explicit Lowering(const GrammarAst & ast) {
        for (const auto & r : ast.rules) {
            ids_.emplace(r.name, static_cast<uint32_t>(names.size()));
            names.push_back(r.name);
            rules.emplace_back();
        }
        for (const auto & r : ast.rules) {
            const uint32_t id = ids_.at(r.name);
            auto           alts = lower_alternation(r.alternatives, r.name);
            rules[id]           = std::move(alts);
        }
    }

    std::vector<std::string>             names;
    std::vector<std::vector<AltSymbols>> rules;
    std::vector<CharClass>               classes;

  private:
    uint32_t new_rule(const std::string & base) {
        const auto id = static_cast<uint32_t>(names.size());
        names.push_back(base + "_" + std::to_string(++aux_counter_[base]));
        rules.emplace_back();
        return id;
    }

    uint32_t add_class(CharClass cls) {
        classes.push_back(std::move(cls));
        return static_cast<uint32_t>(classes.size() - 1);
    }

    std::vector<AltSymbols> lower_alternation(const Alternation & alts, const std::string & base) {
        std::vector<AltSymbols> out;
        out.reserve(alts.size());
        for (const auto & seq : alts) {
            AltSymbols syms;
            for (const auto & el : seq) {
                lower_element(el, syms, base);
            }
            out.push_back(std::move(syms));
        }
        return out;
    }

    void lower_element(const Element & el, AltSymbols & out, const std::string & base) {
        std::visit(
            [&](const auto & node) {
                using T = std::decay_t<decltype(node)>;
                if constexpr (std::is_same_v<T, Literal>) {
                    for (char32_t c : node.text) {
                        out.push_back({SymbolKind::Chars, add_class(CharClass{{{c, c}}, false})});
                    }
                } else if constexpr (std::is_same_v<T, CharClass>) {
                    out.push_back({SymbolKind::Chars, add_class(node)});
                } else if constexpr (std::is_same_v<T, RuleRef>) {
                    out.push_back({SymbolKind::Rule, ids_.at(node.name)});
                } else if constexpr (std::is_same_v<T, Group>) {
                    const uint32_t id = new_rule(base);
                    auto           alts = lower_alternation(node.alternatives, base);
                    rules[id]           = std::move(alts);
                    out.push_back({SymbolKind::Rule, id});
                } else {
                    static_assert(std::is_same_v<T, Repeat>);
                    out.push_back({SymbolKind::Rule, lower_repeat(node, base)});
                }
            },
            el.node);
    }

    // e* -> r ::= e r | ""
    // e+ -> r ::= e r | e
    // e? -> r ::= e | ""
    uint32_t lower_repeat(const Repeat & rep, const std::string & base) {
        const uint32_t id = new_rule(base);
        AltSymbols     body;
        lower_element(rep.inner.front(), body, base);

        std::vector<AltSymbols> alts;
        switch (rep.kind) {
            case RepeatKind::ZeroOrMore: {
                AltSymbols rec = body;
                rec.push_back({SymbolKind::Rule, id});
                alts = {std::move(rec), {}};
                break;
            }
            case RepeatKind::OneOrMore: {
                AltSymbols rec = body;
                rec.push_back({SymbolKind::Rule, id});
                alts = {std::move(rec), body};
                break;
            }
            case RepeatKind::Optional: alts = {body, {}}; break;
        }
        rules[id] = std::move(alts);
        return id;
    }

    std::unordered_map<std::string, uint32_t> ids_;
    std::unordered_map<std::string, int>      aux_counter_;
};

std::vector<bool> compute_nullable(const std::vector<std::vector<AltSymbols>> & rules) {
    std::vector<bool> nullable(rules.size(), false);
    bool              changed = true;
    while (changed) {
        changed = false;
        for (size_t r = 0; r < rules.size(); ++r) {
            if (nullable[r]) {
                continue;
            }
            for (const auto & alt : rules[r]) {
                bool all = true;
                for (const auto & s : alt) {
                    if (s.kind != SymbolKind::Rule || !nullable[s.value]) {
                        all = false;
                        break;
                    }
                }
                if (all) {
                    nullable[r] = true;
                    changed     = true;
                    break;
                }
            }
        }
    }
    return nullable;
}

std::vector<bool> compute_productive(const std::vector<std::vector<AltSymbols>> & rules) {
    std::vector<bool> productive(rules.size(), false);
    bool              changed = true;
    while (changed) {
        changed = false;
        for (size_t r = 0; r < rules.size(); ++r) {
            if (productive[r]) {
                continue;
            }
            for (const auto & alt : rules[r]) {
                bool all = true;
                for (const auto & s : alt) {
                    if (s.kind == SymbolKind::Rule && !productive[s.value]) {
                        all = false;
                        break;
                    }
                }
                if (all) {
                    productive[r] = true;
                    changed       = true;
                    break;
                }
            }
        }
    }
    return productive;
}

// Returns the id of a rule on a left-recursive cycle, if any.
std::optional<uint32_t> find_left_recursion(const std::vector<std::vector<AltSymbols>> & rules,
                                            const std::vector<bool> &                    nullable) {
    const size_t                       n = rules.size();
    std::vector<std::vector<uint32_t>> leftmost(n);
    for (size_t r = 0; r < n; ++r) {
        for (const auto & alt : rules[r]) {
            for (const auto & s : alt) {
                if (s.kind != SymbolKind::Rule) {
                    break;
                }
                leftmost[r].push_back(s.value);
                if (!nullable[s.value]) {
                    break;
                }
            }
        }
    }

    enum : uint8_t { White, Grey, Black };
    std::vector<uint8_t> color(n, White);
    // iterative DFS; frame = (rule, next edge index)
    for (uint32_t start = 0; start < n; ++start) {
        if (color[start] != White) {
            continue;
        }
        std::vector<std::pair<uint32_t, size_t>> frames{{start, 0}};
        color[start] = Grey;
        while (!frames.empty()) {
            auto & [r, edge] = frames.back();
            if (edge == leftmost[r].size()) {
                color[r] = Black;
                frames.pop_back();
                continue;
            }
            const uint32_t next = leftmost[r][edge++];
            if (color[next] == Grey) {
                return next;
            }
            if (color[next] == White) {
                color[next] = Grey;
                frames.emplace_back(next, 0);
            }
        }
    }
    return std::nullopt;
}

void append_class(std::ostringstream & os, const CharClass & cls) {
    auto put = [&](char32_t c) {
        if (c == '\n') {
            os << "\\n";
        } else if (c == '\t') {
            os << "\\t";
        } else if (c == ']' || c == '\\' || c == '-' || c == '^') {
            os << '\\' << static_cast<char>(c);
        } else {
            std::string s;
            utf8::append(s, c);
            os << s;
        }
    };
    if (cls.negated && cls.ranges.empty()) {
        os << '.';
        return;
    }
    os << '[';
    if (cls.negated) {
        os << '^';
    }
    for (const auto & r : cls.ranges) {
        put(r.lo);
        if (r.hi != r.lo) {
            os << '-';
            put(r.hi);
        }
    }
    os << ']';
}

}  // namespace

bool CompiledGrammar::matches(uint32_t pos, char32_t c) const {
    const CharClass & cls   = classes_[symbols_[pos].value];
    bool              found = false;
    for (const auto & r : cls.ranges) {
        if (r.lo <= c && c <= r.hi) {
            found = true;
            break;
        }
    }
    return found != cls.negated;
}

std::string CompiledGrammar::dump() const {
    std::ostringstream os;
    for (uint32_t r = 0; r < rule_count(); ++r) {
        os << r << ' ' << names_[r] << " ::=";
        bool first_alt = true;
        for (uint32_t start : alt_starts_[r]) {
            if (!first_alt) {
                os << " |";
            }
            first_alt = false;
            for (uint32_t p = start; symbols_[p].kind != SymbolKind::End; ++p) {
                os << ' ';
                if (symbols_[p].kind == SymbolKind::Rule) {
                    os << names_[symbols_[p].value];
                } else {
                    append_class(os, classes_[symbols_[p].value]);
                }
            }
        }
        os << '\n';
    }
    return os.str();
}

CompiledGrammar compile(const GrammarAst & ast) {
    if (ast.find("root") == nullptr) {
        throw GrammarError("grammar does not define 'root'");
    }
    Lowering lowering(ast);

    const auto nullable = compute_nullable(lowering.rules);
    if (auto rule = find_left_recursion(lowering.rules, nullable)) {
        throw GrammarError("left recursion through rule '" + lowering.names[*rule] + "'");
    }

    CompiledGrammar g;
    g.names_   = std::move(lowering.names);
    g.classes_ = std::move(lowering.classes);
    g.root_    = 0;
    for (uint32_t r = 0; r < g.names_.size(); ++r) {
        if (g.names_[r] == "root") {
            g.root_ = r;
        }
    }
    if (!compute_productive(lowering.rules)[g.root_]) {
        throw GrammarError("root derives no finite string");
    }

    g.nullable_ = nullable;
    g.alt_starts_.resize(lowering.rules.size());
    for (size_t r = 0; r < lowering.rules.size(); ++r) {
        for (const auto & alt : lowering.rules[r]) {
            g.alt_starts_[r].push_back(static_cast<uint32_t>(g.symbols_.size()));
            g.symbols_.insert(g.symbols_.end(), alt.begin(), alt.end());
            g.symbols_.push_back({SymbolKind::End, 0});
        }
    }
    return g;
}

}  // namespace gcd_audit::grammar
