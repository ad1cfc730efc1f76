#include <algorithm>

#include "gcd_audit/error.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/utf8.hpp"

namespace gcd_audit::grammar {

namespace {

// Expands `stack` until its top is a character class (or it is empty),
// collecting every resulting stack. Terminates because left recursion is
// rejected at compile time.
void expand(const CompiledGrammar & g, Stack & stack, std::vector<Stack> & out) {
    if (stack.size() > kMaxStackDepth) {
        throw GrammarError("recognizer stack depth limit (" + std::to_string(kMaxStackDepth) + ") exceeded");
    }
    if (stack.empty() || g.symbol(stack.back()).kind == SymbolKind::Chars) {
        out.push_back(stack);
        return;
    }

    const uint32_t pos  = stack.back();
    const uint32_t rule = g.symbol(pos).value;
    stack.pop_back();
    const bool has_next = g.symbol(pos + 1).kind != SymbolKind::End;
    if (has_next) {
        stack.push_back(pos + 1);
    }
    const size_t base = stack.size();
    for (uint32_t alt : g.alternatives(rule)) {
        if (g.symbol(alt).kind != SymbolKind::End) {
            stack.push_back(alt);
        }
        expand(g, stack, out);
        stack.resize(base);
    }
    if (has_next) {
        stack.back() = pos;
    } else {
        stack.push_back(pos);
    }
}

void normalize(std::vector<Stack> & stacks) {
    std::sort(stacks.begin(), stacks.end());
    stacks.erase(std::unique(stacks.begin(), stacks.end()), stacks.end());
}

}  // namespace

ConstraintState initial_state(const CompiledGrammar & g) {
    ConstraintState s;
    Stack           stack;
    for (uint32_t alt : g.alternatives(g.root())) {
        stack.clear();
        if (g.symbol(alt).kind != SymbolKind::End) {
            stack.push_back(alt);
        }
        expand(g, stack, s.stacks_);
    }
    normalize(s.stacks_);
    return s;
}

ConstraintState advance(const CompiledGrammar & g, const ConstraintState & s, char32_t c) {
    ConstraintState next;
    next.consumed_ = s.consumed_ + 1;
    Stack work;
    for (const auto & stack : s.stacks_) {
        if (stack.empty() || !g.matches(stack.back(), c)) {
            continue;
        }
        work.assign(stack.begin(), stack.end() - 1);
        const uint32_t after = stack.back() + 1;
        if (g.symbol(after).kind != SymbolKind::End) {
            work.push_back(after);
        }
        expand(g, work, next.stacks_);
    }
    normalize(next.stacks_);
    return next;
}

ConstraintState advance_text(const CompiledGrammar & g, ConstraintState s, std::u32string_view text) {
    for (char32_t c : text) {
        if (s.rejected()) {
            break;
        }
        s = advance(g, s, c);
    }
    return s;
}

ConstraintState advance_utf8(const CompiledGrammar & g, ConstraintState s, std::string_view text) {
    auto scalars = utf8::decode(text);
    if (!scalars) {
        return ConstraintState{};
    }
    return advance_text(g, std::move(s), *scalars);
}

bool validate_output(const CompiledGrammar & g, std::string_view utf8_text) {
    return advance_utf8(g, initial_state(g), utf8_text).terminable();
}

bool accepts_next(const CompiledGrammar & g, const ConstraintState & s, char32_t c) {
    return std::any_of(s.stacks().begin(), s.stacks().end(),
                       [&](const Stack & st) { return !st.empty() && g.matches(st.back(), c); });
}

std::vector<std::u32string> enumerate_language(const CompiledGrammar & g, std::span<const char32_t> alphabet,
                                               size_t max_len) {
    std::vector<std::u32string> out;
    std::u32string              prefix;

    // explicit DFS: (state, next alphabet index)
    std::vector<std::pair<ConstraintState, size_t>> frames;
    frames.emplace_back(initial_state(g), 0);
    if (frames.back().first.terminable()) {
        out.emplace_back();
    }
    while (!frames.empty()) {
        auto & [state, idx] = frames.back();
        if (prefix.size() >= max_len || idx == alphabet.size()) {
            frames.pop_back();
            if (!prefix.empty()) {
                prefix.pop_back();
            }
            continue;
        }
        const char32_t c = alphabet[idx++];
        if (!accepts_next(g, state, c)) {
            continue;
        }
        ConstraintState next = advance(g, state, c);
        prefix.push_back(c);
        if (next.terminable()) {
            out.push_back(prefix);
        }
        frames.emplace_back(std::move(next), 0);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace gcd_audit::grammar
