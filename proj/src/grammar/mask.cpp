#include <bit>
#include <stdexcept>

#include "gcd_audit/grammar.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::grammar {

size_t TokenMask::count() const {
    size_t n = 0;
    for (uint64_t w : words_) {
        n += static_cast<size_t>(std::popcount(w));
    }
    return n;
}

std::vector<uint32_t> TokenMask::ids() const {
    std::vector<uint32_t> out;
    for (size_t i = 0; i < size_; ++i) {
        if (test(i)) {
            out.push_back(static_cast<uint32_t>(i));
        }
    }
    return out;
}

namespace {

void walk(const CompiledGrammar & g, const vocab::TokenTrie & trie, uint32_t node_id, const ConstraintState & state,
          std::vector<uint32_t> & allowed) {
    const auto & node = trie.node(node_id);
    allowed.insert(allowed.end(), node.tokens.begin(), node.tokens.end());
    for (const auto & [c, child] : node.children) {
        if (!accepts_next(g, state, c)) {
            continue;
        }
        walk(g, trie, child, advance(g, state, c), allowed);
    }
}

void require_live(const ConstraintState & s) {
    if (s.rejected()) {
        throw std::invalid_argument("allowed_tokens called on a rejected state");
    }
}

}  // namespace

TokenMask allowed_tokens_serial(const CompiledGrammar & g, const ConstraintState & s, const vocab::TokenTrie & trie) {
    require_live(s);
    std::vector<uint32_t> allowed;
    walk(g, trie, 0, s, allowed);

    TokenMask mask(trie.vocab_size());
    for (uint32_t id : allowed) {
        mask.set(id);
    }
    mask.eos_allowed = s.terminable();
    return mask;
}

TokenMask allowed_tokens(const CompiledGrammar & g, const ConstraintState & s, const vocab::TokenTrie & trie) {
    require_live(s);
    const auto & root = trie.node(0);
    const auto   n    = static_cast<std::ptrdiff_t>(root.children.size());

    // One result list per first-scalar subtree keeps the merge deterministic.
    std::vector<std::vector<uint32_t>> per_child(root.children.size());
    std::exception_ptr                 error;

#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto & [c, child] = root.children[static_cast<size_t>(i)];
        try {
            if (accepts_next(g, s, c)) {
                walk(g, trie, child, advance(g, s, c), per_child[static_cast<size_t>(i)]);
            }
        } catch (...) {
#pragma omp critical(gcd_mask_error)
            if (!error) {
                error = std::current_exception();
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }

    TokenMask mask(trie.vocab_size());
    for (uint32_t id : root.tokens) {
        mask.set(id);
    }
    for (const auto & ids : per_child) {
        for (uint32_t id : ids) {
            mask.set(id);
        }
    }
    mask.eos_allowed = s.terminable();
    return mask;
}

TokenMask allowed_tokens(const CompiledGrammar & g, const ConstraintState & s, const vocab::Vocabulary & v) {
    return allowed_tokens(g, s, v.trie());
}

}  // namespace gcd_audit::grammar
