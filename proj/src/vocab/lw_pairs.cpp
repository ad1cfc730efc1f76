#include <unordered_set>

#include "gcd_audit/vocab.hpp"

namespace gcd_audit::vocab {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

template <typename Fn>
void for_each_twin(const Vocabulary & v, char prefix, Fn && fn) {
    std::string probe;
    for (uint32_t id = 0; id < v.size(); ++id) {
        if (v.is_special(id)) {
            continue;
        }
        const std::string & bare = v.bytes(id);
        if (bare.empty() || is_space(bare.front())) {
            continue;
        }
        // byte-fallback tokens are not indexed, so they never pair
        if (v.find(bare) != id) {
            continue;
        }
        probe.assign(1, prefix);
        probe += bare;
        if (auto twin = v.find(probe)) {
            fn(id, *twin);
        }
    }
}

}  // namespace

std::vector<LwPair> find_lw_pairs(const Vocabulary & v) {
    std::vector<LwPair> pairs;
    for_each_twin(v, ' ', [&](uint32_t bare, uint32_t lw) { pairs.push_back({lw, bare}); });
    return pairs;
}

size_t count_prefix_twins(const Vocabulary & v, char prefix) {
    size_t n = 0;
    for_each_twin(v, prefix, [&](uint32_t, uint32_t) { ++n; });
    return n;
}

double pair_participation_rate(const Vocabulary & v, std::span<const LwPair> pairs) {
    if (v.size() == 0) {
        return 0.0;
    }
    std::unordered_set<uint32_t> members;
    for (const auto & p : pairs) {
        members.insert(p.lw_id);
        members.insert(p.bare_id);
    }
    return static_cast<double>(members.size()) / static_cast<double>(v.size());
}

}  // namespace gcd_audit::vocab
