#include <algorithm>
#include <cmath>
#include <numeric>

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/error.hpp"
#include "gcd_audit/utf8.hpp"

namespace gcd_audit::analysis {

namespace {

void check_pair(std::span<const double> xs, std::span<const double> ys, const char * what) {
    if (xs.size() != ys.size()) {
        throw StatsError(std::string(what) + ": length mismatch (" + std::to_string(xs.size()) + " vs " +
                         std::to_string(ys.size()) + ")");
    }
    if (xs.size() < 2) {
        throw StatsError(std::string(what) + ": need at least two points");
    }
}

double mean_of(std::span<const double> xs) {
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

template <typename Seq>
size_t edit_distance(const Seq & a, const Seq & b) {
    std::vector<size_t> prev(b.size() + 1);
    std::vector<size_t> cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), size_t{0});
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= b.size(); ++j) {
            const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j]           = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
    constexpr size_t kBlock = 8;
    if (xs.size() <= kBlock) {
        double s = 0.0;
        for (double x : xs) {
            s += x;
        }
        return s;
    }
    const size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

std::vector<double> average_ranks(std::span<const double> xs) {
    std::vector<size_t> order(xs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    size_t              i = 0;
    while (i < order.size()) {
        size_t j = i + 1;
        while (j < order.size() && xs[order[j]] == xs[order[i]]) {
            ++j;
        }
        // positions i..j-1 (0-based) share rank mean(i+1 .. j)
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k) {
            ranks[order[k]] = r;
        }
        i = j;
    }
    return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    check_pair(xs, ys, "pearson");
    const double        mx = mean_of(xs);
    const double        my = mean_of(ys);
    std::vector<double> sxy(xs.size()), sxx(xs.size()), syy(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy[i]          = dx * dy;
        sxx[i]          = dx * dx;
        syy[i]          = dy * dy;
    }
    const double vx = pairwise_sum(sxx);
    const double vy = pairwise_sum(syy);
    if (vx == 0.0 || vy == 0.0) {
        throw StatsError("correlation undefined for constant input");
    }
    return std::clamp(pairwise_sum(sxy) / std::sqrt(vx * vy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
    check_pair(xs, ys, "spearman");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    return pearson(rx, ry);
}

double mse(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw StatsError("mse: length mismatch (" + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) +
                         ")");
    }
    if (xs.empty()) {
        throw StatsError("mse: empty input");
    }
    std::vector<double> sq(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        sq[i] = (xs[i] - ys[i]) * (xs[i] - ys[i]);
    }
    return pairwise_sum(sq) / static_cast<double>(xs.size());
}

size_t levenshtein(std::string_view a, std::string_view b) {
    auto ua = utf8::decode(a);
    auto ub = utf8::decode(b);
    if (ua && ub) {
        return edit_distance(*ua, *ub);
    }
    return edit_distance(a, b);
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
    auto         ua  = utf8::decode(a);
    auto         ub  = utf8::decode(b);
    const size_t la  = ua && ub ? ua->size() : a.size();
    const size_t lb  = ua && ub ? ub->size() : b.size();
    const size_t len = std::max(la, lb);
    if (len == 0) {
        return 1.0;
    }
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(len);
}

std::vector<double> levenshtein_baseline(const std::vector<harness::BenchmarkItem> & items) {
    std::vector<double> out(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
        out[i] = levenshtein_similarity(items[i].text_a, items[i].text_b);
    }
    return out;
}

}  // namespace gcd_audit::analysis
