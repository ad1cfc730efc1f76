#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/error.hpp"

namespace gcd_audit::analysis {

namespace {

constexpr char kMagic[4] = {'G', 'E', 'M', 'B'};

uint64_t read_u64_le(const unsigned char * p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

void write_u64_le(std::ostream & out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char *>(b), 8);
}

float read_f32_le(const unsigned char * p) {
    uint32_t bits = static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 | static_cast<uint32_t>(p[2]) << 16 |
                    static_cast<uint32_t>(p[3]) << 24;
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

uint64_t uniform_below(std::mt19937_64 & rng, uint64_t bound) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t       x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

void check_ids(const EmbeddingMatrix & m, std::span<const IdPair> pairs) {
    for (const auto & [a, b] : pairs) {
        if (a >= m.rows || b >= m.rows) {
            throw ValidationError("pair (" + std::to_string(a) + ", " + std::to_string(b) +
                                  ") is outside the embedding matrix of " + std::to_string(m.rows) + " rows");
        }
    }
}

struct Sample {
    double mean     = 0.0;
    double std      = 0.0;
    size_t n        = 0;
    size_t excluded = 0;
    std::vector<double> values;
};

Sample summarize(const std::vector<double> & cos) {
    Sample s;
    for (double c : cos) {
        if (std::isnan(c)) {
            ++s.excluded;
        } else {
            s.values.push_back(c);
        }
    }
    s.n = s.values.size();
    if (s.n > 0) {
        s.mean = pairwise_sum(s.values) / static_cast<double>(s.n);
    }
    if (s.n > 1) {
        std::vector<double> sq(s.n);
        for (size_t i = 0; i < s.n; ++i) {
            sq[i] = (s.values[i] - s.mean) * (s.values[i] - s.mean);
        }
        s.std = std::sqrt(pairwise_sum(sq) / static_cast<double>(s.n - 1));
    }
    return s;
}

PairSimStats assemble(const std::vector<double> & pair_cos, const std::vector<double> & base_cos) {
    const Sample p = summarize(pair_cos);
    const Sample b = summarize(base_cos);
    PairSimStats out;
    out.mean              = p.mean;
    out.std               = p.std;
    out.n                 = p.n;
    out.excluded          = p.excluded;
    out.baseline_mean     = b.mean;
    out.baseline_std      = b.std;
    out.baseline_n        = b.n;
    out.baseline_excluded = b.excluded;
    out.cohens_d          = p.n >= 2 && b.n >= 2 ? cohens_d(p.values, b.values) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

void check_args(const EmbeddingMatrix & m, std::span<const IdPair> pairs, size_t baseline_k) {
    if (baseline_k < 2) {
        throw ValidationError("baseline_k must be at least 2");
    }
    if (m.rows < 2) {
        throw ValidationError("embedding matrix needs at least two rows");
    }
    check_ids(m, pairs);
}

}  // namespace

EmbeddingMatrix load_embeddings(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open embedding file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();
    EmbeddingMatrix   m;

    if (data.size() >= 4 && std::memcmp(data.data(), kMagic, 4) == 0) {
        if (data.size() < 20) {
            throw ValidationError(path.string() + ": truncated embedding header");
        }
        const auto * p = reinterpret_cast<const unsigned char *>(data.data());
        m.rows         = read_u64_le(p + 4);
        m.cols         = read_u64_le(p + 12);
        if (m.cols == 0 || m.rows > (data.size() - 20) / 4 / m.cols) {
            throw ValidationError(path.string() + ": header claims " + std::to_string(m.rows) + "x" +
                                  std::to_string(m.cols) + " but the file is too short");
        }
        const size_t count = m.rows * m.cols;
        if (data.size() != 20 + 4 * count) {
            throw ValidationError(path.string() + ": " + std::to_string(data.size() - 20 - 4 * count) +
                                  " trailing bytes after the matrix");
        }
        m.data.resize(count);
        for (size_t i = 0; i < count; ++i) {
            m.data[i] = read_f32_le(p + 20 + 4 * i);
        }
        return m;
    }

    std::istringstream lines(data);
    std::string        line;
    size_t             line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t\r")] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::string        tok;
        size_t             cols = 0;
        while (fields >> tok) {
            try {
                size_t used = 0;
                m.data.push_back(std::stof(tok, &used));
                if (used != tok.size()) {
                    throw std::invalid_argument(tok);
                }
            } catch (const std::exception &) {
                throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": '" + tok +
                                      "' is not a number");
            }
            ++cols;
        }
        if (m.rows == 0) {
            m.cols = cols;
        } else if (cols != m.cols) {
            throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(m.cols) + " values, found " + std::to_string(cols));
        }
        ++m.rows;
    }
    if (m.rows == 0 || m.cols == 0) {
        throw ValidationError(path.string() + ": no embedding rows");
    }
    return m;
}

void save_embeddings(const EmbeddingMatrix & m, const std::filesystem::path & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write embedding file " + path.string());
    }
    out.write(kMagic, 4);
    write_u64_le(out, m.rows);
    write_u64_le(out, m.cols);
    for (float f : m.data) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
        out.write(reinterpret_cast<const char *>(b), 4);
    }
    if (!out) {
        throw IoError("write to " + path.string() + " failed");
    }
}

double cosine(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<IdPair> random_id_pairs(size_t rows, size_t k, uint64_t seed) {
    if (rows < 2) {
        throw ValidationError("random pairs need at least two rows");
    }
    std::mt19937_64     rng(seed);
    std::vector<IdPair> out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) {
        const auto a = static_cast<uint32_t>(uniform_below(rng, rows));
        auto       b = static_cast<uint32_t>(uniform_below(rng, rows - 1));
        if (b >= a) {
            ++b;
        }
        out.emplace_back(a, b);
    }
    return out;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw StatsError("Cohen's d needs at least two values per sample");
    }
    auto moments = [](std::span<const double> x) {
        const double        m = pairwise_sum(x) / static_cast<double>(x.size());
        std::vector<double> sq(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            sq[i] = (x[i] - m) * (x[i] - m);
        }
        return std::make_pair(m, pairwise_sum(sq));
    };
    const auto [ma, ssa] = moments(a);
    const auto [mb, ssb] = moments(b);
    const double pooled  = std::sqrt((ssa + ssb) / static_cast<double>(a.size() + b.size() - 2));
    if (pooled == 0.0) {
        throw StatsError("Cohen's d undefined for zero pooled variance");
    }
    return (ma - mb) / pooled;
}

PairSimStats pair_similarity_stats_serial(const EmbeddingMatrix & m, std::span<const IdPair> pairs,
                                          size_t baseline_k, uint64_t seed) {
    check_args(m, pairs, baseline_k);
    const auto          base = random_id_pairs(m.rows, baseline_k, seed);
    std::vector<double> pc(pairs.size()), bc(base.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        pc[i] = cosine(m.row(pairs[i].first), m.row(pairs[i].second));
    }
    for (size_t i = 0; i < base.size(); ++i) {
        bc[i] = cosine(m.row(base[i].first), m.row(base[i].second));
    }
    return assemble(pc, bc);
}

PairSimStats pair_similarity_stats(const EmbeddingMatrix & m, std::span<const IdPair> pairs, size_t baseline_k,
                                   uint64_t seed) {
    check_args(m, pairs, baseline_k);
    const auto          base = random_id_pairs(m.rows, baseline_k, seed);
    const size_t        np   = pairs.size();
    const size_t        total = np + base.size();
    std::vector<double> all(total);
    // Each slot is written once; the reductions run serially afterwards so the
    // result does not depend on the thread count.
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(total); ++i) {
        const auto & pr = static_cast<size_t>(i) < np ? pairs[static_cast<size_t>(i)] : base[static_cast<size_t>(i) - np];
        all[static_cast<size_t>(i)] = cosine(m.row(pr.first), m.row(pr.second));
    }
    return assemble(std::vector<double>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(np)),
                    std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(np), all.end()));
}

size_t export_projection_inputs(const EmbeddingMatrix & m, std::span<const vocab::LwPair> pairs,
                                const std::filesystem::path & path, size_t background_k, uint64_t seed) {
    for (const auto & p : pairs) {
        if (p.lw_id >= m.rows || p.bare_id >= m.rows) {
            throw ValidationError("pair (" + std::to_string(p.lw_id) + ", " + std::to_string(p.bare_id) +
                                  ") is outside the embedding matrix of " + std::to_string(m.rows) + " rows");
        }
    }
    if (background_k > 0 && m.rows == 0) {
        throw ValidationError("background sample needs a non-empty embedding matrix");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write projection inputs to " + path.string());
    }
    out << "tag,pair,id";
    for (size_t c = 0; c < m.cols; ++c) {
        out << ",v" << c;
    }
    out << '\n';
    char buf[32];
    auto write_row = [&](const char * tag, const std::string & pair, uint32_t id) {
        out << tag << ',' << pair << ',' << id;
        for (float f : m.row(id)) {
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(f));
            out << ',' << buf;
        }
        out << '\n';
    };
    size_t rows = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        write_row("lw", std::to_string(i), pairs[i].lw_id);
        write_row("bare", std::to_string(i), pairs[i].bare_id);
        rows += 2;
    }
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < background_k; ++i) {
        write_row("background", "", static_cast<uint32_t>(uniform_below(rng, m.rows)));
        ++rows;
    }
    if (!out) {
        throw IoError("write to " + path.string() + " failed");
    }
    return rows;
}

}  // namespace gcd_audit::analysis
