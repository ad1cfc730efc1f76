#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "gcd_audit/error.hpp"
#include "gcd_audit/harness.hpp"

namespace gcd_audit::harness {

namespace {

struct Scale {
    double lo;
    double hi;
};

Scale scale_of(BenchmarkKind k) {
    switch (k) {
        case BenchmarkKind::Stsb: return {0.0, 5.0};
        case BenchmarkKind::Men: return {0.0, 50.0};
        default: return {0.0, 1.0};
    }
}

class BadRow : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

double parse_number(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    double v           = 0;
    auto [ptr, ec]     = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw BadRow("'" + std::string(s) + "' is not a number");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    size_t                        start = 0;
    while (true) {
        const size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

void finish_item(BenchmarkItem & item, double raw) {
    const Scale s = scale_of(item.kind);
    if (raw < s.lo || raw > s.hi) {
        throw BadRow("label " + std::to_string(raw) + " outside [" + std::to_string(s.lo) + ", " +
                     std::to_string(s.hi) + "]");
    }
    item.raw_label = raw;
    item.source_lo = s.lo;
    item.source_hi = s.hi;
    item.label     = (raw - s.lo) / (s.hi - s.lo);
    if (item.text_a.empty()) {
        throw BadRow("first text is empty");
    }
    if (item.kind != BenchmarkKind::MultipleChoice && item.text_b.empty()) {
        throw BadRow("second text is empty");
    }
}

template <typename RowFn>
void for_each_line(std::string_view text, RowFn && fn) {
    size_t line_no = 0;
    size_t start   = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (!line.empty()) {
            fn(line_no, line);
        }
        start = end + 1;
    }
}

void parse_tsv(std::string_view text, BenchmarkKind kind, bool skip_bad, std::vector<BenchmarkItem> & out) {
    for_each_line(text, [&](size_t line_no, std::string_view line) {
        const auto cols = split(line, '\t');
        if (line_no == 1 && cols.size() >= 3 && cols[2] == "score") {
            return;  // header
        }
        try {
            if (cols.size() != 3 && cols.size() != 4) {
                throw BadRow("expected 3 or 4 tab-separated columns, found " + std::to_string(cols.size()));
            }
            BenchmarkItem item;
            item.kind   = kind;
            item.text_a = std::string(cols[0]);
            item.text_b = std::string(cols[1]);
            item.id     = cols.size() == 4 ? std::string(cols[3])
                                           : std::string(to_string(kind)) + "-" + std::to_string(line_no);
            finish_item(item, parse_number(cols[2]));
            out.push_back(std::move(item));
        } catch (const BadRow & e) {
            if (!skip_bad) {
                throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    });
}

void parse_qqp(std::string_view text, bool skip_bad, std::vector<BenchmarkItem> & out) {
    const auto records = parse_csv(text);
    if (records.empty()) {
        return;
    }
    const auto & header = records.front().fields;
    auto         column = [&](std::string_view name) -> size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw ValidationError("line 1: CSV header lacks column '" + std::string(name) + "'");
        }
        return static_cast<size_t>(it - header.begin());
    };
    const size_t c_id = column("id");
    const size_t c_q1 = column("question1");
    const size_t c_q2 = column("question2");
    const size_t c_dup = column("is_duplicate");
    for (size_t r = 1; r < records.size(); ++r) {
        const auto & rec = records[r];
        try {
            if (rec.fields.size() != header.size()) {
                throw BadRow("expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(rec.fields.size()));
            }
            BenchmarkItem item;
            item.kind      = BenchmarkKind::Qqp;
            item.id        = rec.fields[c_id];
            item.text_a    = rec.fields[c_q1];
            item.text_b    = rec.fields[c_q2];
            const double v = parse_number(rec.fields[c_dup]);
            if (v != 0.0 && v != 1.0) {
                throw BadRow("is_duplicate must be 0 or 1");
            }
            finish_item(item, v);
            out.push_back(std::move(item));
        } catch (const BadRow & e) {
            if (!skip_bad) {
                throw ValidationError("line " + std::to_string(rec.line) + ": " + e.what());
            }
        }
    }
}

void parse_jsonl(std::string_view text, BenchmarkKind kind, bool skip_bad, std::vector<BenchmarkItem> & out) {
    using nlohmann::json;
    for_each_line(text, [&](size_t line_no, std::string_view line) {
        try {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception & e) {
                throw BadRow(std::string("invalid JSON: ") + e.what());
            }
            if (!j.is_object()) {
                throw BadRow("expected a JSON object");
            }
            auto str = [&](const char * key) -> std::string {
                if (!j.contains(key) || !j[key].is_string()) {
                    throw BadRow(std::string("missing string field '") + key + "'");
                }
                return j[key].get<std::string>();
            };
            BenchmarkItem item;
            item.kind = kind;
            if (kind == BenchmarkKind::ToxicChat) {
                item.id     = j.contains("conv_id") ? str("conv_id") : "toxicchat-" + std::to_string(line_no);
                item.text_a = str("user_input");
                item.text_b = str("model_output");
                if (!j.contains("toxicity") || !j["toxicity"].is_number()) {
                    throw BadRow("missing numeric field 'toxicity'");
                }
                const double v = j["toxicity"].get<double>();
                if (v != 0.0 && v != 1.0) {
                    throw BadRow("toxicity must be 0 or 1");
                }
                finish_item(item, v);
            } else {
                item.id     = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                               : "mc-" + std::to_string(line_no);
                item.text_a = str("question");
                if (!j.contains("choices") || !j["choices"].is_array()) {
                    throw BadRow("missing array field 'choices'");
                }
                for (const auto & c : j["choices"]) {
                    if (!c.is_string()) {
                        throw BadRow("choices must be strings");
                    }
                    item.choices.push_back(c.get<std::string>());
                }
                const int n = static_cast<int>(item.choices.size());
                if (n < 2 || n > 26) {
                    throw BadRow("need 2 to 26 choices");
                }
                if (!j.contains("gold") || !j["gold"].is_number_integer()) {
                    throw BadRow("missing integer field 'gold'");
                }
                item.gold = j["gold"].get<int>();
                if (item.gold < 0 || item.gold >= n) {
                    throw BadRow("gold index out of range");
                }
                finish_item(item, static_cast<double>(item.gold) / (n - 1));
            }
            out.push_back(std::move(item));
        } catch (const BadRow & e) {
            if (!skip_bad) {
                throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    });
}

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementation.
uint64_t uniform_below(std::mt19937_64 & rng, uint64_t bound) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t       x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

}  // namespace

std::string_view to_string(BenchmarkKind k) {
    switch (k) {
        case BenchmarkKind::Stsb: return "stsb";
        case BenchmarkKind::Men: return "men";
        case BenchmarkKind::Qqp: return "qqp";
        case BenchmarkKind::ToxicChat: return "toxicchat";
        case BenchmarkKind::MultipleChoice: return "mc";
    }
    return "?";
}

std::optional<BenchmarkKind> parse_kind(std::string_view s) {
    for (auto k : {BenchmarkKind::Stsb, BenchmarkKind::Men, BenchmarkKind::Qqp, BenchmarkKind::ToxicChat,
                   BenchmarkKind::MultipleChoice}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

std::vector<CsvRecord> parse_csv(std::string_view text) {
    std::vector<CsvRecord> out;
    size_t                 i    = 0;
    size_t                 line = 1;
    while (i < text.size()) {
        CsvRecord   rec{line, {}};
        std::string field;
        bool        quoted_field = false;
        bool        end_record   = false;
        while (!end_record) {
            if (i < text.size() && text[i] == '"' && field.empty() && !quoted_field) {
                quoted_field = true;
                ++i;
                while (true) {
                    if (i >= text.size()) {
                        throw ValidationError("line " + std::to_string(rec.line) + ": unterminated quoted field");
                    }
                    if (text[i] == '"') {
                        if (i + 1 < text.size() && text[i + 1] == '"') {
                            field.push_back('"');
                            i += 2;
                            continue;
                        }
                        ++i;
                        break;
                    }
                    if (text[i] == '\n') {
                        ++line;
                    }
                    field.push_back(text[i++]);
                }
                continue;
            }
            if (i >= text.size() || text[i] == '\n' || (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n')) {
                rec.fields.push_back(std::move(field));
                if (i < text.size()) {
                    i += text[i] == '\r' ? 2 : 1;
                    ++line;
                }
                end_record = true;
            } else if (text[i] == ',') {
                rec.fields.push_back(std::move(field));
                field.clear();
                quoted_field = false;
                ++i;
            } else {
                if (quoted_field) {
                    throw ValidationError("line " + std::to_string(line) + ": text after closing quote");
                }
                field.push_back(text[i++]);
            }
        }
        if (!(rec.fields.size() == 1 && rec.fields[0].empty())) {
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<BenchmarkItem> parse_benchmark(std::string_view text, BenchmarkKind kind, bool skip_bad) {
    std::vector<BenchmarkItem> items;
    switch (kind) {
        case BenchmarkKind::Stsb:
        case BenchmarkKind::Men: parse_tsv(text, kind, skip_bad, items); break;
        case BenchmarkKind::Qqp: parse_qqp(text, skip_bad, items); break;
        case BenchmarkKind::ToxicChat:
        case BenchmarkKind::MultipleChoice: parse_jsonl(text, kind, skip_bad, items); break;
    }
    std::vector<std::string> ids;
    for (const auto & it : items) {
        ids.push_back(it.id);
    }
    std::sort(ids.begin(), ids.end());
    if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
        throw ValidationError("duplicate item id '" + *dup + "'");
    }
    return items;
}

std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path & path, BenchmarkKind kind, bool skip_bad) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open benchmark file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_benchmark(ss.str(), kind, skip_bad);
    } catch (const ValidationError & e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::vector<size_t> sample_indices(size_t population, size_t n, uint64_t seed) {
    if (n > population) {
        throw ValidationError("sample size " + std::to_string(n) + " exceeds the " + std::to_string(population) +
                              " available items");
    }
    std::vector<size_t> idx(population);
    for (size_t i = 0; i < population; ++i) {
        idx[i] = i;
    }
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < n; ++i) {
        const size_t j = i + static_cast<size_t>(uniform_below(rng, population - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<BenchmarkItem> sample_items(const std::vector<BenchmarkItem> & items, size_t n, uint64_t seed) {
    std::vector<BenchmarkItem> out;
    for (size_t i : sample_indices(items.size(), n, seed)) {
        out.push_back(items[i]);
    }
    return out;
}

}  // namespace gcd_audit::harness
