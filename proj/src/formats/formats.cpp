#include "gcd_audit/formats.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "gcd_audit/error.hpp"
#include "gcd_audit/utf8.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::formats {

namespace {

using ValueMap = std::vector<std::pair<std::string, double>>;

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            default: out.push_back(c);
        }
    }
    return out + "\"";
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Alternation of literals, or a character class when the surfaces are three
// or more consecutive single characters.
std::string response_body(const std::vector<std::string> & surfaces) {
    bool contiguous = surfaces.size() >= 3;
    for (size_t i = 0; contiguous && i < surfaces.size(); ++i) {
        contiguous = surfaces[i].size() == 1 && surfaces[i][0] == surfaces[0][0] + static_cast<char>(i);
    }
    if (contiguous) {
        return std::string("[") + surfaces.front() + "-" + surfaces.back() + "]";
    }
    std::string body;
    for (const auto & s : surfaces) {
        if (!body.empty()) {
            body += " | ";
        }
        body += quote(s);
    }
    return body;
}

std::string assemble(const Treatments & t, const std::string & body) {
    std::string root = "root ::= ";
    if (t.with_newline) {
        root += "\"\\n\" ";
    }
    if (t.with_space) {
        root += "\" \" ";
    }
    return root + "response\nresponse ::= " + body;
}

const char * kLikertWords[] = {"Strongly disagree", "Disagree", "Neither agree nor disagree", "Agree", "Strongly agree"};
const char * kDigitWords[]  = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

std::string treatment_suffix(const Treatments & t) {
    return std::string(t.with_space ? "_space" : "") + (t.with_newline ? "_newline" : "");
}

std::string treatment_prefix(const Treatments & t) {
    return std::string(t.with_newline ? "\n" : "") + (t.with_space ? " " : "");
}

Treatments strip_treatments(std::string_view & id) {
    Treatments t;
    auto       strip = [&](std::string_view suffix) {
        if (id.size() > suffix.size() && id.substr(id.size() - suffix.size()) == suffix) {
            id.remove_suffix(suffix.size());
            return true;
        }
        return false;
    };
    t.with_newline = strip("_newline");
    t.with_space   = strip("_space");
    return t;
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') {
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }
    return s;
}

std::string lower_numeral(int n) {
    static const char * teens[] = {"ten",     "eleven",  "twelve",    "thirteen", "fourteen",
                                   "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
    static const char * tens[]  = {"", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};
    if (n < 10) {
        return kDigitWords[n];
    }
    if (n < 20) {
        return teens[n - 10];
    }
    if (n < 100) {
        return std::string(tens[n / 10]) + (n % 10 ? std::string("-") + kDigitWords[n % 10] : "");
    }
    return "one hundred";
}

}  // namespace

std::string_view to_string(Family f) {
    switch (f) {
        case Family::Integer: return "integer";
        case Family::Real: return "real";
        case Family::Percent: return "percent";
        case Family::Binary: return "binary";
        case Family::Likert: return "likert";
    }
    return "?";
}

std::string_view to_string(Variant v) {
    return v == Variant::Numeric ? "numeric" : "word";
}

std::optional<Family> parse_family(std::string_view s) {
    for (Family f : kFamilies) {
        if (to_string(f) == s) {
            return f;
        }
    }
    return std::nullopt;
}

std::optional<Variant> parse_variant(std::string_view s) {
    for (Variant v : kVariants) {
        if (to_string(v) == s) {
            return v;
        }
    }
    return std::nullopt;
}

std::string english_numeral(int n) {
    if (n < 0 || n > 100) {
        throw FormatError("numeral out of range: " + std::to_string(n));
    }
    return capitalize(lower_numeral(n));
}

std::string FormatSpec::id() const {
    return std::string(to_string(family)) + "_" + std::string(to_string(variant)) + treatment_suffix(treatments);
}

std::string FormatSpec::emitted(std::string_view surface) const {
    return treatment_prefix(treatments).append(surface);
}

FormatSpec parse_format_id(std::string_view id, const FormatOptions & options) {
    std::string_view rest = id;
    const Treatments t    = strip_treatments(rest);
    const size_t     sep  = rest.find('_');
    if (sep != std::string_view::npos) {
        auto f = parse_family(rest.substr(0, sep));
        auto v = parse_variant(rest.substr(sep + 1));
        if (f && v) {
            return build_format(*f, *v, t, options);
        }
    }
    throw FormatError("unknown format id '" + std::string(id) + "'");
}

FormatSpec build_format(Family family, Variant variant, Treatments treatments) {
    return build_format(family, variant, treatments, FormatOptions());
}

FormatSpec build_format(Family family, Variant variant, Treatments treatments, const FormatOptions & options) {
    FormatSpec spec{family, variant, treatments, {}, {}, 1};
    ValueMap & map = spec.value_map;
    // Grammar alternatives follow the map order except where noted.
    std::vector<std::string> grammar_order;
    std::string              body;

    switch (family) {
        case Family::Integer:
            if (options.integer_max < 1 || options.integer_max > 100) {
                throw FormatError("integer_max must be in [1, 100]");
            }
            for (int k = 1; k <= options.integer_max; ++k) {
                map.emplace_back(variant == Variant::Numeric ? std::to_string(k) : english_numeral(k), k);
            }
            break;
        case Family::Real:
            if (variant == Variant::Numeric) {
                if (options.real_coarse) {
                    for (int k = 1; k <= 9; ++k) {
                        map.emplace_back("0." + std::to_string(k), k / 10.0);
                    }
                    map.emplace_back("1", 1.0);
                } else {
                    for (int k = 0; k < 100; ++k) {
                        map.emplace_back(fixed2(k / 100.0), k / 100.0);
                    }
                    body = "\"0.\"[0-9][0-9]";
                }
            } else {
                for (int k = 0; k <= 9; ++k) {
                    map.emplace_back(std::string("Zero point ") + kDigitWords[k], k / 10.0);
                }
                map.emplace_back("One", 1.0);
            }
            break;
        case Family::Percent:
            for (int k = 0; k <= 100; ++k) {
                map.emplace_back(variant == Variant::Numeric ? std::to_string(k) + "%" : english_numeral(k) + " percent",
                                 k / 100.0);
            }
            break;
        case Family::Binary:
            map = variant == Variant::Numeric ? ValueMap{{"0", 0.0}, {"1", 1.0}} : ValueMap{{"False", 0.0}, {"True", 1.0}};
            grammar_order = {map[1].first, map[0].first};
            break;
        case Family::Likert:
            for (int k = 1; k <= 5; ++k) {
                map.emplace_back(variant == Variant::Numeric ? std::to_string(k) : kLikertWords[k - 1], k);
            }
            break;
    }

    if (body.empty()) {
        if (grammar_order.empty()) {
            for (const auto & [surface, value] : map) {
                grammar_order.push_back(surface);
            }
        }
        body = response_body(grammar_order);
    }
    spec.gbnf_text = assemble(treatments, body);

    size_t longest = 0;
    for (const auto & [surface, value] : map) {
        longest = std::max(longest, spec.emitted(surface).size());
    }
    spec.max_tokens = static_cast<int>(longest);
    return spec;
}

std::vector<FormatSpec> all_formats(const FormatOptions & options) {
    std::vector<FormatSpec> out;
    for (Family f : kFamilies) {
        for (Variant v : kVariants) {
            for (int t = 0; t < 4; ++t) {
                out.push_back(build_format(f, v, Treatments{(t & 2) != 0, (t & 1) != 0}, options));
            }
        }
    }
    return out;
}

double value_of(const FormatSpec & spec, std::string_view surface) {
    const size_t start = surface.find_first_not_of(" \t\r\n");
    surface            = start == std::string_view::npos ? std::string_view() : surface.substr(start);
    for (const auto & [s, v] : spec.value_map) {
        if (s == surface) {
            return v;
        }
    }
    throw FormatError("surface '" + std::string(surface) + "' is not in the value map of " + spec.id());
}

double normalize(const FormatSpec & spec, double value) {
    const double lo = spec.value_map.front().second;
    const double hi = spec.value_map.back().second;
    return (value - lo) / (hi - lo);
}

std::string_view to_string(ChoiceStyle s) {
    switch (s) {
        case ChoiceStyle::Stock: return "stock";
        case ChoiceStyle::AsInteger: return "as_integer";
        case ChoiceStyle::AsReal: return "as_real";
        case ChoiceStyle::AsWord: return "as_word";
    }
    return "?";
}

std::optional<ChoiceStyle> parse_choice_style(std::string_view s) {
    for (ChoiceStyle c : {ChoiceStyle::Stock, ChoiceStyle::AsInteger, ChoiceStyle::AsReal, ChoiceStyle::AsWord}) {
        if (to_string(c) == s) {
            return c;
        }
    }
    return std::nullopt;
}

std::optional<int> ChoiceFormat::index_of(std::string_view surface) const {
    const size_t start = surface.find_first_not_of(" \t\r\n");
    surface            = start == std::string_view::npos ? std::string_view() : surface.substr(start);
    for (size_t i = 0; i < surfaces.size(); ++i) {
        if (surfaces[i] == surface) {
            return static_cast<int>(i);
        }
    }
    return std::nullopt;
}

std::string ChoiceFormat::id() const {
    return ChoiceArm{style, treatments}.id();
}

std::string ChoiceFormat::emitted(std::string_view surface) const {
    return treatment_prefix(treatments).append(surface);
}

std::string ChoiceArm::id() const {
    return "choice_" + std::string(to_string(style)) + treatment_suffix(treatments);
}

ChoiceArm parse_choice_id(std::string_view id) {
    std::string_view rest = id;
    const Treatments t    = strip_treatments(rest);
    if (rest.substr(0, 7) == "choice_") {
        if (auto style = parse_choice_style(rest.substr(7))) {
            return {*style, t};
        }
    }
    throw FormatError("unknown choice format id '" + std::string(id) + "'");
}

std::vector<ChoiceArm> standard_choice_arms() {
    return {{ChoiceStyle::Stock, {}},
            {ChoiceStyle::Stock, {true, false}},
            {ChoiceStyle::Stock, {false, true}},
            {ChoiceStyle::AsInteger, {}},
            {ChoiceStyle::AsReal, {}},
            {ChoiceStyle::AsWord, {}}};
}

ChoiceFormat build_choice_format(ChoiceStyle style, Treatments treatments, int n) {
    if (n < 2 || n > 26) {
        throw FormatError("choice arity must be in [2, 26], got " + std::to_string(n));
    }
    ChoiceFormat cf{style, treatments, n, {}, {}};
    for (int k = 0; k < n; ++k) {
        switch (style) {
            case ChoiceStyle::Stock: cf.surfaces.emplace_back(1, static_cast<char>('A' + k)); break;
            case ChoiceStyle::AsInteger: cf.surfaces.push_back(std::to_string(k + 1)); break;
            case ChoiceStyle::AsReal: cf.surfaces.push_back(fixed2(static_cast<double>(k) / (n - 1))); break;
            case ChoiceStyle::AsWord: cf.surfaces.push_back("Choice " + std::to_string(k + 1)); break;
        }
    }
    cf.gbnf_text = assemble(treatments, response_body(cf.surfaces));
    return cf;
}

int token_budget(const FormatSpec & spec, const vocab::Vocabulary & v) {
    size_t worst = 0;
    for (const auto & [surface, value] : spec.value_map) {
        const std::string text = spec.treatments.with_space ? " " + surface : surface;
        auto              n    = vocab::min_token_count(v, text);
        if (!n) {
            throw VocabError("surface '" + text + "' cannot be spelled with this vocabulary");
        }
        worst = std::max(worst, *n);
    }
    return static_cast<int>(worst) + (spec.treatments.with_newline ? 1 : 0);
}

std::string value_map_json(const FormatSpec & spec) {
    nlohmann::ordered_json j;
    j["id"]           = spec.id();
    j["family"]       = to_string(spec.family);
    j["variant"]      = to_string(spec.variant);
    j["with_newline"] = spec.treatments.with_newline;
    j["with_space"]   = spec.treatments.with_space;
    j["max_tokens"]   = spec.max_tokens;
    auto & values     = j["values"] = nlohmann::ordered_json::array();
    for (const auto & [surface, value] : spec.value_map) {
        values.push_back({{"surface", surface}, {"value", value}});
    }
    return j.dump(2) + "\n";
}

std::filesystem::path emit(const FormatSpec & spec, const std::filesystem::path & dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto grammar_path = dir / (spec.id() + ".gbnf");
    const auto map_path     = dir / (spec.id() + ".json");
    std::ofstream g(grammar_path, std::ios::binary);
    std::ofstream m(map_path, std::ios::binary);
    if (!g || !m) {
        throw IoError("cannot write format files into " + dir.string());
    }
    g << spec.gbnf_text << "\n";
    m << value_map_json(spec);
    if (!g || !m) {
        throw IoError("write failed in " + dir.string());
    }
    return grammar_path;
}

}  // namespace gcd_audit::formats
