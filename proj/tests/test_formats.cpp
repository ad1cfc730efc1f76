#include <set>

#include "doctest.h"
#include "gcd_audit/error.hpp"
#include "gcd_audit/formats.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/utf8.hpp"
#include "gcd_audit/vocab.hpp"

using namespace gcd_audit;
using namespace gcd_audit::formats;

namespace {

std::vector<std::u32string> bounded_language(const std::string & gbnf, const std::vector<std::string> & hints,
                                             size_t max_len) {
    std::set<char32_t> chars{U' ', U'\n', U'\t', U'.', U'%', U'-'};
    for (char32_t c = '0'; c <= '9'; ++c) {
        chars.insert(c);
    }
    for (const auto & h : hints) {
        const auto decoded = utf8::decode(h);
        chars.insert(decoded->begin(), decoded->end());
    }
    const std::u32string alphabet(chars.begin(), chars.end());
    return grammar::enumerate_language(grammar::compile_gbnf(gbnf), alphabet, max_len);
}

}  // namespace

TEST_CASE("build_format: appendix grammars") {
    const auto men = build_format(Family::Likert, Variant::Numeric);
    CHECK(men.gbnf_text == "root ::= response\nresponse ::= [1-5]");
    CHECK(men.value_map.size() == 5);
    CHECK(men.value_map.front() == std::pair<std::string, double>{"1", 1.0});

    const auto quora = build_format(Family::Binary, Variant::Word);
    CHECK(quora.gbnf_text == "root ::= response\nresponse ::= \"True\" | \"False\"");
    CHECK(value_of(quora, "True") == 1.0);
    CHECK(value_of(quora, "False") == 0.0);

    const auto stsb = build_format(Family::Real, Variant::Numeric);
    CHECK(stsb.gbnf_text == "root ::= response\nresponse ::= \"0.\"[0-9][0-9]");
    CHECK(value_of(stsb, "0.00") == 0.0);
    CHECK(value_of(stsb, "0.57") == doctest::Approx(0.57));
}

TEST_CASE("build_format: treatments") {
    const auto spaced = build_format(Family::Integer, Variant::Numeric, {false, true});
    CHECK(spaced.id() == "integer_numeric_space");
    CHECK(value_of(spaced, " 7") == 7.0);
    const auto g = grammar::compile_gbnf(spaced.gbnf_text);
    CHECK(grammar::validate_output(g, " 10"));
    CHECK_FALSE(grammar::validate_output(g, "10"));

    const auto nl = build_format(Family::Likert, Variant::Word, {true, true});
    CHECK(nl.id() == "likert_word_space_newline");
    CHECK(grammar::validate_output(grammar::compile_gbnf(nl.gbnf_text), "\n Strongly agree"));
    CHECK(value_of(nl, "\n Strongly agree") == 5.0);
}

TEST_CASE("value_of") {
    CHECK(value_of(build_format(Family::Likert, Variant::Word), "Strongly agree") == 5.0);
    CHECK(value_of(build_format(Family::Percent, Variant::Numeric), "10%") == doctest::Approx(0.10));
    CHECK(value_of(build_format(Family::Percent, Variant::Word), "Ten percent") == doctest::Approx(0.10));
    CHECK(value_of(build_format(Family::Percent, Variant::Word), "Twenty-one percent") == doctest::Approx(0.21));
    CHECK(value_of(build_format(Family::Real, Variant::Word), "Zero point one") == doctest::Approx(0.1));
    CHECK(value_of(build_format(Family::Real, Variant::Word), "One") == 1.0);
    CHECK(value_of(build_format(Family::Integer, Variant::Word), "Seven") == 7.0);
    CHECK_THROWS_AS(value_of(build_format(Family::Likert, Variant::Word), "strongly agree"), FormatError);
    CHECK_THROWS_AS(value_of(build_format(Family::Binary, Variant::Numeric), "2"), FormatError);
}

TEST_CASE("english_numeral") {
    CHECK(english_numeral(0) == "Zero");
    CHECK(english_numeral(10) == "Ten");
    CHECK(english_numeral(13) == "Thirteen");
    CHECK(english_numeral(40) == "Forty");
    CHECK(english_numeral(99) == "Ninety-nine");
    CHECK(english_numeral(100) == "One hundred");
    CHECK_THROWS_AS(english_numeral(101), FormatError);
}

TEST_CASE("options: integer range and coarse reals") {
    FormatOptions o;
    o.integer_max    = 5;
    const auto five  = build_format(Family::Integer, Variant::Numeric, {}, o);
    CHECK(five.gbnf_text == "root ::= response\nresponse ::= [1-5]");
    o.real_coarse    = true;
    const auto tenth = build_format(Family::Real, Variant::Numeric, {}, o);
    CHECK(tenth.value_map.size() == 10);
    CHECK(tenth.value_map.front().first == "0.1");
    CHECK(tenth.value_map.back().first == "1");
}

TEST_CASE("property: grammar language equals the value map for all 40 specs") {
    for (bool coarse : {false, true}) {
        FormatOptions o;
        o.real_coarse = coarse;
        const auto specs = all_formats(o);
        REQUIRE(specs.size() == 40);
        for (const auto & spec : specs) {
            std::set<std::u32string> expected;
            std::vector<std::string> raw;
            size_t                   longest = 0;
            for (const auto & [surface, value] : spec.value_map) {
                const auto e = *utf8::decode(spec.emitted(surface));
                expected.insert(e);
                raw.push_back(surface);
                longest = std::max(longest, e.size());
            }
            const auto lang = bounded_language(spec.gbnf_text, raw, longest + 2);
            CHECK_MESSAGE(std::set<std::u32string>(lang.begin(), lang.end()) == expected, spec.id());

            // strictly monotone map; neutral under treatments
            const auto plain = build_format(spec.family, spec.variant, {}, o);
            for (size_t i = 0; i < spec.value_map.size(); ++i) {
                if (i > 0) {
                    CHECK(spec.value_map[i - 1].second < spec.value_map[i].second);
                }
                const auto & s = spec.value_map[i].first;
                CHECK(value_of(spec, spec.emitted(s)) == value_of(plain, s));
                CHECK(normalize(spec, spec.value_map[i].second) >= 0.0);
                CHECK(normalize(spec, spec.value_map[i].second) <= 1.0);
            }
        }
    }
}

TEST_CASE("build_choice_format") {
    const auto stock = build_choice_format(ChoiceStyle::Stock, {}, 4);
    CHECK(stock.surfaces == std::vector<std::string>{"A", "B", "C", "D"});
    CHECK(build_choice_format(ChoiceStyle::AsReal, {}, 2).surfaces == std::vector<std::string>{"0.00", "1.00"});
    CHECK(build_choice_format(ChoiceStyle::AsReal, {}, 4).surfaces ==
          std::vector<std::string>{"0.00", "0.33", "0.67", "1.00"});
    CHECK(build_choice_format(ChoiceStyle::AsInteger, {}, 3).surfaces == std::vector<std::string>{"1", "2", "3"});

    const auto word = build_choice_format(ChoiceStyle::AsWord, {true, false}, 5);
    std::vector<std::string> hints = word.surfaces;
    const auto lang = bounded_language(word.gbnf_text, hints, 11);
    std::vector<std::u32string> expected;
    for (int k = 1; k <= 5; ++k) {
        expected.push_back(*utf8::decode("\nChoice " + std::to_string(k)));
    }
    CHECK(lang == expected);
    CHECK(word.index_of("\nChoice 3") == 2);
    CHECK(word.index_of("Choice 9") == std::nullopt);

    CHECK_THROWS_AS(build_choice_format(ChoiceStyle::Stock, {}, 1), FormatError);
    CHECK_THROWS_AS(build_choice_format(ChoiceStyle::Stock, {}, 27), FormatError);
    for (int n = 2; n <= 26; ++n) {
        for (auto style : {ChoiceStyle::Stock, ChoiceStyle::AsInteger, ChoiceStyle::AsReal, ChoiceStyle::AsWord}) {
            const auto cf = build_choice_format(style, {}, n);
            CHECK(std::set<std::string>(cf.surfaces.begin(), cf.surfaces.end()).size() == static_cast<size_t>(n));
        }
    }
}

TEST_CASE("token_budget") {
    // digits and a few words, one token each
    const auto v = vocab::Vocabulary::from_tokens(
        {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", " ", ".", "%", "True", "False", " True", "\n"});
    CHECK(token_budget(build_format(Family::Binary, Variant::Numeric), v) == 1);
    CHECK(token_budget(build_format(Family::Likert, Variant::Numeric), v) == 1);
    CHECK(token_budget(build_format(Family::Binary, Variant::Word), v) == 1);
    CHECK(token_budget(build_format(Family::Binary, Variant::Word, {true, false}), v) == 2);
    CHECK(token_budget(build_format(Family::Integer, Variant::Numeric, {false, true}), v) == 3);
    CHECK(token_budget(build_format(Family::Real, Variant::Numeric), v) == 4);
    CHECK(token_budget(build_format(Family::Percent, Variant::Numeric), v) == 4);
    CHECK_THROWS_AS(token_budget(build_format(Family::Likert, Variant::Word), v), VocabError);
}

TEST_CASE("emit writes grammar and sidecar") {
    const auto dir  = std::filesystem::temp_directory_path() / "gcd_formats_emit";
    std::filesystem::remove_all(dir);
    const auto path = emit(build_format(Family::Likert, Variant::Numeric, {true, true}), dir);
    CHECK(path.filename() == "likert_numeric_space_newline.gbnf");
    CHECK(std::filesystem::exists(dir / "likert_numeric_space_newline.json"));
    std::filesystem::remove_all(dir);
}
