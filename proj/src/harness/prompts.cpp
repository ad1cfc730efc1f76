#include "gcd_audit/error.hpp"
#include "gcd_audit/harness.hpp"

namespace gcd_audit::harness {

namespace {

using formats::Family;
using formats::FormatSpec;
using formats::Variant;

std::string statement(BenchmarkKind kind) {
    switch (kind) {
        case BenchmarkKind::Stsb:
        case BenchmarkKind::Men: return "These strings are similar.";
        case BenchmarkKind::Qqp: return "These strings are duplicates.";
        case BenchmarkKind::ToxicChat: return "These strings contain toxic language.";
        case BenchmarkKind::MultipleChoice: break;
    }
    throw ValidationError("multiple-choice items have no agreement statement");
}

std::string quoted_list(const std::vector<std::string> & words, const char * last_joiner) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i > 0) {
            out += i + 1 == words.size() ? last_joiner : ", ";
        }
        out += "'" + words[i] + "'";
    }
    return out;
}

std::string instruction(BenchmarkKind kind, const FormatSpec & spec) {
    const auto & first = spec.value_map.front().first;
    const auto & last  = spec.value_map.back().first;
    const bool   words = spec.variant == Variant::Word;
    switch (spec.family) {
        case Family::Integer:
            return words ? "Respond only with a number written as a word, between '" + first + "' and '" + last + "'."
                         : "Respond only with a number between " + first + " and " + last + ".";
        case Family::Real:
            return words ? "Respond only with a number written in words, between '" + first + "' and '" + last + "'."
                         : "Respond only with a number between 0 and 1.";
        case Family::Percent:
            return words ? "Respond only with a percentage written in words, between '" + first + "' and '" + last + "'."
                         : "Respond only with a percentage between " + first + " and " + last + ".";
        case Family::Binary:
            return "Respond only with '" + spec.value_map[1].first + "' or '" + spec.value_map[0].first + "'.";
        case Family::Likert: {
            if (words) {
                std::vector<std::string> labels;
                for (const auto & [surface, value] : spec.value_map) {
                    labels.push_back(surface);
                }
                return "Respond only with " + quoted_list(labels, " or ") + ".";
            }
            if (kind == BenchmarkKind::Stsb || kind == BenchmarkKind::Men) {
                return "Respond only with a number between 1 and 5, where\n"
                       "1 = Strongly disagree,\n"
                       "2 = Disagree,\n"
                       "3 = Neither agree nor disagree,\n"
                       "4 = Agree,\n"
                       "5 = Strongly agree";
            }
            return "Respond only with a number between 1 and 5.";
        }
    }
    return {};
}

std::string choice_instruction(const formats::ChoiceFormat & cf) {
    switch (cf.style) {
        case formats::ChoiceStyle::Stock: return "Respond only with the letter of the correct choice.";
        case formats::ChoiceStyle::AsInteger: return "Respond only with the number of the correct choice.";
        case formats::ChoiceStyle::AsReal: return "Respond only with the decimal label of the correct choice.";
        case formats::ChoiceStyle::AsWord: return "Respond only with the name of the correct choice.";
    }
    return {};
}

}  // namespace

std::string render_prompt(const BenchmarkItem & item, const FormatSpec & spec, const PromptWrap & wrap) {
    if (item.kind == BenchmarkKind::MultipleChoice) {
        throw ValidationError("format " + spec.id() + " does not apply to multiple-choice item " + item.id);
    }
    std::string p = wrap.prefix;
    p += "<string 1>" + item.text_a + "</string 1>\n\n";
    p += "<string 2>" + item.text_b + "</string 2>\n\n";
    p += "Rate your agreement with the following statement: " + statement(item.kind) + "\n\n";
    p += instruction(item.kind, spec);
    return p + wrap.suffix;
}

std::string render_choice_prompt(const BenchmarkItem & item, const formats::ChoiceFormat & cf, const PromptWrap & wrap) {
    if (item.kind != BenchmarkKind::MultipleChoice) {
        throw ValidationError("choice format applies only to multiple-choice items, not " + item.id);
    }
    if (static_cast<int>(item.choices.size()) != cf.n) {
        throw ValidationError("item " + item.id + " has " + std::to_string(item.choices.size()) +
                              " choices but the format expects " + std::to_string(cf.n));
    }
    std::string p = wrap.prefix;
    p += "Question: " + item.text_a + "\n\n";
    for (int k = 0; k < cf.n; ++k) {
        p += cf.surfaces[k] + ": " + item.choices[k] + "\n";
    }
    p += "\n" + choice_instruction(cf);
    return p + wrap.suffix;
}

}  // namespace gcd_audit::harness
