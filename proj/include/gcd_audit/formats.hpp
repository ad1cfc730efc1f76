#pragma once

// Output-format grammars and their surface -> value maps.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gcd_audit::vocab {
class Vocabulary;
}

namespace gcd_audit::formats {

enum class Family { Integer, Real, Percent, Binary, Likert };
enum class Variant { Numeric, Word };

struct Treatments {
    bool with_newline = false;
    bool with_space   = false;

    bool operator==(const Treatments &) const = default;
};

struct FormatOptions {
    int  integer_max     = 10;     // integer family covers 1..integer_max
    bool real_coarse     = false;  // "0.1".."1" instead of "0.00".."0.99"
};

struct FormatSpec {
    Family     family;
    Variant    variant;
    Treatments treatments;
    std::string gbnf_text;
    // Un-prefixed surfaces in ascending value order.
    std::vector<std::pair<std::string, double>> value_map;
    // Upper bound on generated tokens; refined per vocabulary by token_budget().
    int max_tokens = 1;

    // `<family>_<variant>[_space][_newline]`
    std::string id() const;
    // Surface as generated, with treatment prefixes.
    std::string emitted(std::string_view surface) const;
};

std::string_view to_string(Family f);
std::string_view to_string(Variant v);
std::optional<Family>  parse_family(std::string_view s);
std::optional<Variant> parse_variant(std::string_view s);

inline constexpr Family  kFamilies[] = {Family::Integer, Family::Real, Family::Percent, Family::Binary, Family::Likert};
inline constexpr Variant kVariants[] = {Variant::Numeric, Variant::Word};

// Capitalized English numeral, "Zero" .. "One hundred" ("Twenty-one").
std::string english_numeral(int n);

FormatSpec build_format(Family family, Variant variant, Treatments treatments, const FormatOptions & options);
FormatSpec build_format(Family family, Variant variant, Treatments treatments = {});

// Inverse of FormatSpec::id(). Throws FormatError for unknown ids.
FormatSpec parse_format_id(std::string_view id, const FormatOptions & options = FormatOptions());

// Every family x variant x treatment combination, in a fixed order.
std::vector<FormatSpec> all_formats(const FormatOptions & options = FormatOptions());

// Strips leading whitespace and looks the surface up (case-sensitive).
// Throws FormatError for unmapped surfaces.
double value_of(const FormatSpec & spec, std::string_view surface);

// Maps a value onto [0, 1] using the extremes of the spec's value map.
double normalize(const FormatSpec & spec, double value);

enum class ChoiceStyle { Stock, AsInteger, AsReal, AsWord };

std::string_view            to_string(ChoiceStyle s);
std::optional<ChoiceStyle>  parse_choice_style(std::string_view s);

struct ChoiceFormat {
    ChoiceStyle              style;
    Treatments               treatments;
    int                      n;
    std::vector<std::string> surfaces;  // index = choice index, un-prefixed
    std::string              gbnf_text;

    // `choice_<style>[_space][_newline]`
    std::string id() const;
    std::string emitted(std::string_view surface) const;

    // Index of a (possibly whitespace-prefixed) surface; nullopt if unknown.
    std::optional<int> index_of(std::string_view surface) const;
};

// Throws FormatError unless 2 <= n <= 26.
ChoiceFormat build_choice_format(ChoiceStyle style, Treatments treatments, int n);

struct ChoiceArm {
    ChoiceStyle style;
    Treatments  treatments;

    std::string id() const;
};

// Inverse of ChoiceArm::id(). Throws FormatError for unknown ids.
ChoiceArm parse_choice_id(std::string_view id);

// The six multiple-choice arms compared against the letter baseline:
// stock, stock+newline, stock+space, as_integer, as_real, as_word.
std::vector<ChoiceArm> standard_choice_arms();

// Max over surfaces of the fewest tokens spelling the emitted surface, plus
// one for the newline treatment. Throws VocabError if a surface cannot be
// spelled at all.
int token_budget(const FormatSpec & spec, const vocab::Vocabulary & v);

// Writes `<id>.gbnf` and `<id>.json` into `dir`; returns the grammar path.
std::filesystem::path emit(const FormatSpec & spec, const std::filesystem::path & dir);

std::string value_map_json(const FormatSpec & spec);

}  // namespace gcd_audit::formats
