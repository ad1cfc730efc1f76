#include <random>

#include "doctest.h"
#include "gcd_audit/error.hpp"
#include "gcd_audit/utf8.hpp"
#include "gcd_audit/vocab.hpp"
#include "support/oracles.hpp"

using namespace gcd_audit;
using namespace gcd_audit::vocab;

namespace {

Vocabulary letters_with_th() {
    std::vector<std::string> tokens;
    for (char c = 'a'; c <= 'z'; ++c) {
        tokens.emplace_back(1, c);
    }
    tokens.emplace_back("th");
    Vocabulary::Options opts;
    opts.merges = {{"t", "h"}};
    return Vocabulary::from_tokens(std::move(tokens), opts);
}

// Byte-level JSON with all 256 byte symbols plus a few merges, the way
// tokenizer.json files store them.
std::string byte_level_json() {
    std::string vocab = "{";
    for (int b = 0; b < 256; ++b) {
        std::string surface;
        utf8::append(surface, byte_to_surrogate(static_cast<uint8_t>(b)));
        std::string escaped;
        for (char c : surface) {
            if (c == '"' || c == '\\') {
                escaped.push_back('\\');
            }
            escaped.push_back(c);
        }
        vocab += "\"" + escaped + "\":" + std::to_string(b) + ",";
    }
    // "Ġc" = " c", "Ġcat" = " cat"
    vocab += "\"at\":256,\"\xC4\xA0" "c\":257,\"\xC4\xA0" "cat\":258,\"cat\":259,\"c\xC3\x83\xC2\xA9\":260}";
    return R"({"model":{"type":"BPE","vocab":)" + vocab +
           R"(,"merges":["a t","Ġ c","Ġc at","c at","Ã ©","c Ã©"]},"decoder":{"type":"ByteLevel"},)"
           R"("added_tokens":[{"id":261,"content":"<|endoftext|>","special":true}]})";
}

}  // namespace

TEST_CASE("load_vocab: toy file") {
    const auto v = load_vocab("fixtures/toy_vocab.json");
    CHECK(v.size() == 10);
    CHECK(v.bytes(1) == " cat");
    CHECK(v.find("\ncat") == 8u);
    CHECK(v.mode() == VocabMode::Plain);
    CHECK_THROWS_AS(load_vocab("fixtures/does_not_exist.json"), IoError);
}

TEST_CASE("load_vocab: malformed content") {
    CHECK_THROWS_AS(parse_vocab_json(R"({"vocab":{"a":0,"b":1,"a2":1}})"), VocabError);
    CHECK_THROWS_AS(parse_vocab_json(R"({"vocab":{"a":0,"c":2}})"), VocabError);  // id 1 missing
    CHECK_THROWS_AS(parse_vocab_json(R"({"vocab":{"a":0}, "mode":"bogus"})"), VocabError);
    CHECK_THROWS_AS(parse_vocab_json("not json"), VocabError);
    CHECK_THROWS_AS(parse_vocab_json(R"({"merges":[]})"), VocabError);
    // duplicate surface after byte-level resolution: "Ġ" and " " both mean 0x20
    CHECK_THROWS_AS(parse_vocab_json(R"({"mode":"byte_level","vocab":{"Ġ":0," ":1}})"), VocabError);
    CHECK_THROWS_AS(Vocabulary::from_tokens({"x", "y", "x"}), VocabError);
}

TEST_CASE("load_vocab: byte-level surrogates resolve to real bytes") {
    const auto v = parse_vocab_json(byte_level_json());
    CHECK(v.mode() == VocabMode::ByteLevel);
    CHECK(v.size() == 262);
    CHECK(v.bytes(' ') == " ");
    CHECK(v.bytes('\n') == "\n");
    CHECK(v.bytes(0xC3) == "\xC3");
    CHECK(v.bytes(258) == " cat");
    CHECK(v.bytes(260) == "c\xC3\xA9");
    CHECK(v.is_special(261));
    CHECK(v.find("<|endoftext|>") == std::nullopt);

    for (int b = 0; b < 256; ++b) {
        CHECK(surrogate_to_byte(byte_to_surrogate(static_cast<uint8_t>(b))) == static_cast<uint8_t>(b));
    }
    CHECK(byte_to_surrogate(' ') == U'Ġ');
    CHECK(byte_to_surrogate('A') == U'A');
}

TEST_CASE("load_vocab: SentencePiece marker and byte fallback") {
    const auto v = parse_vocab_json(R"({"vocab":{"<unk>":0,"<0x0A>":1,"<0xC3>":2,"<0xA9>":3,"▁cat":4,"cat":5,"▁":6,"a":7},
                                        "added_tokens":[{"id":0,"content":"<unk>","special":true}]})");
    CHECK(v.mode() == VocabMode::SentencePiece);
    CHECK(v.bytes(4) == " cat");
    CHECK(v.bytes(1) == "\n");
    CHECK(v.byte_token(0x0A) == 1u);
    CHECK(v.find("\n") == std::nullopt);  // byte-fallback tokens are not indexed
    // é is not in the vocabulary, so it is spelled with byte fallback
    CHECK(encode(v, "a\xC3\xA9") == std::vector<uint32_t>{7, 2, 3});
    const auto pairs = find_lw_pairs(v);
    CHECK(pairs == std::vector<LwPair>{{4, 5}});
}

TEST_CASE("encode: hand-run BPE") {
    const auto v = letters_with_th();
    const auto ids = encode(v, "the");
    REQUIRE(ids.size() == 2);
    CHECK(v.bytes(ids[0]) == "th");
    CHECK(v.bytes(ids[1]) == "e");
    CHECK(encode(v, "").empty());
    CHECK(decode(v, ids) == "the");
    CHECK(decode(v, std::vector<uint32_t>{}) == "");
    CHECK_THROWS_AS(decode(v, std::vector<uint32_t>{999}), VocabError);
    CHECK_THROWS_AS(encode(v, "A"), VocabError);  // no token covers 'A'
}

TEST_CASE("encode: merge order follows rank, not position") {
    // merges: (b,c) rank 0, (a,b) rank 1  =>  "abc" -> a + bc
    Vocabulary::Options opts;
    opts.merges = {{"b", "c"}, {"a", "b"}};
    const auto v = Vocabulary::from_tokens({"a", "b", "c", "bc", "ab"}, opts);
    CHECK(encode(v, "abc") == std::vector<uint32_t>{0, 3});
}

TEST_CASE("encode: greedy fallback without merges") {
    const auto v = Vocabulary::from_tokens({"c", "a", "t", "ca", "cat", " "});
    CHECK(encode(v, "catca") == std::vector<uint32_t>{4, 3});
}

TEST_CASE("encode: byte-level BPE on a surrogate file") {
    const auto v = parse_vocab_json(byte_level_json());
    CHECK(encode(v, "cat cat") == std::vector<uint32_t>{259, 258});
    CHECK(encode(v, "c\xC3\xA9") == std::vector<uint32_t>{260});
    CHECK(encode(v, "\xE2\x82\xAC") == std::vector<uint32_t>{0xE2, 0x82, 0xAC});
}

TEST_CASE("pre_split: GPT-2 style pieces") {
    const auto pieces = pre_split("Hello world's  42!!\nok");
    const std::vector<std::string_view> expected = {"Hello", " world", "'s", " ", " 42", "!!", "\n", "ok"};
    CHECK(pieces == expected);
    CHECK(pre_split("").empty());
}

TEST_CASE("property: decode(encode(s)) == s") {
    const auto      bl = parse_vocab_json(byte_level_json());
    const auto      lt = letters_with_th();
    std::mt19937_64 rng(31337);
    for (int iter = 0; iter < 500; ++iter) {
        std::string ascii;
        std::string lower;
        const size_t len = rng() % 24;
        for (size_t i = 0; i < len; ++i) {
            ascii.push_back(static_cast<char>(0x20 + rng() % 95));
            lower.push_back(static_cast<char>('a' + rng() % 26));
        }
        if (rng() % 3 == 0) {
            ascii += "\n\xC3\xA9\xE2\x82\xAC";
        }
        CHECK(decode(bl, encode(bl, ascii)) == ascii);
        CHECK(decode(lt, encode(lt, lower)) == lower);
    }
}

TEST_CASE("min_token_count") {
    const auto v = Vocabulary::from_tokens({"a", "b", "ab", "abb", "bb"});
    CHECK(min_token_count(v, "abbab") == 2u);
    CHECK(min_token_count(v, "") == 0u);
    CHECK(min_token_count(v, "c") == std::nullopt);
}

TEST_CASE("decode: special token switch") {
    Vocabulary::Options opts;
    opts.special_ids = {0};
    const auto v     = Vocabulary::from_tokens({"<s>", "hi"}, opts);
    const std::vector<uint32_t> ids{0, 1};
    CHECK(decode(v, ids) == "hi");
    CHECK(decode(v, ids, SpecialDecode::Marker) == "<s>hi");
}

TEST_CASE("find_lw_pairs and participation") {
    const auto v     = Vocabulary::from_tokens({"cat", " cat", "dog"});
    const auto pairs = find_lw_pairs(v);
    CHECK(pairs == std::vector<LwPair>{{1, 0}});
    CHECK(pair_participation_rate(v, pairs) == doctest::Approx(2.0 / 3.0));

    const auto none = Vocabulary::from_tokens({"cat", "dog"});
    CHECK(find_lw_pairs(none).empty());
    CHECK(pair_participation_rate(none, find_lw_pairs(none)) == 0.0);

    const auto toy = load_vocab("fixtures/toy_vocab.json");
    CHECK(find_lw_pairs(toy) == std::vector<LwPair>{{1, 0}, {3, 4}});
    CHECK(count_prefix_twins(toy, '\n') == 1);
    CHECK(count_prefix_twins(toy, '\t') == 0);
}

TEST_CASE("property: LW pairs satisfy the decode identity and match an exhaustive scan") {
    std::mt19937_64 rng(5);
    for (int iter = 0; iter < 100; ++iter) {
        const auto v     = oracle::random_vocab(rng);
        const auto pairs = find_lw_pairs(v);
        std::vector<LwPair> scan;
        for (uint32_t bare = 0; bare < v.size(); ++bare) {
            for (uint32_t lw = 0; lw < v.size(); ++lw) {
                if (v.is_special(bare) || v.is_special(lw) || v.bytes(bare).empty() || v.bytes(bare)[0] == ' ') {
                    continue;
                }
                if (v.bytes(lw) == " " + v.bytes(bare)) {
                    scan.push_back({lw, bare});
                }
            }
        }
        CHECK(pairs == scan);
        for (const auto & p : pairs) {
            const std::vector<uint32_t> lw{p.lw_id};
            const std::vector<uint32_t> bare{p.bare_id};
            CHECK(decode(v, lw) == " " + decode(v, bare));
            CHECK(p.lw_id != p.bare_id);
        }
    }
}

TEST_CASE("property: prefix tree holds exactly the regular valid-UTF-8 surfaces") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 100; ++iter) {
        const auto v = oracle::random_vocab(rng);
        std::vector<std::pair<uint32_t, std::u32string>> expected;
        for (uint32_t id = 0; id < v.size(); ++id) {
            auto s = utf8::decode(v.bytes(id));
            if (!v.is_special(id) && s) {
                expected.emplace_back(id, *s);
            }
        }
        CHECK(v.trie().surfaces() == expected);
        CHECK(v.trie().vocab_size() == v.size());
    }
}
