#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/cli.hpp"

using namespace gcd_audit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("gcd_cli_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write_file(const fs::path & p, const std::string & text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

struct Result {
    int         code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int          code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

// stdout must hold exactly one JSON document.
nlohmann::json one_document(const std::string & text) {
    std::istringstream in(text);
    nlohmann::json     j;
    in >> j;
    in >> std::ws;
    CHECK(in.peek() == std::char_traits<char>::eof());
    return j;
}

std::string sts_fixture(int n) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        out += "a" + std::to_string(i) + "\tb" + std::to_string(i) + "\t" + std::to_string(5.0 * i / (n - 1)) +
               "\tsts-" + std::to_string(i) + "\n";
    }
    return out;
}

std::string config_text(const fs::path & dir, const std::string & family, const std::string & size,
                        const std::string & output) {
    return "run_id = cli\nmodel = " + family + "-" + size + "\nmodel_family = " + family + "\nmodel_size = " + size +
           "\nbenchmark = stsb:" + (dir / "sts.tsv").string() + "\nformats = all\nmock_target_rho = 1\noutput = " +
           output + "\n";
}

}  // namespace

TEST_CASE("grammar check: appendix grammars") {
    auto men = run({"grammar", "check", "../grammars/men.gbnf", "--input", "3"});
    CHECK(men.code == 0);
    CHECK(men.out == "accepted\n");
    auto stsb = run({"grammar", "check", "../grammars/stsb.gbnf", "--input", "1.00"});
    CHECK(stsb.code == 0);
    CHECK(stsb.out == "rejected\n");
    auto quora = run({"grammar", "check", "../grammars/quora.gbnf", "--input", "True", "--json"});
    CHECK(quora.code == 0);
    CHECK(one_document(quora.out)["accepted"] == true);
}

TEST_CASE("exit codes") {
    auto unknown = run({"grammar", "check", "../grammars/men.gbnf", "--input", "3", "--bogus"});
    CHECK(unknown.code == 1);
    CHECK(unknown.err.find("Usage:") != std::string::npos);
    CHECK(unknown.out.empty());

    CHECK(run({"nonsense"}).code == 1);
    CHECK(run({}).code == 1);
    CHECK(run({"--help"}).code == 0);

    auto missing = run({"grammar", "check", "no_such.gbnf", "--input", "3"});
    CHECK(missing.code == 2);

    TempDir dir;
    write_file(dir.path / "bad.gbnf", "root ::= [1-");
    CHECK(run({"grammar", "check", (dir.path / "bad.gbnf").string(), "--input", "1"}).code == 1);

    auto json_err = run({"--json", "grammar", "check", "no_such.gbnf", "--input", "3"});
    CHECK(json_err.code == 2);
    CHECK(one_document(json_err.out)["exit_code"] == 2);

    CHECK(run({"--jobs", "0", "grammar", "check", "../grammars/men.gbnf", "--input", "3"}).code == 1);
    CHECK(run({"--jobs", "17", "grammar", "check", "../grammars/men.gbnf", "--input", "3"}).code == 1);
}

TEST_CASE("grammar mask") {
    TempDir dir;
    write_file(dir.path / "g.gbnf", "root ::= \" \"? \"cat\" \"s\"?");
    const std::string vocab = "fixtures/toy_vocab.json";
    auto              r     = run({"--json", "grammar", "mask", (dir.path / "g.gbnf").string(), "--vocab", vocab});
    REQUIRE(r.code == 0);
    auto j = one_document(r.out);
    // "cat", " cat" and " " are viable first tokens.
    CHECK(j["allowed"] == 3);
    CHECK(j["eos_allowed"] == false);
    auto after = one_document(
        run({"--json", "grammar", "mask", (dir.path / "g.gbnf").string(), "--vocab", vocab, "--prefix", "cat"}).out);
    CHECK(after["allowed"] == 1);
    CHECK(after["tokens"][0]["surface"] == "s");
    CHECK(after["eos_allowed"] == true);
    auto serial = one_document(run({"--json", "grammar", "mask", (dir.path / "g.gbnf").string(), "--vocab", vocab,
                                    "--prefix", "cat", "--serial"})
                                   .out);
    CHECK(serial == after);
    CHECK(run({"grammar", "mask", (dir.path / "g.gbnf").string(), "--vocab", vocab, "--prefix", "dog"}).code == 1);
}

TEST_CASE("formats emit") {
    TempDir dir;
    auto    r = run({"--json", "formats", "emit", "-o", dir.path.string()});
    REQUIRE(r.code == 0);
    CHECK(one_document(r.out)["written"].size() == 40);
    CHECK(fs::exists(dir.path / "real_numeric.gbnf"));
    CHECK(fs::exists(dir.path / "likert_word_space_newline.gbnf"));
    auto one = run({"formats", "emit", "-o", (dir.path / "one").string(), "binary_word"});
    CHECK(one.code == 0);
    CHECK(fs::exists(dir.path / "one" / "binary_word.gbnf"));
    CHECK(run({"formats", "emit", "-o", dir.path.string(), "fraction_numeric"}).code == 1);

    auto check = run({"grammar", "check", (dir.path / "binary_word.gbnf").string(), "--input", "True"});
    CHECK(check.out == "accepted\n");
}

TEST_CASE("run, then stats over the records") {
    TempDir dir;
    write_file(dir.path / "sts.tsv", sts_fixture(12));
    std::vector<std::string> outs;
    for (const char * family : {"alpha", "beta"}) {
        for (const char * size : {"small", "large"}) {
            const auto name = std::string(family) + size;
            const auto cfg  = dir.path / (name + ".cfg");
            outs.push_back((dir.path / (name + ".jsonl")).string());
            write_file(cfg, config_text(dir.path, family, size, outs.back()));
            auto r = run({"--json", "--jobs", "4", "run", "--config", cfg.string()});
            REQUIRE(r.code == 0);
            auto j = one_document(r.out);
            CHECK(j["written"] == 12 * 40);
            CHECK(j["parse_failures"] == 0);
        }
    }
    // Resuming a finished run writes nothing.
    auto again = one_document(run({"--json", "run", "--config", (dir.path / "alphasmall.cfg").string()}).out);
    CHECK(again["written"] == 0);
    CHECK(again["resumed"] == 12 * 40);

    auto with_records = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
        head.insert(head.end(), outs.begin(), outs.end());
        head.insert(head.end(), tail.begin(), tail.end());
        return run(head);
    };
    auto corr = with_records({"--json", "stats", "correlate"}, {"--by", "model,format"});
    REQUIRE(corr.code == 0);
    auto groups = one_document(corr.out)["groups"];
    CHECK(groups.size() == 4 * 40);
    for (const auto & g : groups) {
        CHECK(g["spearman"].get<double>() > 0.8);
        CHECK(g["failure_rate"] == 0.0);
    }
    auto md = with_records({"stats", "correlate"}, {"--by", "format"});
    CHECK(md.out.rfind("| format_id | spearman |", 0) == 0);
    auto csv = with_records({"--csv", "stats", "correlate"}, {"--by", "format"});
    CHECK(csv.out.rfind("format_id,spearman,", 0) == 0);
    CHECK(with_records({"stats", "correlate"}, {"--by", "colour"}).code == 1);

    auto deltas = with_records({"--json", "stats", "deltas"});
    REQUIRE(deltas.code == 0);
    auto dj = one_document(deltas.out);
    CHECK(dj["deltas"].size() == 4);
    CHECK(dj["mean"].contains("alpha"));

    auto ftab = with_records({"stats", "formats"});
    REQUIRE(ftab.code == 0);
    CHECK(ftab.out.find("| alpha |") != std::string::npos);
    CHECK(one_document(with_records({"--json", "stats", "formats"}).out)["sizes"].size() == 2);

    auto matrix = with_records({"--json", "stats", "matrix"}, {"--model", "alpha-small"});
    REQUIRE(matrix.code == 0);
    auto mj = one_document(matrix.out);
    CHECK(mj["formats"].size() == 40);
    CHECK(mj["spearman"][0][0] == 1.0);
    CHECK(with_records({"stats", "matrix"}, {"--model", "nobody"}).code == 1);
}

TEST_CASE("stats choices from an accuracy table") {
    TempDir dir;
    write_file(dir.path / "acc.csv",
               "benchmark,arm,accuracy\nARC-C,choice_stock,59\nARC-C,choice_stock_newline,77\n"
               "BoolQ,choice_stock,38\nBoolQ,choice_stock_newline,58\n");
    auto md = run({"stats", "choices", "--accuracy", (dir.path / "acc.csv").string()});
    REQUIRE(md.code == 0);
    CHECK(md.out.find("| BoolQ | 38 | 58 (+53%) |") != std::string::npos);
    auto j = one_document(run({"--json", "stats", "choices", "--accuracy", (dir.path / "acc.csv").string()}).out);
    CHECK(j["arms"][0] == "choice_stock");
    CHECK(j["rows"].size() == 3);
    CHECK(j["rows"][2]["benchmark"] == "mean");
    CHECK(j["rows"][0]["arms"]["choice_stock"]["percent_change"] == 0);
    CHECK(run({"stats", "choices"}).code == 1);
}

TEST_CASE("stats baseline") {
    TempDir dir;
    write_file(dir.path / "agg.csv", "benchmark,method,corr,mse\nMEN,BERTScore,0.768,397\nSTSB,BERTScore,0.824,379\n");
    auto j = one_document(run({"--json", "stats", "baseline", "--aggregates", (dir.path / "agg.csv").string()}).out);
    CHECK(j["mean_corr"]["BERTScore"].get<double>() == doctest::Approx(0.796));

    write_file(dir.path / "sts.tsv", "abc\tabc\t5\tx\nabc\txyz\t0\ty\nabcd\tabcx\t4\tz\n");
    auto lev = one_document(
        run({"--json", "stats", "baseline", "--benchmark", "stsb:" + (dir.path / "sts.tsv").string()}).out);
    REQUIRE(lev["rows"].size() == 2);
    CHECK(lev["rows"][0]["method"] == "levenshtein_similarity");
    CHECK(lev["rows"][0]["corr"].get<double>() > 0.9);
    CHECK(lev["rows"][1]["corr"].get<double>() < -0.9);

    write_file(dir.path / "scores.tsv", "x\t5\ny\t0\n");
    CHECK(run({"stats", "baseline", "--benchmark", "stsb:" + (dir.path / "sts.tsv").string(), "--scores",
               (dir.path / "scores.tsv").string()})
              .code == 1);
    CHECK(run({"stats", "baseline"}).code == 1);
}

TEST_CASE("tokens subcommands") {
    TempDir           dir;
    const std::string vocab = "fixtures/toy_vocab.json";

    auto pairs = one_document(run({"--json", "tokens", "pairs", "--vocab", vocab}).out);
    CHECK(pairs["pairs"] == 2);
    CHECK(pairs["participation_rate"] == 0.4);

    write_file(dir.path / "corpus.txt", "cat cat cat\n");
    auto prev = one_document(run({"--json", "tokens", "prevalence", "--vocab", vocab, "--corpus",
                                  (dir.path / "corpus.txt").string()})
                                 .out);
    CHECK(prev["lw_count"] == 2);
    CHECK(prev["bare_count"] == 1);
    CHECK(prev["ratio"] == 2.0);
    CHECK(run({"tokens", "prevalence", "--vocab", vocab, "--corpus", "missing.txt"}).code == 2);

    analysis::EmbeddingMatrix m;
    m.rows = 10;
    m.cols = 3;
    for (size_t i = 0; i < m.rows; ++i) {
        for (size_t k = 0; k < m.cols; ++k) {
            m.data.push_back(static_cast<float>((i * 7 + k * 3) % 5) - 2.0f);
        }
    }
    // Make both LW pairs identical vectors.
    std::copy_n(m.data.begin() + 0, 3, m.data.begin() + 3);
    std::copy_n(m.data.begin() + 12, 3, m.data.begin() + 9);
    analysis::save_embeddings(m, dir.path / "e.bin");
    auto sim = one_document(run({"--json", "tokens", "embsim", "--vocab", vocab, "--embeddings",
                                 (dir.path / "e.bin").string(), "--baseline-k", "50"})
                                .out);
    CHECK(sim["pairs"] == 2);
    CHECK(sim["mean"].get<double>() == doctest::Approx(1.0));

    const auto csv = (dir.path / "proj.csv").string();
    auto       ex  = one_document(run({"--json", "tokens", "export-proj", "--vocab", vocab, "--embeddings",
                                       (dir.path / "e.bin").string(), "-o", csv, "--background-k", "3"})
                               .out);
    CHECK(ex["rows"] == 2 * 2 + 3);
}
