#include "gcd_audit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/error.hpp"
#include "gcd_audit/formats.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/harness.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

struct Table {
    std::vector<std::string>              header;
    std::vector<std::vector<std::string>> rows;
};

std::string csv_field(const std::string & s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string q = "\"";
    for (char c : s) {
        q += c;
        if (c == '"') {
            q += '"';
        }
    }
    return q + "\"";
}

void write_table(std::ostream & out, const Table & t, bool csv) {
    auto line = [&](const std::vector<std::string> & cells) {
        if (csv) {
            for (size_t i = 0; i < cells.size(); ++i) {
                out << (i ? "," : "") << csv_field(cells[i]);
            }
            out << "\n";
            return;
        }
        out << "|";
        for (const auto & c : cells) {
            std::string esc;
            for (char ch : c) {
                esc += ch == '|' ? std::string("\\|") : std::string(1, ch);
            }
            out << " " << esc << " |";
        }
        out << "\n";
    };
    line(t.header);
    if (!csv) {
        out << "|";
        for (size_t i = 0; i < t.header.size(); ++i) {
            out << (i == 0 ? " --- |" : " ---: |");
        }
        out << "\n";
    }
    for (const auto & r : t.rows) {
        line(r);
    }
}

std::string fixed(double x, int digits = 3) {
    if (std::isnan(x)) {
        return "n/a";
    }
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << x;
    return ss.str();
}

ordered_json number_or_null(double x) {
    return std::isnan(x) ? ordered_json(nullptr) : ordered_json(x);
}

ordered_json optional_json(const std::optional<double> & x) {
    return x ? ordered_json(*x) : ordered_json(nullptr);
}

std::string read_file(const fs::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<harness::RunRecord> read_all(const std::vector<std::string> & paths) {
    std::vector<harness::RunRecord> out;
    for (const auto & p : paths) {
        auto part = harness::read_records(p);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

std::string dump(const ordered_json & j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string printable(std::string_view bytes) {
    return nlohmann::json(std::string(bytes)).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// Command state
// ---------------------------------------------------------------------------

struct Globals {
    bool   json = false;
    bool   csv  = false;
    size_t jobs = default_jobs();
};

struct Context {
    Globals &      g;
    std::ostream & out;
    std::ostream & err;
};

// grammar -------------------------------------------------------------------

struct GrammarCheckArgs {
    std::string file;
    std::string input;
};

int grammar_check(const Context & c, const GrammarCheckArgs & a) {
    const auto g        = grammar::compile_gbnf(read_file(a.file));
    const bool accepted = grammar::validate_output(g, a.input);
    if (c.g.json) {
        c.out << dump(ordered_json{{"input", a.input}, {"accepted", accepted}}) << "\n";
    } else {
        c.out << (accepted ? "accepted" : "rejected") << "\n";
    }
    return kExitOk;
}

struct GrammarMaskArgs {
    std::string file;
    std::string vocab;
    std::string prefix;
    bool        serial = false;
};

int grammar_mask(const Context & c, const GrammarMaskArgs & a) {
    const auto g     = grammar::compile_gbnf(read_file(a.file));
    const auto v     = vocab::load_vocab(a.vocab);
    const auto state = grammar::advance_utf8(g, grammar::initial_state(g), a.prefix);
    if (state.rejected()) {
        throw ValidationError("prefix " + printable(a.prefix) + " is not a prefix of the grammar's language");
    }
    const auto mask = a.serial ? grammar::allowed_tokens_serial(g, state, v.trie())
                               : grammar::allowed_tokens(g, state, v.trie());
    const auto ids  = mask.ids();
    if (c.g.json) {
        ordered_json toks = ordered_json::array();
        for (uint32_t id : ids) {
            toks.push_back({{"id", id}, {"surface", v.bytes(id)}});
        }
        c.out << dump(ordered_json{{"prefix", a.prefix},
                              {"vocab_size", v.size()},
                              {"allowed", ids.size()},
                              {"eos_allowed", mask.eos_allowed},
                              {"tokens", toks}})
              << "\n";
        return kExitOk;
    }
    Table t{{"id", "surface"}, {}};
    for (uint32_t id : ids) {
        t.rows.push_back({std::to_string(id), printable(v.bytes(id))});
    }
    write_table(c.out, t, c.g.csv);
    c.err << ids.size() << " of " << v.size() << " tokens allowed"
          << (mask.eos_allowed ? ", end of sequence allowed" : "") << "\n";
    return kExitOk;
}

// formats -------------------------------------------------------------------

struct FormatsEmitArgs {
    std::string              out_dir = ".";
    std::vector<std::string> ids;
    bool                     all         = false;
    int                      integer_max = 10;
    bool                     real_coarse = false;
};

int formats_emit(const Context & c, const FormatsEmitArgs & a) {
    formats::FormatOptions opts;
    opts.integer_max = a.integer_max;
    opts.real_coarse = a.real_coarse;
    std::vector<formats::FormatSpec> specs;
    if (a.all || a.ids.empty()) {
        specs = formats::all_formats(opts);
    } else {
        for (const auto & id : a.ids) {
            specs.push_back(formats::parse_format_id(id, opts));
        }
    }
    ordered_json written = ordered_json::array();
    for (const auto & spec : specs) {
        const auto path = formats::emit(spec, a.out_dir);
        written.push_back({{"id", spec.id()}, {"grammar", path.string()}});
        if (!c.g.json) {
            c.out << path.string() << "\n";
        }
    }
    if (c.g.json) {
        c.out << dump(ordered_json{{"written", written}}) << "\n";
    }
    c.err << specs.size() << " grammar(s) written to " << a.out_dir << "\n";
    return kExitOk;
}

// run -----------------------------------------------------------------------

struct RunArgs {
    std::string config;
    bool        jobs_given = false;
};

int run_cmd(const Context & c, const RunArgs & a) {
    auto config = harness::load_config(a.config);
    if (a.jobs_given) {
        config.jobs = c.g.jobs;
    }
    auto backend = harness::make_backend(config);
    size_t done  = 0;
    const auto summary = harness::execute_run(config, *backend, [&](const harness::RunRecord &) {
        if (++done % 1000 == 0) {
            c.err << done << " cells written\n";
        }
    });
    if (c.g.json) {
        c.out << dump(ordered_json{{"run_id", config.run_id},
                              {"output", config.output.string()},
                              {"cells", summary.cells},
                              {"resumed", summary.resumed},
                              {"written", summary.written},
                              {"parse_failures", summary.parse_failures}})
              << "\n";
    } else {
        c.out << "cells " << summary.cells << "\nresumed " << summary.resumed << "\nwritten " << summary.written
              << "\nparse_failures " << summary.parse_failures << "\n";
    }
    c.err << "run " << config.run_id << " -> " << config.output.string() << "\n";
    return kExitOk;
}

// stats ---------------------------------------------------------------------

struct CorrelateArgs {
    std::vector<std::string> records;
    std::vector<std::string> by{"model", "format"};
};

int stats_correlate(const Context & c, const CorrelateArgs & a) {
    std::vector<analysis::GroupField> fields;
    for (const auto & name : a.by) {
        auto f = analysis::parse_group_field(name);
        if (!f) {
            throw ValidationError("unknown grouping field '" + name + "'");
        }
        fields.push_back(*f);
    }
    const auto reports = analysis::correlation_table(read_all(a.records), fields);
    if (c.g.json) {
        ordered_json rows = ordered_json::array();
        for (const auto & r : reports) {
            ordered_json key = ordered_json::object();
            for (const auto & [k, v] : r.key) {
                key[k] = v;
            }
            rows.push_back({{"key", key},
                            {"spearman", number_or_null(r.rho)},
                            {"pearson", number_or_null(r.r)},
                            {"mse", number_or_null(r.mse)},
                            {"n", r.n},
                            {"cells", r.cells},
                            {"failure_rate", r.failure_rate}});
        }
        c.out << dump(ordered_json{{"groups", rows}}) << "\n";
        return kExitOk;
    }
    Table t;
    for (auto f : fields) {
        t.header.emplace_back(analysis::to_string(f));
    }
    for (const char * h : {"spearman", "pearson", "mse", "n", "cells", "failure_rate"}) {
        t.header.emplace_back(h);
    }
    for (const auto & r : reports) {
        std::vector<std::string> row;
        for (const auto & kv : r.key) {
            row.push_back(kv.second);
        }
        row.push_back(fixed(r.rho));
        row.push_back(fixed(r.r));
        row.push_back(fixed(r.mse, 4));
        row.push_back(std::to_string(r.n));
        row.push_back(std::to_string(r.cells));
        row.push_back(fixed(r.failure_rate));
        t.rows.push_back(std::move(row));
    }
    write_table(c.out, t, c.g.csv);
    return kExitOk;
}

struct RecordsArgs {
    std::vector<std::string> records;
};

int stats_formats(const Context & c, const RecordsArgs & a) {
    const auto t = analysis::format_table(read_all(a.records));
    if (c.g.json) {
        ordered_json blocks = ordered_json::array();
        for (const auto & size : t.sizes) {
            ordered_json rows = ordered_json::array();
            for (const auto & mf : t.model_families) {
                ordered_json row{{"model_family", mf}};
                for (auto f : formats::kFamilies) {
                    row[std::string(formats::to_string(f))] = number_or_null(t.at(size, mf, f));
                }
                rows.push_back(row);
            }
            ordered_json mean = ordered_json::object();
            for (auto f : formats::kFamilies) {
                mean[std::string(formats::to_string(f))] = number_or_null(t.column_mean(size, f));
            }
            blocks.push_back({{"size", size}, {"rows", rows}, {"mean", mean}});
        }
        c.out << dump(ordered_json{{"sizes", blocks}}) << "\n";
        return kExitOk;
    }
    for (size_t b = 0; b < t.sizes.size(); ++b) {
        const auto & size = t.sizes[b];
        Table        tab;
        tab.header.push_back(c.g.csv ? "model_family" : "Correlations, " + size);
        for (auto f : formats::kFamilies) {
            tab.header.emplace_back(formats::to_string(f));
        }
        for (const auto & mf : t.model_families) {
            std::vector<std::string> row{mf};
            for (auto f : formats::kFamilies) {
                row.push_back(fixed(t.at(size, mf, f)));
            }
            tab.rows.push_back(std::move(row));
        }
        std::vector<std::string> mean{"mean"};
        for (auto f : formats::kFamilies) {
            mean.push_back(fixed(t.column_mean(size, f)));
        }
        tab.rows.push_back(std::move(mean));
        if (c.g.csv) {
            for (auto & row : tab.rows) {
                row.insert(row.begin(), size);
            }
            tab.header.insert(tab.header.begin(), "size");
            if (b > 0) {
                tab.header.clear();
            }
        }
        if (b > 0 && !c.g.csv) {
            c.out << "\n";
        }
        if (tab.header.empty()) {
            for (const auto & row : tab.rows) {
                for (size_t i = 0; i < row.size(); ++i) {
                    c.out << (i ? "," : "") << csv_field(row[i]);
                }
                c.out << "\n";
            }
        } else {
            write_table(c.out, tab, c.g.csv);
        }
    }
    return kExitOk;
}

int stats_deltas(const Context & c, const RecordsArgs & a) {
    const auto d = analysis::treatment_deltas(read_all(a.records));
    if (c.g.json) {
        ordered_json rows = ordered_json::array();
        for (auto tr : analysis::kTreatments) {
            ordered_json row{{"condition", analysis::to_string(tr)}};
            for (const auto & mf : d.model_families) {
                row[mf] = d.delta.at(tr).at(mf);
            }
            rows.push_back(row);
        }
        ordered_json mean = ordered_json::object();
        for (const auto & mf : d.model_families) {
            mean[mf] = d.family_mean(mf);
        }
        c.out << dump(ordered_json{{"deltas", rows}, {"mean", mean}}) << "\n";
        return kExitOk;
    }
    Table t;
    t.header.push_back("condition");
    for (const auto & mf : d.model_families) {
        t.header.push_back(mf);
    }
    for (auto tr : analysis::kTreatments) {
        std::vector<std::string> row{std::string(analysis::to_string(tr))};
        for (const auto & mf : d.model_families) {
            row.push_back(fixed(d.delta.at(tr).at(mf)));
        }
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> mean{"mean"};
    for (const auto & mf : d.model_families) {
        mean.push_back(fixed(d.family_mean(mf)));
    }
    t.rows.push_back(std::move(mean));
    write_table(c.out, t, c.g.csv);
    return kExitOk;
}

struct MatrixArgs {
    std::vector<std::string> records;
    std::string              model;
};

int stats_matrix(const Context & c, const MatrixArgs & a) {
    const auto m = analysis::format_agreement_matrix(read_all(a.records), a.model);
    if (c.g.json) {
        ordered_json rho = ordered_json::array();
        for (const auto & row : m.rho) {
            ordered_json r = ordered_json::array();
            for (double x : row) {
                r.push_back(number_or_null(x));
            }
            rho.push_back(r);
        }
        c.out << dump(ordered_json{{"model", a.model}, {"formats", m.formats}, {"spearman", rho}, {"shared", m.shared}})
              << "\n";
        return kExitOk;
    }
    Table t;
    t.header.push_back("format");
    t.header.insert(t.header.end(), m.formats.begin(), m.formats.end());
    for (size_t i = 0; i < m.formats.size(); ++i) {
        std::vector<std::string> row{m.formats[i]};
        for (double x : m.rho[i]) {
            row.push_back(fixed(x, 2));
        }
        t.rows.push_back(std::move(row));
    }
    write_table(c.out, t, c.g.csv);
    return kExitOk;
}

struct ChoicesArgs {
    std::vector<std::string> records;
    std::string              accuracy;  // CSV benchmark,arm,accuracy
};

std::vector<analysis::ChoiceRow> read_accuracy_csv(const fs::path & path) {
    const auto                       recs = harness::parse_csv(read_file(path));
    std::vector<analysis::ChoiceRow> rows;
    for (size_t i = 1; i < recs.size(); ++i) {
        const auto & f = recs[i].fields;
        if (f.size() == 1 && f[0].empty()) {
            continue;
        }
        const std::string where = path.string() + " line " + std::to_string(recs[i].line);
        if (f.size() != 3) {
            throw ValidationError(where + ": expected benchmark,arm,accuracy");
        }
        double acc = 0;
        try {
            size_t used = 0;
            acc         = std::stod(f[2], &used);
            if (used != f[2].size()) {
                throw std::invalid_argument(f[2]);
            }
        } catch (const std::exception &) {
            throw ValidationError(where + ": '" + f[2] + "' is not a number");
        }
        auto it = std::find_if(rows.begin(), rows.end(), [&](const auto & r) { return r.benchmark == f[0]; });
        if (it == rows.end()) {
            rows.push_back({f[0], {}});
            it = rows.end() - 1;
        }
        it->accuracy[f[1]] = acc;
    }
    return rows;
}

int stats_choices(const Context & c, const ChoicesArgs & a) {
    if (a.records.empty() == a.accuracy.empty()) {
        throw ValidationError("give either --records or --accuracy");
    }
    const auto rows = a.accuracy.empty() ? analysis::choice_accuracy(read_all(a.records))
                                         : read_accuracy_csv(a.accuracy);
    const auto t    = analysis::choice_table(rows);
    const auto & stock = t.arms.front();
    if (c.g.json) {
        ordered_json out_rows = ordered_json::array();
        for (const auto & row : t.rows) {
            ordered_json cells = ordered_json::object();
            const double base  = row.accuracy.at(stock);
            for (const auto & arm : t.arms) {
                auto it = row.accuracy.find(arm);
                if (it == row.accuracy.end()) {
                    cells[arm] = nullptr;
                    continue;
                }
                cells[arm] = {{"accuracy", it->second},
                              {"shown", analysis::ChoiceTable::shown(it->second)},
                              {"percent_change", analysis::ChoiceTable::percent_change(it->second, base)}};
            }
            out_rows.push_back({{"benchmark", row.benchmark}, {"arms", cells}});
        }
        c.out << dump(ordered_json{{"arms", t.arms}, {"rows", out_rows}}) << "\n";
        return kExitOk;
    }
    Table tab;
    tab.header.push_back("benchmark");
    for (const auto & arm : t.arms) {
        tab.header.push_back(arm);
        if (c.g.csv && arm != stock) {
            tab.header.push_back(arm + "_change");
        }
    }
    for (const auto & row : t.rows) {
        std::vector<std::string> cells{row.benchmark};
        const double             base = row.accuracy.at(stock);
        for (const auto & arm : t.arms) {
            auto it = row.accuracy.find(arm);
            if (it == row.accuracy.end()) {
                cells.emplace_back(c.g.csv ? "" : "n/a");
                if (c.g.csv && arm != stock) {
                    cells.emplace_back("");
                }
                continue;
            }
            const long shown = analysis::ChoiceTable::shown(it->second);
            if (arm == stock) {
                cells.push_back(std::to_string(shown));
                continue;
            }
            const long pc   = analysis::ChoiceTable::percent_change(it->second, base);
            std::string sgn = (pc >= 0 ? "+" : "") + std::to_string(pc) + "%";
            if (c.g.csv) {
                cells.push_back(std::to_string(shown));
                cells.push_back(sgn);
            } else {
                cells.push_back(std::to_string(shown) + " (" + sgn + ")");
            }
        }
        tab.rows.push_back(std::move(cells));
    }
    write_table(c.out, tab, c.g.csv);
    return kExitOk;
}

struct BaselineArgs {
    std::string aggregates;
    std::string benchmark;  // kind:path
    std::string scores;
    std::string method;
};

int stats_baseline(const Context & c, const BaselineArgs & a) {
    std::vector<analysis::BaselineRow> rows;
    if (!a.aggregates.empty()) {
        rows = analysis::read_baseline_aggregates(a.aggregates);
    }
    if (!a.benchmark.empty()) {
        const auto colon = a.benchmark.find(':');
        const auto kind  = colon == std::string::npos ? std::nullopt
                                                      : harness::parse_kind(a.benchmark.substr(0, colon));
        if (!kind) {
            throw ValidationError("--benchmark expects kind:path, e.g. stsb:data/stsb.tsv");
        }
        const auto items = harness::load_benchmark(a.benchmark.substr(colon + 1), *kind);
        const std::string bench(harness::to_string(*kind));
        if (a.scores.empty()) {
            rows.push_back(analysis::baseline_row(bench, "levenshtein_similarity", items,
                                                  analysis::levenshtein_baseline(items)));
            std::vector<double> dist;
            for (const auto & it : items) {
                dist.push_back(static_cast<double>(analysis::levenshtein(it.text_a, it.text_b)));
            }
            rows.push_back(analysis::baseline_row(bench, "levenshtein_distance", items, dist));
        } else {
            const auto          scores = analysis::read_score_file(a.scores);
            std::vector<double> ordered;
            for (const auto & it : items) {
                auto s = scores.find(it.id);
                if (s == scores.end()) {
                    throw ValidationError("score file has no entry for item '" + it.id + "'");
                }
                ordered.push_back(s->second);
            }
            rows.push_back(analysis::baseline_row(bench, a.method.empty() ? "scores" : a.method, items, ordered));
        }
    }
    if (rows.empty()) {
        throw ValidationError("give --aggregates and/or --benchmark");
    }
    const auto means = analysis::baseline_means(rows);
    if (c.g.json) {
        ordered_json out_rows = ordered_json::array();
        for (const auto & r : rows) {
            out_rows.push_back(
                {{"benchmark", r.benchmark}, {"method", r.method}, {"corr", r.corr}, {"mse", r.mse}, {"n", r.n}});
        }
        ordered_json m = ordered_json::object();
        for (const auto & [method, v] : means) {
            m[method] = v;
        }
        c.out << dump(ordered_json{{"rows", out_rows}, {"mean_corr", m}}) << "\n";
        return kExitOk;
    }
    // Wide layout: one row per benchmark, corr and MSE per method.
    std::vector<std::string> benches;
    for (const auto & r : rows) {
        if (std::find(benches.begin(), benches.end(), r.benchmark) == benches.end()) {
            benches.push_back(r.benchmark);
        }
    }
    Table t;
    t.header.push_back("benchmark");
    for (const auto & [method, _] : means) {
        t.header.push_back(method + " corr");
        t.header.push_back(method + " mse");
    }
    for (const auto & b : benches) {
        std::vector<std::string> row{b};
        for (const auto & [method, _] : means) {
            auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const auto & r) { return r.benchmark == b && r.method == method; });
            row.push_back(it == rows.end() ? "n/a" : fixed(it->corr));
            row.push_back(it == rows.end() ? "n/a" : fixed(it->mse, 0));
        }
        t.rows.push_back(std::move(row));
    }
    std::vector<std::string> mean{"mean"};
    for (const auto & [_, v] : means) {
        mean.push_back(fixed(v));
        mean.emplace_back(c.g.csv ? "" : "-");
    }
    t.rows.push_back(std::move(mean));
    write_table(c.out, t, c.g.csv);
    return kExitOk;
}

// tokens --------------------------------------------------------------------

struct PairsArgs {
    std::string vocab;
    bool        list = false;
};

int tokens_pairs(const Context & c, const PairsArgs & a) {
    const auto   v     = vocab::load_vocab(a.vocab);
    const auto   pairs = vocab::find_lw_pairs(v);
    const double rate  = vocab::pair_participation_rate(v, pairs);
    if (c.g.json) {
        ordered_json list = ordered_json::array();
        for (const auto & p : pairs) {
            list.push_back({{"lw_id", p.lw_id}, {"bare_id", p.bare_id}, {"bare", v.bytes(p.bare_id)}});
        }
        c.out << dump(ordered_json{{"vocab_size", v.size()},
                              {"pairs", pairs.size()},
                              {"participation_rate", rate},
                              {"list", list}})
              << "\n";
        return kExitOk;
    }
    if (a.list) {
        Table t{{"lw_id", "bare_id", "bare"}, {}};
        for (const auto & p : pairs) {
            t.rows.push_back({std::to_string(p.lw_id), std::to_string(p.bare_id), printable(v.bytes(p.bare_id))});
        }
        write_table(c.out, t, c.g.csv);
    } else {
        Table t{{"vocab_size", "pairs", "participation_rate"},
                {{std::to_string(v.size()), std::to_string(pairs.size()), fixed(rate, 4)}}};
        write_table(c.out, t, c.g.csv);
    }
    return kExitOk;
}

struct PrevalenceArgs {
    std::string vocab;
    std::string corpus;
    size_t      block_mb = 16;
};

int tokens_prevalence(const Context & c, const PrevalenceArgs & a) {
    const auto    v     = vocab::load_vocab(a.vocab);
    const auto    pairs = vocab::find_lw_pairs(v);
    std::ifstream in(a.corpus, std::ios::binary);
    if (!in) {
        throw IoError("cannot open corpus " + a.corpus);
    }
    if (a.block_mb == 0) {
        throw ValidationError("--block-mb must be positive");
    }
    const auto r = analysis::corpus_prevalence(v, pairs, in, a.block_mb << 20);
    if (c.g.json) {
        c.out << dump(ordered_json{{"pairs", pairs.size()},
                              {"lw_count", r.lw_count},
                              {"bare_count", r.bare_count},
                              {"ratio", optional_json(r.ratio)},
                              {"pair_mean_ratio", optional_json(r.pair_mean_ratio)},
                              {"pairs_with_bare", r.pairs_with_bare},
                              {"total_tokens", r.total_tokens},
                              {"total_bytes", r.total_bytes},
                              {"bytes_per_token", r.compression()}})
              << "\n";
        return kExitOk;
    }
    auto opt = [](const std::optional<double> & x) { return x ? fixed(*x) : std::string("undefined"); };
    Table t{{"lw_count", "bare_count", "ratio", "pair_mean_ratio", "total_tokens", "bytes_per_token"},
            {{std::to_string(r.lw_count), std::to_string(r.bare_count), opt(r.ratio), opt(r.pair_mean_ratio),
              std::to_string(r.total_tokens), fixed(r.compression())}}};
    write_table(c.out, t, c.g.csv);
    return kExitOk;
}

struct EmbArgs {
    std::string vocab;
    std::string embeddings;
    size_t      baseline_k = 10000;
    uint64_t    seed       = 0;
    std::string out;
};

std::vector<analysis::IdPair> as_id_pairs(const std::vector<vocab::LwPair> & pairs) {
    std::vector<analysis::IdPair> out;
    for (const auto & p : pairs) {
        out.emplace_back(p.lw_id, p.bare_id);
    }
    return out;
}

int tokens_embsim(const Context & c, const EmbArgs & a) {
    const auto v = vocab::load_vocab(a.vocab);
    const auto m = analysis::load_embeddings(a.embeddings);
    if (m.rows < v.size()) {
        throw ValidationError("embedding matrix has " + std::to_string(m.rows) + " rows for " +
                              std::to_string(v.size()) + " tokens");
    }
    const auto pairs = as_id_pairs(vocab::find_lw_pairs(v));
    const auto s     = analysis::pair_similarity_stats(m, pairs, a.baseline_k, a.seed);
    if (c.g.json) {
        c.out << dump(ordered_json{{"pairs", s.n},
                              {"excluded", s.excluded},
                              {"mean", s.mean},
                              {"std", s.std},
                              {"baseline_n", s.baseline_n},
                              {"baseline_excluded", s.baseline_excluded},
                              {"baseline_mean", s.baseline_mean},
                              {"baseline_std", s.baseline_std},
                              {"cohens_d", s.cohens_d}})
              << "\n";
        return kExitOk;
    }
    Table t{{"set", "n", "mean_cosine", "std"},
            {{"lw_pairs", std::to_string(s.n), fixed(s.mean, 4), fixed(s.std, 4)},
             {"random_pairs", std::to_string(s.baseline_n), fixed(s.baseline_mean, 4), fixed(s.baseline_std, 4)}}};
    write_table(c.out, t, c.g.csv);
    c.err << "cohen's d " << fixed(s.cohens_d, 4) << "\n";
    return kExitOk;
}

int tokens_export(const Context & c, const EmbArgs & a) {
    const auto v     = vocab::load_vocab(a.vocab);
    const auto m     = analysis::load_embeddings(a.embeddings);
    const auto pairs = vocab::find_lw_pairs(v);
    const auto rows  = analysis::export_projection_inputs(m, pairs, a.out, a.baseline_k, a.seed);
    if (c.g.json) {
        c.out << dump(ordered_json{{"path", a.out}, {"pairs", pairs.size()}, {"rows", rows}}) << "\n";
    } else {
        c.out << a.out << "\n";
    }
    c.err << rows << " rows written\n";
    return kExitOk;
}

}  // namespace

size_t default_jobs() {
    const size_t n = std::thread::hardware_concurrency();
    return std::clamp<size_t>(n == 0 ? 1 : n, 1, 16);
}

int dispatch(const std::vector<std::string> & args, std::ostream & out, std::ostream & err) {
    Globals g;
    Context ctx{g, out, err};

    CLI::App app{"Grammar-constrained decoding audit toolkit", "gcd-audit"};
    app.fallthrough();
    app.require_subcommand(1);
    app.add_flag("--json", g.json, "Print exactly one JSON document on stdout");
    app.add_flag("--csv", g.csv, "Print tables as CSV instead of markdown");
    auto * jobs_opt = app.add_option("-j,--jobs", g.jobs, "Worker threads (default: CPU count, at most 16)")
                          ->check(CLI::Range(1, 16));

    std::function<int()> action;

    auto * grammar = app.add_subcommand("grammar", "Check strings and token masks against a GBNF grammar");
    grammar->require_subcommand(1);
    GrammarCheckArgs gc;
    auto * check = grammar->add_subcommand("check", "Print 'accepted' or 'rejected' for one input");
    check->add_option("grammar", gc.file, "GBNF file")->required();
    check->add_option("-i,--input", gc.input, "Text to validate")->required();
    check->callback([&] { action = [&] { return grammar_check(ctx, gc); }; });

    GrammarMaskArgs gm;
    auto * mask = grammar->add_subcommand("mask", "List tokens allowed after a prefix");
    mask->add_option("grammar", gm.file, "GBNF file")->required();
    mask->add_option("--vocab", gm.vocab, "tokenizer.json or token list")->required();
    mask->add_option("--prefix", gm.prefix, "Text already generated");
    mask->add_flag("--serial", gm.serial, "Use the single-threaded walk");
    mask->callback([&] { action = [&] { return grammar_mask(ctx, gm); }; });

    auto * fmts = app.add_subcommand("formats", "Output-format grammars");
    fmts->require_subcommand(1);
    FormatsEmitArgs fe;
    auto * emit = fmts->add_subcommand("emit", "Write <id>.gbnf and <id>.json value maps");
    emit->add_option("-o,--out", fe.out_dir, "Output directory");
    emit->add_option("ids", fe.ids, "Format ids such as real_numeric_space (default: all 40)");
    emit->add_flag("--all", fe.all, "Emit every format");
    emit->add_option("--integer-max", fe.integer_max, "Largest integer in the integer family");
    emit->add_flag("--real-coarse", fe.real_coarse, "Reals as 0.1..1 instead of 0.00..0.99");
    emit->callback([&] { action = [&] { return formats_emit(ctx, fe); }; });

    RunArgs ra;
    auto * run = app.add_subcommand("run", "Execute or resume a benchmark run");
    run->add_option("-c,--config", ra.config, "Run config file (see docs/config.md)")->required();
    run->callback([&] {
        ra.jobs_given = jobs_opt->count() > 0;
        action        = [&] { return run_cmd(ctx, ra); };
    });

    auto * stats = app.add_subcommand("stats", "Reports over run records");
    stats->require_subcommand(1);
    CorrelateArgs ca;
    auto * corr = stats->add_subcommand("correlate", "Spearman, Pearson, MSE and failure rate per group");
    corr->add_option("records", ca.records, "JSONL run records")->required();
    corr->add_option("--by", ca.by, "Grouping fields: model, model_family, size, benchmark, format, family, "
                                    "variant, newline, space")
        ->delimiter(',');
    corr->callback([&] { action = [&] { return stats_correlate(ctx, ca); }; });

    RecordsArgs fa;
    auto * ftab = stats->add_subcommand("formats", "Mean Spearman per size, model family and format family");
    ftab->add_option("records", fa.records, "JSONL run records")->required();
    ftab->callback([&] { action = [&] { return stats_formats(ctx, fa); }; });

    RecordsArgs da;
    auto * deltas = stats->add_subcommand("deltas", "Treatment correlation deltas per model family");
    deltas->add_option("records", da.records, "JSONL run records")->required();
    deltas->callback([&] { action = [&] { return stats_deltas(ctx, da); }; });

    MatrixArgs ma;
    auto * matrix = stats->add_subcommand("matrix", "Format-by-format agreement for one model");
    matrix->add_option("records", ma.records, "JSONL run records")->required();
    matrix->add_option("--model", ma.model, "Model name as recorded")->required();
    matrix->callback([&] { action = [&] { return stats_matrix(ctx, ma); }; });

    ChoicesArgs cha;
    auto * choices = stats->add_subcommand("choices", "Multiple-choice accuracy and change versus stock");
    choices->add_option("records", cha.records, "JSONL run records");
    choices->add_option("--accuracy", cha.accuracy, "CSV benchmark,arm,accuracy instead of records");
    choices->callback([&] { action = [&] { return stats_choices(ctx, cha); }; });

    BaselineArgs ba;
    auto * baseline = stats->add_subcommand("baseline", "Baseline correlation and MSE against raw labels");
    baseline->add_option("--aggregates", ba.aggregates, "CSV benchmark,method,corr,mse[,n]");
    baseline->add_option("--benchmark", ba.benchmark, "kind:path of a benchmark file");
    baseline->add_option("--scores", ba.scores, "id<TAB>score file (default: Levenshtein)");
    baseline->add_option("--method", ba.method, "Name for the --scores column");
    baseline->callback([&] { action = [&] { return stats_baseline(ctx, ba); }; });

    auto * tokens = app.add_subcommand("tokens", "Leading-whitespace token analyses");
    tokens->require_subcommand(1);
    PairsArgs pa;
    auto * pairs = tokens->add_subcommand("pairs", "LW pairs and participation rate");
    pairs->add_option("--vocab", pa.vocab, "Vocabulary file")->required();
    pairs->add_flag("--list", pa.list, "List every pair");
    pairs->callback([&] { action = [&] { return tokens_pairs(ctx, pa); }; });

    PrevalenceArgs pra;
    auto * prev = tokens->add_subcommand("prevalence", "LW versus bare occurrences in a corpus");
    prev->add_option("--vocab", pra.vocab, "Vocabulary file")->required();
    prev->add_option("--corpus", pra.corpus, "UTF-8 text file")->required();
    prev->add_option("--block-mb", pra.block_mb, "Read block size in MiB");
    prev->callback([&] { action = [&] { return tokens_prevalence(ctx, pra); }; });

    EmbArgs ea;
    auto * embsim = tokens->add_subcommand("embsim", "Cosine similarity of LW pairs against random pairs");
    embsim->add_option("--vocab", ea.vocab, "Vocabulary file")->required();
    embsim->add_option("--embeddings", ea.embeddings, "GEMB binary or text matrix")->required();
    embsim->add_option("--baseline-k", ea.baseline_k, "Random pairs in the baseline");
    embsim->add_option("--seed", ea.seed, "Seed for the random pairs");
    embsim->callback([&] { action = [&] { return tokens_embsim(ctx, ea); }; });

    EmbArgs xa;
    xa.baseline_k = 0;
    auto * exp    = tokens->add_subcommand("export-proj", "Write pair-tagged vectors for an external projection");
    exp->add_option("--vocab", xa.vocab, "Vocabulary file")->required();
    exp->add_option("--embeddings", xa.embeddings, "GEMB binary or text matrix")->required();
    exp->add_option("-o,--out", xa.out, "CSV output path")->required();
    exp->add_option("--background-k", xa.baseline_k, "Untagged random rows to append");
    exp->add_option("--seed", xa.seed, "Seed for the background rows");
    exp->callback([&] { action = [&] { return tokens_export(ctx, xa); }; });

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError & e) {
        if (e.get_exit_code() == 0) {
            out << app.help("", CLI::AppFormatMode::All);
            return kExitOk;
        }
        err << "error: " << e.what() << "\n\n";
        // Usage of the deepest subcommand that was reached.
        const CLI::App * deepest = &app;
        while (true) {
            auto subs = deepest->get_subcommands();
            if (subs.empty()) {
                break;
            }
            deepest = subs.front();
        }
        err << deepest->help();
        return kExitValidation;
    }
    if (!action) {
        err << app.help();
        return kExitValidation;
    }

    const int saved_threads = omp_get_max_threads();
    omp_set_num_threads(static_cast<int>(g.jobs));
    int code = kExitOk;
    try {
        code = action();
    } catch (const ValidationError & e) {
        err << "error: " << e.what() << "\n";
        code = kExitValidation;
    } catch (const IoError & e) {
        err << "error: " << e.what() << "\n";
        code = kExitIo;
    } catch (const std::filesystem::filesystem_error & e) {
        err << "error: " << e.what() << "\n";
        code = kExitIo;
    } catch (const std::exception & e) {
        err << "error: " << e.what() << "\n";
        code = kExitIo;
    }
    if (code != kExitOk && g.json) {
        out << dump(ordered_json{{"error", true}, {"exit_code", code}}) << "\n";
    }
    omp_set_num_threads(saved_threads);
    return code;
}

}  // namespace gcd_audit::cli
