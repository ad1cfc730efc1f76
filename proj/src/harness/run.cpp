#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gcd_audit/error.hpp"
#include "gcd_audit/grammar.hpp"
#include "gcd_audit/harness.hpp"
#include "gcd_audit/vocab.hpp"

namespace gcd_audit::harness {

namespace {

using nlohmann::ordered_json;

// One spec of the grid as compiled for the run.
struct GridSpec {
    formats::FormatSpec      spec;
    grammar::CompiledGrammar grammar;
    int                      n_predict;
};

struct Cell {
    size_t bench;
    size_t item;
    size_t format;  // index into the grid or the choice arms
    int    repeat;
};

std::string iso_timestamp() {
    const auto        now = std::chrono::system_clock::now();
    const std::time_t t   = std::chrono::system_clock::to_time_t(now);
    std::tm           tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::optional<double> opt_number(const nlohmann::json & j, const char * key) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    return j[key].get<double>();
}

// Reads the completed cell keys of an existing output file and cuts off a
// trailing partial line left by an interrupted write.
std::set<std::string> completed_cells(const std::filesystem::path & path, const std::string & run_id) {
    std::set<std::string> done;
    std::error_code       ec;
    if (!std::filesystem::exists(path, ec)) {
        return done;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read existing output " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const size_t      keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
    if (keep < text.size()) {
        std::filesystem::resize_file(path, keep, ec);
        if (ec) {
            throw IoError("cannot truncate partial record in " + path.string());
        }
    }
    size_t line_no = 0;
    size_t start   = 0;
    while (start < keep) {
        const size_t end = text.find('\n', start);
        ++line_no;
        const std::string_view line(text.data() + start, end - start);
        start = end + 1;
        if (line.empty()) {
            continue;
        }
        RunRecord r;
        try {
            r = record_from_json(line);
        } catch (const ValidationError & e) {
            throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        if (r.run_id != run_id) {
            throw ValidationError(path.string() + " holds records of run '" + r.run_id + "', not '" + run_id + "'");
        }
        done.insert(r.cell_key());
    }
    return done;
}

}  // namespace

std::string RunRecord::cell_key() const {
    return benchmark + "/" + item_id + "/" + format_id + "/" + std::to_string(repeat);
}

std::string to_jsonl(const RunRecord & r) {
    ordered_json j;
    j["schema_version"] = kRecordSchemaVersion;
    j["run_id"]         = r.run_id;
    j["model"]          = r.model;
    j["model_family"]   = r.model_family;
    j["model_size"]     = r.model_size;
    j["benchmark"]      = r.benchmark;
    j["item_id"]        = r.item_id;
    j["format_id"]      = r.format_id;
    j["family"]         = r.family;
    j["variant"]        = r.variant;
    j["with_newline"]   = r.with_newline;
    j["with_space"]     = r.with_space;
    j["repeat"]         = r.repeat;
    j["prompt_hash"]    = r.prompt_hash;
    j["raw_output"]     = r.raw_output;
    j["valid"]          = r.valid;
    j["parse_failure"]  = !r.valid;
    j["parsed_value"]   = r.parsed_value ? ordered_json(*r.parsed_value) : ordered_json(nullptr);
    j["value_norm"]     = r.value_norm ? ordered_json(*r.value_norm) : ordered_json(nullptr);
    j["human_label"]    = r.human_label;
    if (r.latency_ms) {
        j["latency_ms"] = *r.latency_ms;
    }
    if (r.timestamp) {
        j["timestamp"] = *r.timestamp;
    }
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

RunRecord record_from_json(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception & e) {
        throw ValidationError(std::string("record is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != kRecordSchemaVersion) {
            throw ValidationError("unsupported record schema_version " + j["schema_version"].dump());
        }
        RunRecord r;
        r.run_id       = j.at("run_id").get<std::string>();
        r.model        = j.at("model").get<std::string>();
        r.model_family = j.at("model_family").get<std::string>();
        r.model_size   = j.at("model_size").get<std::string>();
        r.benchmark    = j.at("benchmark").get<std::string>();
        r.item_id      = j.at("item_id").get<std::string>();
        r.format_id    = j.at("format_id").get<std::string>();
        r.family       = j.at("family").get<std::string>();
        r.variant      = j.at("variant").get<std::string>();
        r.with_newline = j.at("with_newline").get<bool>();
        r.with_space   = j.at("with_space").get<bool>();
        r.repeat       = j.at("repeat").get<int>();
        r.prompt_hash  = j.at("prompt_hash").get<std::string>();
        r.raw_output   = j.at("raw_output").get<std::string>();
        r.valid        = j.at("valid").get<bool>();
        r.parsed_value = opt_number(j, "parsed_value");
        r.value_norm   = opt_number(j, "value_norm");
        r.human_label  = j.at("human_label").get<double>();
        r.latency_ms   = opt_number(j, "latency_ms");
        if (j.contains("timestamp") && j["timestamp"].is_string()) {
            r.timestamp = j["timestamp"].get<std::string>();
        }
        if (r.valid != r.parsed_value.has_value()) {
            throw ValidationError("record " + r.cell_key() + " has valid=" + (r.valid ? "true" : "false") +
                                  " but parsed_value " + (r.parsed_value ? "set" : "null"));
        }
        return r;
    } catch (const nlohmann::json::exception & e) {
        throw ValidationError(std::string("record is missing a field: ") + e.what());
    }
}

std::vector<RunRecord> read_records(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open records file " + path.string());
    }
    std::vector<RunRecord> out;
    std::string            line;
    size_t                 line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(record_from_json(line));
        } catch (const ValidationError & e) {
            throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

RunSummary execute_run(const RunConfig & config, Backend & backend,
                       const std::function<void(const RunRecord &)> & on_record) {
    validate_config(config);

    // Benchmarks, sampled.
    std::vector<std::vector<BenchmarkItem>> items;
    for (const auto & src : config.benchmarks) {
        auto all = load_benchmark(src.path, src.kind, config.skip_bad);
        items.push_back(config.sample_size == 0 ? std::move(all) : sample_items(all, config.sample_size, config.seed));
    }

    // Token budgets need a vocabulary; without one the spec's byte bound is used.
    std::optional<vocab::Vocabulary> vocab;
    if (!config.vocab.empty()) {
        vocab = vocab::load_vocab(config.vocab);
    }
    auto n_predict_for = [&](const std::string & id, int fallback, const std::function<int()> & budget) {
        if (!vocab) {
            return config.max_tokens > 0 ? config.max_tokens : fallback;
        }
        const int need = budget();
        if (config.max_tokens > 0 && config.max_tokens < need) {
            throw ValidationError("max_tokens " + std::to_string(config.max_tokens) + " is below the token budget " +
                                  std::to_string(need) + " of " + id);
        }
        return config.max_tokens > 0 ? config.max_tokens : need;
    };

    // Format grid.
    std::vector<GridSpec> grid;
    const bool            all_formats = config.formats.empty() ||
                               std::find(config.formats.begin(), config.formats.end(), "all") != config.formats.end();
    std::vector<formats::FormatSpec> specs;
    if (all_formats) {
        specs = formats::all_formats(config.format_options);
    } else {
        for (const auto & id : config.formats) {
            specs.push_back(formats::parse_format_id(id, config.format_options));
        }
    }
    for (auto & s : specs) {
        const int n = n_predict_for(s.id(), s.max_tokens, [&] { return formats::token_budget(s, *vocab); });
        auto      g = grammar::compile_gbnf(s.gbnf_text);
        grid.push_back({std::move(s), std::move(g), n});
    }

    std::vector<formats::ChoiceArm> arms;
    if (config.choice_formats.empty() ||
        std::find(config.choice_formats.begin(), config.choice_formats.end(), "all") != config.choice_formats.end()) {
        arms = formats::standard_choice_arms();
    } else {
        for (const auto & id : config.choice_formats) {
            arms.push_back(formats::parse_choice_id(id));
        }
    }

    // Choice formats depend on each item's arity; built up front so workers
    // only read them.
    std::map<std::pair<size_t, int>, std::pair<formats::ChoiceFormat, grammar::CompiledGrammar>> choice_cache;
    std::vector<Cell>                                                                            cells;
    for (size_t b = 0; b < items.size(); ++b) {
        const bool mc = config.benchmarks[b].kind == BenchmarkKind::MultipleChoice;
        for (size_t i = 0; i < items[b].size(); ++i) {
            const size_t n_formats = mc ? arms.size() : grid.size();
            for (size_t f = 0; f < n_formats; ++f) {
                if (mc) {
                    const int n   = static_cast<int>(items[b][i].choices.size());
                    const auto key = std::make_pair(f, n);
                    if (!choice_cache.count(key)) {
                        auto cf = formats::build_choice_format(arms[f].style, arms[f].treatments, n);
                        auto g  = grammar::compile_gbnf(cf.gbnf_text);
                        choice_cache.emplace(key, std::make_pair(std::move(cf), std::move(g)));
                    }
                }
                for (int r = 0; r < config.repeats; ++r) {
                    cells.push_back({b, i, f, r});
                }
            }
        }
    }

    const bool timing = config.record_timing.value_or(!backend.deterministic());

    auto make_record = [&](const Cell & c) {
        const auto &  item = items[c.bench][c.item];
        const bool    mc   = item.kind == BenchmarkKind::MultipleChoice;
        RunRecord     rec;
        rec.run_id       = config.run_id;
        rec.model        = config.model;
        rec.model_family = config.model_family;
        rec.model_size   = config.model_size;
        rec.benchmark    = std::string(to_string(config.benchmarks[c.bench].kind));
        rec.item_id      = item.id;
        rec.repeat       = c.repeat;
        Request req;
        req.item = &item;
        req.params = config.decode;
        const grammar::CompiledGrammar * g = nullptr;
        const formats::ChoiceFormat *    cf = nullptr;
        if (mc) {
            const auto & entry = choice_cache.at({c.format, static_cast<int>(item.choices.size())});
            cf                 = &entry.first;
            g                  = &entry.second;
            rec.format_id      = cf->id();
            rec.family         = "choice";
            rec.variant        = std::string(formats::to_string(cf->style));
            rec.with_newline   = cf->treatments.with_newline;
            rec.with_space     = cf->treatments.with_space;
            rec.human_label    = item.gold;
            req.prompt         = render_choice_prompt(item, *cf, config.wrap);
            req.grammar        = cf->gbnf_text;
            req.choice         = cf;
            size_t longest     = 0;
            for (const auto & s : cf->surfaces) {
                longest = std::max(longest, cf->emitted(s).size());
            }
            req.params.n_predict = config.max_tokens > 0 ? config.max_tokens : static_cast<int>(longest);
        } else {
            const auto & gs  = grid[c.format];
            g                = &gs.grammar;
            rec.format_id    = gs.spec.id();
            rec.family       = std::string(formats::to_string(gs.spec.family));
            rec.variant      = std::string(formats::to_string(gs.spec.variant));
            rec.with_newline = gs.spec.treatments.with_newline;
            rec.with_space   = gs.spec.treatments.with_space;
            rec.human_label  = item.label;
            req.prompt       = render_prompt(item, gs.spec, config.wrap);
            req.grammar      = gs.spec.gbnf_text;
            req.spec         = &gs.spec;
            req.params.n_predict = gs.n_predict;
        }
        rec.prompt_hash = hex64(fnv1a64(req.prompt + '\0' + req.grammar));

        const auto t0  = std::chrono::steady_clock::now();
        rec.raw_output = backend.complete(req);
        if (timing) {
            rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            rec.timestamp  = iso_timestamp();
        }

        rec.valid = grammar::validate_output(*g, rec.raw_output);
        if (rec.valid) {
            if (mc) {
                const int idx    = *cf->index_of(rec.raw_output);
                rec.parsed_value = idx;
                rec.value_norm   = static_cast<double>(idx) / (cf->n - 1);
            } else {
                const auto & spec = grid[c.format].spec;
                rec.parsed_value  = formats::value_of(spec, rec.raw_output);
                rec.value_norm    = formats::normalize(spec, *rec.parsed_value);
            }
        }
        return rec;
    };

    // Skip what a previous attempt already wrote.
    RunSummary summary;
    summary.cells = cells.size();
    std::error_code ec;
    if (config.output.has_parent_path()) {
        std::filesystem::create_directories(config.output.parent_path(), ec);
    }
    const auto done = completed_cells(config.output, config.run_id);
    std::vector<Cell> pending;
    for (const auto & c : cells) {
        RunRecord probe;
        const auto & item = items[c.bench][c.item];
        probe.benchmark   = std::string(to_string(config.benchmarks[c.bench].kind));
        probe.item_id     = item.id;
        probe.repeat      = c.repeat;
        probe.format_id   = item.kind == BenchmarkKind::MultipleChoice ? arms[c.format].id() : grid[c.format].spec.id();
        if (done.count(probe.cell_key())) {
            ++summary.resumed;
        } else {
            pending.push_back(c);
        }
    }

    std::ofstream out(config.output, std::ios::binary | std::ios::app);
    if (!out) {
        throw IoError("cannot open output " + config.output.string() + " for appending");
    }

    // Workers fill slots; this thread writes them in cell order.
    std::vector<std::optional<RunRecord>> slots(pending.size());
    std::mutex                            mu;
    std::condition_variable               cv;
    std::atomic<size_t>                   next{0};
    std::atomic<bool>                     stop{false};
    std::exception_ptr                    failure;

    auto worker = [&] {
        while (!stop.load()) {
            const size_t k = next.fetch_add(1);
            if (k >= pending.size()) {
                return;
            }
            try {
                RunRecord rec = make_record(pending[k]);
                std::lock_guard<std::mutex> lock(mu);
                slots[k] = std::move(rec);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) {
                    failure = std::current_exception();
                }
                stop = true;
            }
            cv.notify_all();
        }
    };

    const size_t             jobs  = config.jobs > 0 ? config.jobs
                                                         : std::clamp<size_t>(std::thread::hardware_concurrency(), 1, 16);
    const size_t             width = std::min(jobs, std::max<size_t>(pending.size(), 1));
    std::vector<std::thread> threads;
    for (size_t t = 0; t < width; ++t) {
        threads.emplace_back(worker);
    }

    auto shutdown = [&] {
        stop = true;
        cv.notify_all();
        for (auto & t : threads) {
            t.join();
        }
    };

    try {
        for (size_t k = 0; k < pending.size(); ++k) {
            std::unique_lock<std::mutex> lock(mu);
            cv.wait(lock, [&] { return slots[k].has_value() || stop.load(); });
            if (!slots[k]) {
                break;
            }
            RunRecord rec = std::move(*slots[k]);
            slots[k].reset();
            lock.unlock();

            out << to_jsonl(rec) << '\n';
            out.flush();
            if (!out) {
                throw IoError("write to " + config.output.string() + " failed");
            }
            ++summary.written;
            summary.parse_failures += rec.valid ? 0 : 1;
            if (on_record) {
                on_record(rec);
            }
        }
    } catch (...) {
        shutdown();
        throw;
    }
    shutdown();
    if (failure) {
        std::rethrow_exception(failure);
    }
    return summary;
}

}  // namespace gcd_audit::harness
