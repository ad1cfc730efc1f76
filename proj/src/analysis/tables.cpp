#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gcd_audit/analysis.hpp"
#include "gcd_audit/error.hpp"

namespace gcd_audit::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double spearman_or_nan(const std::vector<double> & x, const std::vector<double> & y) {
    try {
        return spearman(x, y);
    } catch (const StatsError &) {
        return kNaN;
    }
}

double pearson_or_nan(const std::vector<double> & x, const std::vector<double> & y) {
    try {
        return pearson(x, y);
    } catch (const StatsError &) {
        return kNaN;
    }
}

double mean_defined(const std::vector<double> & xs) {
    std::vector<double> kept;
    for (double x : xs) {
        if (!std::isnan(x)) {
            kept.push_back(x);
        }
    }
    return kept.empty() ? kNaN : pairwise_sum(kept) / static_cast<double>(kept.size());
}

bool is_choice(const harness::RunRecord & r) {
    return r.family == "choice";
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

double parse_double(std::string_view s, const std::string & where) {
    const std::string t(trim(s));
    try {
        size_t       used = 0;
        const double v    = std::stod(t, &used);
        if (used == t.size()) {
            return v;
        }
    } catch (const std::exception &) {
    }
    throw ValidationError(where + ": '" + t + "' is not a number");
}

}  // namespace

std::string_view to_string(GroupField f) {
    switch (f) {
        case GroupField::Model: return "model";
        case GroupField::ModelFamily: return "model_family";
        case GroupField::Size: return "model_size";
        case GroupField::Benchmark: return "benchmark";
        case GroupField::Format: return "format_id";
        case GroupField::FormatFamily: return "family";
        case GroupField::Variant: return "variant";
        case GroupField::Newline: return "with_newline";
        case GroupField::Space: return "with_space";
    }
    return "?";
}

std::optional<GroupField> parse_group_field(std::string_view s) {
    static constexpr GroupField all[] = {GroupField::Model,   GroupField::ModelFamily,  GroupField::Size,
                                         GroupField::Benchmark, GroupField::Format,     GroupField::FormatFamily,
                                         GroupField::Variant, GroupField::Newline,      GroupField::Space};
    for (GroupField f : all) {
        if (to_string(f) == s) {
            return f;
        }
    }
    if (s == "size") {
        return GroupField::Size;
    }
    if (s == "format") {
        return GroupField::Format;
    }
    return std::nullopt;
}

std::string group_value(const harness::RunRecord & r, GroupField f) {
    switch (f) {
        case GroupField::Model: return r.model;
        case GroupField::ModelFamily: return r.model_family;
        case GroupField::Size: return r.model_size;
        case GroupField::Benchmark: return r.benchmark;
        case GroupField::Format: return r.format_id;
        case GroupField::FormatFamily: return r.family;
        case GroupField::Variant: return r.variant;
        case GroupField::Newline: return r.with_newline ? "true" : "false";
        case GroupField::Space: return r.with_space ? "true" : "false";
    }
    return {};
}

std::vector<CorrelationReport> correlation_table(const std::vector<harness::RunRecord> & records,
                                                 const std::vector<GroupField> & group_by) {
    if (records.empty()) {
        throw StatsError("no records to correlate");
    }
    struct Acc {
        std::vector<double> pred;
        std::vector<double> label;
        size_t              cells = 0;
    };
    std::map<std::vector<std::string>, Acc> groups;
    for (const auto & r : records) {
        if (is_choice(r)) {
            continue;
        }
        std::vector<std::string> key;
        for (GroupField f : group_by) {
            key.push_back(group_value(r, f));
        }
        auto & a = groups[key];
        ++a.cells;
        if (r.valid && r.value_norm) {
            a.pred.push_back(*r.value_norm);
            a.label.push_back(r.human_label);
        }
    }
    if (groups.empty()) {
        throw StatsError("no scored (non-choice) records to correlate");
    }
    std::vector<CorrelationReport> out;
    for (const auto & [key, a] : groups) {
        CorrelationReport rep;
        for (size_t i = 0; i < group_by.size(); ++i) {
            rep.key.emplace_back(std::string(to_string(group_by[i])), key[i]);
        }
        rep.n            = a.pred.size();
        rep.cells        = a.cells;
        rep.failure_rate = static_cast<double>(a.cells - rep.n) / static_cast<double>(a.cells);
        rep.rho          = spearman_or_nan(a.pred, a.label);
        rep.r            = pearson_or_nan(a.pred, a.label);
        rep.mse          = rep.n == 0 ? kNaN : mse(a.pred, a.label);
        out.push_back(std::move(rep));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Format table and treatment deltas
// ---------------------------------------------------------------------------

std::vector<ConditionRho> condition_rhos(const std::vector<harness::RunRecord> & records) {
    struct Acc {
        ConditionRho        cond;
        std::vector<double> pred;
        std::vector<double> label;
    };
    std::map<std::tuple<std::string, std::string, std::string, std::string>, Acc> groups;
    for (const auto & r : records) {
        if (is_choice(r)) {
            continue;
        }
        const auto fam = formats::parse_family(r.family);
        const auto var = formats::parse_variant(r.variant);
        if (!fam || !var) {
            throw ValidationError("record " + r.cell_key() + " has unknown family/variant " + r.family + "/" +
                                  r.variant);
        }
        auto & a = groups[{r.model_family, r.model_size, r.benchmark, r.format_id}];
        a.cond   = ConditionRho{r.model_family, r.model_size, r.benchmark, *fam, *var, r.with_newline, r.with_space, 0};
        if (r.valid && r.value_norm) {
            a.pred.push_back(*r.value_norm);
            a.label.push_back(r.human_label);
        }
    }
    std::vector<ConditionRho> out;
    for (auto & [key, a] : groups) {
        const double rho = spearman_or_nan(a.pred, a.label);
        if (!std::isnan(rho)) {
            a.cond.rho = rho;
            out.push_back(a.cond);
        }
    }
    return out;
}

double FormatTable::at(const std::string & size, const std::string & model_family, formats::Family f) const {
    auto s = rho.find(size);
    if (s == rho.end()) {
        return kNaN;
    }
    auto m = s->second.find(model_family);
    if (m == s->second.end()) {
        return kNaN;
    }
    auto c = m->second.find(f);
    return c == m->second.end() ? kNaN : c->second;
}

double FormatTable::column_mean(const std::string & size, formats::Family f) const {
    std::vector<double> col;
    for (const auto & mf : model_families) {
        col.push_back(at(size, mf, f));
    }
    return mean_defined(col);
}

FormatTable format_table(const std::vector<harness::RunRecord> & records) {
    FormatTable                                                                      t;
    std::map<std::string, std::map<std::string, std::map<formats::Family, std::vector<double>>>> per_bench;
    std::set<std::string> sizes;
    std::set<std::string> families;
    for (const auto & c : condition_rhos(records)) {
        sizes.insert(c.size);
        families.insert(c.model_family);
        if (c.variant == formats::Variant::Numeric && !c.with_newline && !c.with_space) {
            per_bench[c.size][c.model_family][c.family].push_back(c.rho);
        }
    }
    t.sizes.assign(sizes.begin(), sizes.end());
    t.model_families.assign(families.begin(), families.end());
    for (const auto & [size, by_model] : per_bench) {
        for (const auto & [mf, by_family] : by_model) {
            for (const auto & [fam, rhos] : by_family) {
                t.rho[size][mf][fam] = mean_defined(rhos);
            }
        }
    }
    return t;
}

std::string_view to_string(Treatment t) {
    switch (t) {
        case Treatment::WithNewline: return "with_newline";
        case Treatment::WithSpace: return "with_space";
        case Treatment::AsWord: return "as_word";
        case Treatment::AsLarge: return "as_large";
    }
    return "?";
}

double DeltaTable::family_mean(const std::string & model_family) const {
    std::vector<double> xs;
    for (Treatment t : kTreatments) {
        auto row = delta.find(t);
        if (row != delta.end()) {
            auto it = row->second.find(model_family);
            if (it != row->second.end()) {
                xs.push_back(it->second);
            }
        }
    }
    return mean_defined(xs);
}

DeltaTable treatment_deltas(const std::vector<ConditionRho> & conditions) {
    using Key = std::tuple<std::string, std::string, std::string, int, int, bool, bool>;
    auto key_of = [](const ConditionRho & c) {
        return Key{c.model_family, c.size, c.benchmark, static_cast<int>(c.family), static_cast<int>(c.variant),
                   c.with_newline, c.with_space};
    };
    std::map<Key, double> index;
    std::set<std::string> families;
    for (const auto & c : conditions) {
        if (!index.emplace(key_of(c), c.rho).second) {
            throw StatsError("duplicate condition for " + c.model_family + "/" + c.size + "/" + c.benchmark);
        }
        families.insert(c.model_family);
    }

    DeltaTable out;
    out.model_families.assign(families.begin(), families.end());
    std::map<Treatment, std::map<std::string, std::vector<double>>> diffs;
    for (const auto & c : conditions) {
        for (Treatment t : kTreatments) {
            ConditionRho twin = c;
            switch (t) {
                case Treatment::WithNewline:
                    if (c.with_newline) continue;
                    twin.with_newline = true;
                    break;
                case Treatment::WithSpace:
                    if (c.with_space) continue;
                    twin.with_space = true;
                    break;
                case Treatment::AsWord:
                    if (c.variant != formats::Variant::Numeric) continue;
                    twin.variant = formats::Variant::Word;
                    break;
                case Treatment::AsLarge:
                    if (c.size != "small") continue;
                    twin.size = "large";
                    break;
            }
            auto it = index.find(key_of(twin));
            if (it != index.end()) {
                diffs[t][c.model_family].push_back(it->second - c.rho);
            }
        }
    }
    for (Treatment t : kTreatments) {
        for (const auto & mf : out.model_families) {
            const auto & d = diffs[t][mf];
            if (d.empty()) {
                throw StatsError("no matched " + std::string(to_string(t)) + " arms for model family '" + mf + "'");
            }
            out.delta[t][mf] = pairwise_sum(d) / static_cast<double>(d.size());
            out.pairs[t][mf] = d.size();
        }
    }
    return out;
}

DeltaTable treatment_deltas(const std::vector<harness::RunRecord> & records) {
    return treatment_deltas(condition_rhos(records));
}

// ---------------------------------------------------------------------------
// Agreement matrix
// ---------------------------------------------------------------------------

AgreementMatrix format_agreement_matrix(const std::vector<harness::RunRecord> & records, const std::string & model) {
    // format -> item key -> (sum, count)
    std::map<std::string, std::map<std::string, std::pair<double, size_t>>> values;
    for (const auto & r : records) {
        if (r.model != model || !r.valid || !r.value_norm) {
            continue;
        }
        auto & v = values[r.format_id][r.benchmark + "/" + r.item_id];
        v.first += *r.value_norm;
        v.second += 1;
    }
    if (values.size() < 2) {
        throw StatsError("model '" + model + "' has parsed values for fewer than two formats");
    }
    AgreementMatrix m;
    for (const auto & [f, _] : values) {
        m.formats.push_back(f);
    }
    const size_t n = m.formats.size();
    m.rho.assign(n, std::vector<double>(n, kNaN));
    m.shared.assign(n, std::vector<size_t>(n, 0));
    for (size_t i = 0; i < n; ++i) {
        const auto & vi = values[m.formats[i]];
        for (size_t j = i; j < n; ++j) {
            const auto &        vj = values[m.formats[j]];
            std::vector<double> a, b;
            for (const auto & [item, sc] : vi) {
                auto it = vj.find(item);
                if (it != vj.end()) {
                    a.push_back(sc.first / static_cast<double>(sc.second));
                    b.push_back(it->second.first / static_cast<double>(it->second.second));
                }
            }
            m.shared[i][j] = m.shared[j][i] = a.size();
            const double rho = i == j ? (a.size() >= 2 ? 1.0 : kNaN) : spearman_or_nan(a, b);
            m.rho[i][j] = m.rho[j][i] = rho;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Multiple choice
// ---------------------------------------------------------------------------

long ChoiceTable::shown(double accuracy) {
    return std::lround(accuracy);
}

long ChoiceTable::percent_change(double accuracy, double stock) {
    const double s = static_cast<double>(shown(stock));
    if (s == 0.0) {
        throw StatsError("percent change undefined for a stock accuracy of 0");
    }
    return std::lround((static_cast<double>(shown(accuracy)) - s) / s * 100.0);
}

std::vector<ChoiceRow> choice_accuracy(const std::vector<harness::RunRecord> & records) {
    std::map<std::string, std::map<std::string, std::pair<size_t, size_t>>> counts;  // correct, total
    std::vector<std::string>                                                 order;
    for (const auto & r : records) {
        if (!is_choice(r)) {
            continue;
        }
        if (!counts.count(r.benchmark)) {
            order.push_back(r.benchmark);
        }
        auto & c = counts[r.benchmark][r.format_id];
        c.second += 1;
        if (r.valid && r.parsed_value && *r.parsed_value == r.human_label) {
            c.first += 1;
        }
    }
    std::vector<ChoiceRow> rows;
    for (const auto & b : order) {
        ChoiceRow row;
        row.benchmark = b;
        for (const auto & [arm, c] : counts[b]) {
            row.accuracy[arm] = 100.0 * static_cast<double>(c.first) / static_cast<double>(c.second);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

ChoiceTable choice_table(std::vector<ChoiceRow> rows, const std::string & stock_arm) {
    ChoiceTable t;
    std::set<std::string> seen;
    for (const auto & row : rows) {
        if (!row.accuracy.count(stock_arm)) {
            throw StatsError("benchmark '" + row.benchmark + "' has no " + stock_arm + " column");
        }
        for (const auto & [arm, _] : row.accuracy) {
            seen.insert(arm);
        }
    }
    t.arms.push_back(stock_arm);
    for (const auto & arm : formats::standard_choice_arms()) {
        const auto id = arm.id();
        if (id != stock_arm && seen.count(id)) {
            t.arms.push_back(id);
        }
    }
    for (const auto & arm : seen) {
        if (std::find(t.arms.begin(), t.arms.end(), arm) == t.arms.end()) {
            t.arms.push_back(arm);
        }
    }
    if (rows.empty()) {
        return t;
    }
    ChoiceRow mean;
    mean.benchmark = "mean";
    for (const auto & arm : t.arms) {
        std::vector<double> shown;
        for (const auto & row : rows) {
            auto it = row.accuracy.find(arm);
            if (it != row.accuracy.end()) {
                shown.push_back(static_cast<double>(ChoiceTable::shown(it->second)));
            }
        }
        mean.accuracy[arm] = pairwise_sum(shown) / static_cast<double>(shown.size());
    }
    t.rows = std::move(rows);
    t.rows.push_back(std::move(mean));
    return t;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

BaselineRow baseline_row(const std::string & benchmark, const std::string & method,
                         const std::vector<harness::BenchmarkItem> & items, const std::vector<double> & scores) {
    if (items.size() != scores.size()) {
        throw StatsError("baseline " + method + " on " + benchmark + ": " + std::to_string(scores.size()) +
                         " scores for " + std::to_string(items.size()) + " items");
    }
    std::vector<double> labels;
    for (const auto & it : items) {
        labels.push_back(it.raw_label);
    }
    BaselineRow row;
    row.benchmark = benchmark;
    row.method    = method;
    row.corr      = pearson(scores, labels);
    row.mse       = mse(scores, labels);
    row.n         = items.size();
    return row;
}

std::map<std::string, double> read_score_file(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open score file " + path.string());
    }
    std::map<std::string, double> out;
    std::string                   line;
    size_t                        line_no = 0;
    bool                          first   = true;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const bool header_slot = first;
        first                  = false;
        const size_t sep = t.find_last_of("\t,");
        const std::string where = path.string() + " line " + std::to_string(line_no);
        if (sep == std::string_view::npos) {
            throw ValidationError(where + ": expected 'item_id<TAB>score'");
        }
        const std::string id(trim(t.substr(0, sep)));
        if (header_slot && trim(t.substr(sep + 1)) == "score") {
            continue;
        }
        if (!out.emplace(id, parse_double(t.substr(sep + 1), where)).second) {
            throw ValidationError(where + ": duplicate item id '" + id + "'");
        }
    }
    return out;
}

std::vector<BaselineRow> read_baseline_aggregates(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open baseline aggregates " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto               records = harness::parse_csv(ss.str());
    std::vector<BaselineRow> rows;
    for (size_t i = 1; i < records.size(); ++i) {
        const auto &      f     = records[i].fields;
        const std::string where = path.string() + " line " + std::to_string(records[i].line);
        if (f.size() != 4 && f.size() != 5) {
            throw ValidationError(where + ": expected benchmark,method,corr,mse[,n]");
        }
        BaselineRow row;
        row.benchmark = f[0];
        row.method    = f[1];
        row.corr      = parse_double(f[2], where);
        row.mse       = parse_double(f[3], where);
        row.n         = f.size() == 5 ? static_cast<size_t>(parse_double(f[4], where)) : 0;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::pair<std::string, double>> baseline_means(const std::vector<BaselineRow> & rows) {
    std::vector<std::string>                   order;
    std::map<std::string, std::vector<double>> by_method;
    for (const auto & r : rows) {
        if (!by_method.count(r.method)) {
            order.push_back(r.method);
        }
        by_method[r.method].push_back(r.corr);
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto & m : order) {
        const auto & xs = by_method[m];
        out.emplace_back(m, pairwise_sum(xs) / static_cast<double>(xs.size()));
    }
    return out;
}

}  // namespace gcd_audit::analysis
