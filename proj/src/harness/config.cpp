#include <charconv>
#include <fstream>
#include <sstream>

#include "gcd_audit/error.hpp"
#include "gcd_audit/harness.hpp"

namespace gcd_audit::harness {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::string unescape(std::string_view s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            switch (s[++i]) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case '\\': out.push_back('\\'); break;
                default:
                    out.push_back('\\');
                    out.push_back(s[i]);
            }
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    size_t                   start = 0;
    while (start <= s.size()) {
        size_t end = s.find(',', start);
        if (end == std::string_view::npos) {
            end = s.size();
        }
        auto item = trim(s.substr(start, end - start));
        if (!item.empty()) {
            out.emplace_back(item);
        }
        start = end + 1;
    }
    return out;
}

class Reader {
  public:
    Reader(size_t line, std::string key, std::string_view value) : line_(line), key_(std::move(key)), value_(value) {}

    [[noreturn]] void fail(const std::string & why) const {
        throw ValidationError("config line " + std::to_string(line_) + " (" + key_ + "): " + why);
    }

    template <typename T>
    T number() const {
        T v{};
        auto [ptr, ec] = std::from_chars(value_.data(), value_.data() + value_.size(), v);
        if (ec != std::errc() || ptr != value_.data() + value_.size() || value_.empty()) {
            fail("'" + std::string(value_) + "' is not a valid number");
        }
        return v;
    }

    bool boolean() const {
        if (value_ == "true" || value_ == "1" || value_ == "yes") {
            return true;
        }
        if (value_ == "false" || value_ == "0" || value_ == "no") {
            return false;
        }
        fail("expected true or false");
    }

    std::string text() const { return std::string(value_); }

  private:
    size_t           line_;
    std::string      key_;
    std::string_view value_;
};

std::filesystem::path resolve(const std::filesystem::path & base, const std::string & p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path & base_dir) {
    RunConfig config;
    size_t    line_no = 0;
    size_t    start   = 0;
    while (start < text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        start                 = end + 1;
        ++line_no;
        if (const size_t hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const Reader      r(line_no, key, trim(line.substr(eq + 1)));

        if (key == "run_id") {
            config.run_id = r.text();
        } else if (key == "model") {
            config.model = r.text();
        } else if (key == "model_family") {
            config.model_family = r.text();
        } else if (key == "model_size") {
            config.model_size = r.text();
        } else if (key == "benchmark") {
            const std::string v     = r.text();
            const size_t      colon = v.find(':');
            if (colon == std::string::npos) {
                r.fail("expected kind:path");
            }
            auto kind = parse_kind(v.substr(0, colon));
            if (!kind) {
                r.fail("unknown benchmark kind '" + v.substr(0, colon) + "'");
            }
            config.benchmarks.push_back({*kind, resolve(base_dir, v.substr(colon + 1))});
        } else if (key == "sample_size") {
            config.sample_size = r.number<size_t>();
        } else if (key == "seed") {
            config.seed = r.number<uint64_t>();
        } else if (key == "formats") {
            config.formats = split_list(r.text());
        } else if (key == "choice_formats") {
            config.choice_formats = split_list(r.text());
        } else if (key == "integer_max") {
            config.format_options.integer_max = r.number<int>();
        } else if (key == "real_coarse") {
            config.format_options.real_coarse = r.boolean();
        } else if (key == "backend") {
            config.backend = r.text();
        } else if (key == "endpoint") {
            config.http.endpoint = r.text();
        } else if (key == "http_attempts") {
            config.http.attempts = r.number<int>();
        } else if (key == "http_backoff_ms") {
            config.http.backoff_ms = r.number<int>();
        } else if (key == "http_timeout_s") {
            config.http.timeout_s = r.number<int>();
        } else if (key == "mock_target_rho") {
            config.mock.target_rho = r.number<double>();
        } else if (key == "mock_seed") {
            config.mock.seed = r.number<uint64_t>();
        } else if (key == "mock_invalid_rate") {
            config.mock.invalid_rate = r.number<double>();
        } else if (key == "mock_accuracy") {
            config.mock.accuracy = r.number<double>();
        } else if (key == "temperature") {
            config.decode.temperature = r.number<double>();
        } else if (key == "top_p") {
            config.decode.top_p = r.number<double>();
        } else if (key == "context_length") {
            config.context_length = r.number<int>();
        } else if (key == "max_tokens") {
            config.max_tokens = r.number<int>();
        } else if (key == "vocab") {
            config.vocab = resolve(base_dir, r.text());
        } else if (key == "repeats") {
            config.repeats = r.number<int>();
        } else if (key == "jobs") {
            config.jobs = r.number<size_t>();
        } else if (key == "output") {
            config.output = resolve(base_dir, r.text());
        } else if (key == "prompt_prefix") {
            config.wrap.prefix = unescape(r.text());
        } else if (key == "prompt_suffix") {
            config.wrap.suffix = unescape(r.text());
        } else if (key == "skip_bad") {
            config.skip_bad = r.boolean();
        } else if (key == "record_timing") {
            config.record_timing = r.boolean();
        } else {
            r.fail("unknown key");
        }
    }
    return config;
}

RunConfig load_config(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

void validate_config(const RunConfig & c) {
    if (c.benchmarks.empty()) {
        throw ValidationError("config lists no benchmark");
    }
    if (c.output.empty()) {
        throw ValidationError("config has no output path");
    }
    if (c.run_id.empty() || c.run_id.find('/') != std::string::npos) {
        throw ValidationError("run_id must be non-empty and contain no '/'");
    }
    if (c.repeats < 1) {
        throw ValidationError("repeats must be at least 1");
    }
    if (c.jobs > 16) {
        throw ValidationError("jobs must be at most 16");
    }
    if (c.max_tokens < 0 || c.context_length < 1) {
        throw ValidationError("max_tokens must be >= 0 and context_length >= 1");
    }
    if (c.backend != "mock" && c.backend != "http") {
        throw ValidationError("backend must be 'mock' or 'http'");
    }
    if (c.mock.target_rho < -1.0 || c.mock.target_rho > 1.0) {
        throw ValidationError("mock_target_rho must be in [-1, 1]");
    }
    for (const auto & id : c.formats) {
        if (id != "all") {
            formats::parse_format_id(id, c.format_options);
        }
    }
    for (const auto & id : c.choice_formats) {
        if (id != "all") {
            formats::parse_choice_id(id);
        }
    }
}

}  // namespace gcd_audit::harness
