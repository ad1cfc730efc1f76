#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "gcd_audit/error.hpp"
#include "gcd_audit/harness.hpp"

namespace gcd_audit::harness {

namespace {

uint64_t splitmix64(uint64_t & state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z          = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z          = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit(uint64_t & state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

uint64_t cell_stream(const std::string & item_id, const std::string & spec_id, uint64_t seed) {
    uint64_t s = seed;
    return fnv1a64(item_id + '\x1f' + spec_id) ^ splitmix64(s);
}

struct Endpoint {
    std::string scheme_host_port;
    std::string path;
};

Endpoint split_endpoint(const std::string & url) {
    const size_t scheme = url.find("://");
    if (scheme == std::string::npos || url.substr(0, scheme) != "http") {
        throw ValidationError("endpoint must be an http:// URL, got '" + url + "'");
    }
    const size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) {
        return {url, "/completion"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    static const char * digits = "0123456789abcdef";
    std::string         out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

std::string mock_complete(const BenchmarkItem & item, const formats::FormatSpec & spec, const MockKnobs & knobs) {
    uint64_t state = cell_stream(item.id, spec.id(), knobs.seed);
    const double u_invalid = unit(state);
    const double u1        = unit(state);
    const double u2        = unit(state);
    if (u_invalid < knobs.invalid_rate) {
        return "?";
    }

    double z = 0.0;
    if (knobs.target_rho == 0.0) {
        z = u1;
    } else {
        const double base = knobs.target_rho > 0 ? item.label : 1.0 - item.label;
        const double a    = std::min(1.0, std::abs(knobs.target_rho));
        z                 = base;
        if (a < 1.0) {
            // Spearman rho -> Pearson r for a bivariate normal, then the noise
            // scale giving that r against a uniform label (sd 1/sqrt(12)).
            const double r     = 2.0 * std::sin(std::numbers::pi * a / 6.0);
            const double sigma = std::sqrt(1.0 / (r * r) - 1.0) / std::sqrt(12.0);
            const double eps   = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
            z += sigma * eps;
        }
    }

    size_t best      = 0;
    double best_dist = INFINITY;
    for (size_t i = 0; i < spec.value_map.size(); ++i) {
        const double d = std::abs(formats::normalize(spec, spec.value_map[i].second) - z);
        if (d < best_dist) {
            best_dist = d;
            best      = i;
        }
    }
    return spec.emitted(spec.value_map[best].first);
}

std::string mock_choose(const BenchmarkItem & item, const formats::ChoiceFormat & cf, const MockKnobs & knobs) {
    uint64_t state = cell_stream(item.id, cf.id(), knobs.seed);
    const double u_invalid = unit(state);
    const double u         = unit(state);
    if (u_invalid < knobs.invalid_rate) {
        return "?";
    }
    int pick = item.gold;
    if (u >= knobs.accuracy && cf.n > 1) {
        pick = static_cast<int>(splitmix64(state) % static_cast<uint64_t>(cf.n - 1));
        if (pick >= item.gold) {
            ++pick;
        }
    }
    return cf.emitted(cf.surfaces[static_cast<size_t>(pick)]);
}

std::string MockBackend::complete(const Request & request) {
    if (request.item == nullptr) {
        throw BackendError("mock backend needs the benchmark item");
    }
    if (request.spec != nullptr) {
        return mock_complete(*request.item, *request.spec, knobs_);
    }
    if (request.choice != nullptr) {
        return mock_choose(*request.item, *request.choice, knobs_);
    }
    throw BackendError("mock backend needs a format");
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

struct HttpBackend::Impl {
    HttpOptions options;
    Endpoint    endpoint;
};

HttpOptions http_options_from_env(HttpOptions base) {
    if (const char * e = std::getenv("GCD_AUDIT_ENDPOINT"); e != nullptr && *e != '\0') {
        base.endpoint = e;
    }
    if (const char * t = std::getenv("GCD_AUDIT_TOKEN"); t != nullptr && *t != '\0') {
        base.auth_token = t;
    }
    return base;
}

HttpBackend::HttpBackend(HttpOptions options) : impl_(std::make_unique<Impl>()) {
    if (options.attempts < 1) {
        throw ValidationError("HTTP attempts must be at least 1");
    }
    impl_->endpoint = split_endpoint(options.endpoint);
    impl_->options  = std::move(options);
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::request_body(const Request & request) {
    nlohmann::ordered_json j;
    j["prompt"]      = request.prompt;
    j["grammar"]     = request.grammar;
    j["temperature"] = request.params.temperature;
    j["top_p"]       = request.params.top_p;
    j["n_predict"]   = request.params.n_predict;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string HttpBackend::complete(const Request & request) {
    const auto &      o    = impl_->options;
    const std::string body = request_body(request);
    httplib::Headers  headers;
    if (!o.auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + o.auth_token);
    }

    std::string last_error;
    for (int attempt = 0; attempt < o.attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<int64_t>(o.backoff_ms) << (attempt - 1)));
        }
        httplib::Client client(impl_->endpoint.scheme_host_port);
        client.set_connection_timeout(o.timeout_s, 0);
        client.set_read_timeout(o.timeout_s, 0);
        client.set_write_timeout(o.timeout_s, 0);
        auto res = client.Post(impl_->endpoint.path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw BackendError(o.endpoint + " answered HTTP " + std::to_string(res->status));
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception &) {
            throw BackendError(o.endpoint + " returned a body that is not JSON");
        }
        if (!j.is_object() || !j.contains("content") || !j["content"].is_string()) {
            throw BackendError(o.endpoint + " response has no string 'content' field");
        }
        return j["content"].get<std::string>();
    }
    throw BackendError(o.endpoint + " failed after " + std::to_string(o.attempts) + " attempts (" + last_error + ")");
}

std::unique_ptr<Backend> make_backend(const RunConfig & config) {
    if (config.backend == "mock") {
        return std::make_unique<MockBackend>(config.mock);
    }
    if (config.backend == "http") {
        return std::make_unique<HttpBackend>(http_options_from_env(config.http));
    }
    throw ValidationError("unknown backend '" + config.backend + "'");
}

}  // namespace gcd_audit::harness
