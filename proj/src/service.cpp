#include "meter/service.hpp"

#include "meter/error.hpp"
#include "meter/serialize.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace meter {

std::vector<Principal> parse_principals(std::string_view text) {
    std::vector<Principal> out;
    std::stringstream in{std::string(text)};
    std::string entry;
    while (std::getline(in, entry, ',')) {
        if (entry.empty()) {
            continue;
        }
        const auto a = entry.find(':');
        const auto b = a == std::string::npos ? std::string::npos : entry.find(':', a + 1);
        if (b == std::string::npos) {
            invalid("invalid_config", "principal entry '" + entry.substr(0, entry.find(':')) +
                                          "' must have the form name:role:token");
        }
        out.push_back({entry.substr(0, a), parse_role(entry.substr(a + 1, b - a - 1)), entry.substr(b + 1)});
    }
    return out;
}

std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr) {
        return std::nullopt;
    }
    return std::string(v);
}

ServiceConfig load_config(const std::optional<std::filesystem::path>& file,
                          const std::function<std::optional<std::string>(const char*)>& env) {
    ServiceConfig config;
    if (file) {
        std::ifstream in(*file);
        if (!in) {
            invalid("invalid_config", "cannot read config file " + file->string());
        }
        try {
            const auto j = json::parse(in);
            config.bind = j.value("bind", config.bind);
            config.port = j.value("port", config.port);
            if (j.contains("store")) {
                config.store = j["store"].get<std::string>();
            }
            config.snapshot_every = j.value("snapshot_every", config.snapshot_every);
            for (const auto& p : j.value("principals", json::array())) {
                config.principals.push_back(
                    {p.at("name").get<std::string>(), parse_role(p.at("role").get<std::string>()),
                     p.at("token").get<std::string>()});
            }
        } catch (const json::exception& e) {
            invalid("invalid_config", "config file " + file->string() + " is malformed: " + e.what());
        }
    }
    if (auto v = env("METER_BIND")) {
        config.bind = *v;
    }
    if (auto v = env("METER_PORT")) {
        try {
            config.port = std::stoi(*v);
        } catch (const std::exception&) {
            invalid("invalid_config", "METER_PORT must be an integer");
        }
    }
    if (auto v = env("METER_STORE")) {
        config.store = *v;
    }
    if (auto v = env("METER_PRINCIPALS")) {
        config.principals = parse_principals(*v);
    }
    if (config.port < 0 || config.port > 65535) {
        invalid("invalid_config", "port must lie in [0, 65535]");
    }
    return config;
}

int http_status(const Error& error) {
    switch (error.kind()) {
    case ErrorKind::validation: return 400;
    case ErrorKind::authorization: return error.code() == "unauthenticated" ? 401 : 403;
    case ErrorKind::not_found: return 404;
    case ErrorKind::state: return 409;
    case ErrorKind::conflict: return 412;
    case ErrorKind::storage: return 500;
    }
    return 500;
}

json error_body(const Error& error) {
    return {{"error", {{"code", error.code()}, {"kind", std::string(to_string(error.kind()))}, {"message", error.what()}}}};
}

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string part;
    std::stringstream in(path.substr(0, path.find('?')));
    while (std::getline(in, part, '/')) {
        if (!part.empty()) {
            parts.push_back(part);
        }
    }
    return parts;
}

json parse_body(const std::string& body) {
    if (body.empty()) {
        return json::object();
    }
    try {
        auto j = json::parse(body);
        if (!j.is_object()) {
            invalid("invalid_request", "request body must be a JSON object");
        }
        return j;
    } catch (const json::parse_error&) {
        invalid("invalid_request", "request body is not valid JSON");
    }
}

std::string string_field(const json& body, const char* name) {
    if (!body.contains(name) || !body[name].is_string()) {
        invalid("invalid_request", std::string("field '") + name + "' must be a string");
    }
    return body[name].get<std::string>();
}

template <class Out>
Out records_from(const json& body, const char* array_field, const char* value_field) {
    if (body.contains("jsonl")) {
        if (!body["jsonl"].is_string()) {
            invalid("invalid_request", "field 'jsonl' must be a string");
        }
        std::istringstream in(body["jsonl"].get<std::string>());
        if constexpr (std::is_same_v<Out, LabeledItems>) {
            return parse_label_lines(in);
        } else {
            return parse_prediction_lines(in);
        }
    }
    if (!body.contains(array_field) || !body[array_field].is_array()) {
        invalid("invalid_request", std::string("expected '") + array_field + "' array or 'jsonl' string");
    }
    Out out;
    std::size_t index = 0;
    for (const auto& item : body[array_field]) {
        ++index;
        if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains(value_field) ||
            !item[value_field].is_number_integer()) {
            invalid("invalid_upload", std::string("record ") + std::to_string(index) + ": expected {\"id\": string, \"" +
                                          value_field + "\": integer}");
        }
        out.emplace_back(item["id"].get<std::string>(), item[value_field].get<Label>());
    }
    return out;
}

Mutation mutation_from(const ApiRequest& request, const json& body) {
    Mutation m;
    if (auto it = request.headers.find("idempotency-key"); it != request.headers.end() && !it->second.empty()) {
        m.idempotency_key = it->second;
    }
    std::optional<std::string> seq;
    if (auto it = request.headers.find("if-match"); it != request.headers.end() && !it->second.empty()) {
        seq = it->second;
        if (seq->size() >= 2 && seq->front() == '"' && seq->back() == '"') {
            seq = seq->substr(1, seq->size() - 2);
        }
    }
    if (body.contains("expected_seq")) {
        if (!body["expected_seq"].is_number_unsigned()) {
            invalid("invalid_request", "field 'expected_seq' must be a nonnegative integer");
        }
        m.expected_seq = body["expected_seq"].get<std::uint64_t>();
    } else if (seq) {
        try {
            std::size_t used = 0;
            m.expected_seq = std::stoull(*seq, &used);
            if (used != seq->size()) {
                throw std::invalid_argument("trailing");
            }
        } catch (const std::exception&) {
            invalid("invalid_request", "If-Match must carry the session sequence number");
        }
    }
    return m;
}

json meter_view(const Session& s, const SignalReport& report) {
    json bands = json::array();
    for (int k = 1; k <= s.spec.signals; ++k) {
        const auto& b = s.spec.bands[static_cast<std::size_t>(k - 1)];
        bands.push_back({{"signal", k},
                         {"lower", b.lower},
                         {"upper", b.upper},
                         {"epsilon", s.spec.schedule[static_cast<std::size_t>(k - 1)]}});
    }
    const json timeline = session_view(s, Role::developer)["history"];
    return {{"session", s.id}, {"seq", s.seq},     {"mode", std::string(to_string(s.spec.mode))},
            {"bands", bands},  {"report", report}, {"timeline", timeline},
            {"required_size", s.plan.required_size}};
}

} // namespace

Api::Api(Workspace& workspace) : workspace_(workspace) {}

ApiResponse Api::handle(const ApiRequest& request) {
    try {
        const auto parts = split_path(request.path);
        const auto& method = request.method;
        if (parts.size() == 2 && parts[0] == "v1" && parts[1] == "health" && method == "GET") {
            return {200, {{"status", "ok"}, {"seq", workspace_.last_seq()}}};
        }
        if (parts.empty() || parts[0] != "v1") {
            fail(ErrorKind::not_found, "route_not_found", "no route for " + request.path);
        }
        std::string token;
        if (auto it = request.headers.find("authorization"); it != request.headers.end()) {
            const std::string prefix = "Bearer ";
            if (it->second.rfind(prefix, 0) == 0) {
                token = it->second.substr(prefix.size());
            }
        }
        const Principal who = workspace_.registry().authenticate(token);
        auto& engine = workspace_.engine();
        auto& registry = workspace_.registry();
        auto method_not_allowed = [&]() -> ApiResponse {
            return {405, {{"error", {{"code", "method_not_allowed"}, {"kind", "validation"},
                                     {"message", method + " is not supported on " + request.path}}}}};
        };

        if (parts.size() == 2 && parts[1] == "plan") {
            if (method != "POST") return method_not_allowed();
            const auto spec = spec_from_request(parse_body(request.body));
            json out = plan(spec);
            out["spec"] = spec;
            return {200, out};
        }
        if (parts.size() >= 2 && parts[1] == "datasets") {
            if (parts.size() == 2) {
                if (method != "POST") return method_not_allowed();
                const auto body = parse_body(request.body);
                const bool sealed = body.value("sealed", false);
                const std::string id = body.contains("id") ? string_field(body, "id") : std::string();
                auto items = records_from<LabeledItems>(body, "items", "label");
                const auto size = items.size();
                const auto issued = workspace_.mutate([&] {
                    return registry.register_dataset(who, std::move(items), sealed, id, workspace_.now());
                });
                return {201, {{"id", issued}, {"size", size}, {"sealed", sealed}}};
            }
            if (parts.size() == 3) {
                if (method != "GET") return method_not_allowed();
                return {200, registry.read_labels(who, parts[2])};
            }
        }
        if (parts.size() >= 2 && parts[1] == "sessions") {
            if (parts.size() == 2) {
                if (method == "GET") {
                    return {200, {{"sessions", engine.session_ids()}}};
                }
                if (method != "POST") return method_not_allowed();
                const auto body = parse_body(request.body);
                if (!body.contains("spec")) {
                    invalid("invalid_request", "field 'spec' is required");
                }
                const auto spec = spec_from_request(body["spec"]);
                const auto options = mutation_from(request, body);
                const auto report = workspace_.mutate([&] {
                    return engine.create_session(who, spec, string_field(body, "val"), string_field(body, "test"), options);
                });
                return {201, {{"session", session_view(engine.session(report.session_id), who.role)}, {"report", report}}};
            }
            const std::string& id = parts[2];
            if (parts.size() == 3) {
                if (method != "GET") return method_not_allowed();
                const auto report = engine.status(who, id);
                return {200, {{"session", session_view(engine.session(id), who.role)}, {"report", report}}};
            }
            if (parts.size() == 4) {
                const std::string& action = parts[3];
                if (action == "meter") {
                    if (method != "GET") return method_not_allowed();
                    const auto report = engine.status(who, id);
                    return {200, meter_view(engine.session(id), report)};
                }
                if (method != "POST") return method_not_allowed();
                const auto body = parse_body(request.body);
                const auto options = mutation_from(request, body);
                SignalReport report;
                if (action == "submissions") {
                    const auto predictions = records_from<Predictions>(body, "predictions", "pred");
                    report = workspace_.mutate([&] { return engine.submit(who, id, predictions, options); });
                    return {200, report};
                }
                if (action == "revert") {
                    report = workspace_.mutate([&] { return engine.revert(who, id, options); });
                    return {200, report};
                }
                if (action == "close") {
                    report = workspace_.mutate([&] { return engine.close_session(who, id, options); });
                    return {200, report};
                }
                if (action == "handoff") {
                    report = workspace_.mutate([&] { return engine.handoff_tenant(who, id, options); });
                } else if (action == "rotate") {
                    const auto test = string_field(body, "test");
                    report = workspace_.mutate([&] { return engine.rotate_test_set(who, id, test, options); });
                } else {
                    fail(ErrorKind::not_found, "route_not_found", "no route for " + request.path);
                }
                return {200, {{"session", session_view(engine.session(id), who.role)}, {"report", report}}};
            }
        }
        fail(ErrorKind::not_found, "route_not_found", "no route for " + request.path);
    } catch (const Error& e) {
        return {http_status(e), error_body(e)};
    } catch (const std::exception& e) {
        const Error wrapped(ErrorKind::storage, "internal_error", e.what());
        return {500, error_body(wrapped)};
    }
}

struct Server::Impl {
    httplib::Server http;
    Api api;

    explicit Impl(Workspace& w) : api(w) {}
};

Server::Server(Workspace& workspace, std::string bind, int port) : impl_(std::make_unique<Impl>(workspace)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        ApiRequest r;
        r.method = req.method;
        r.path = req.path;
        r.body = req.body;
        for (const auto& [name, value] : req.headers) {
            std::string lower = name;
            std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
            r.headers[lower] = value;
        }
        const auto out = impl_->api.handle(r);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    };
    const std::string pattern = R"(/.*)";
    impl_->http.Get(pattern, handler);
    impl_->http.Post(pattern, handler);
    impl_->http.Put(pattern, handler);
    impl_->http.Delete(pattern, handler);
    impl_->http.Patch(pattern, handler);
    if (port == 0) {
        port_ = impl_->http.bind_to_any_port(bind);
    } else {
        port_ = impl_->http.bind_to_port(bind, port) ? port : -1;
    }
    if (port_ < 0) {
        fail(ErrorKind::storage, "bind_failed", "cannot listen on " + bind + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
}

Server::~Server() { stop(); }

void Server::stop() {
    impl_->http.stop();
    if (thread_.joinable()) {
        thread_.join();
    }
}

void Server::wait() {
    if (thread_.joinable()) {
        thread_.join();
    }
}

} // namespace meter
