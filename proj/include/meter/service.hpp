#pragma once

#include "meter/error.hpp"
#include "meter/registry.hpp"
#include "meter/store.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace meter {

struct ServiceConfig {
    std::string bind = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> store;
    std::size_t snapshot_every = 1000;
    std::vector<Principal> principals;
};

/// "name:role:token" entries separated by commas.
std::vector<Principal> parse_principals(std::string_view text);

/// Reads the JSON config file (when given), then applies METER_BIND,
/// METER_PORT, METER_STORE and METER_PRINCIPALS from `env`.
ServiceConfig load_config(const std::optional<std::filesystem::path>& file,
                          const std::function<std::optional<std::string>(const char*)>& env);

std::optional<std::string> process_env(const char* name);

struct ApiRequest {
    std::string method;
    std::string path;
    std::string body;
    std::map<std::string, std::string> headers;  // lowercase names
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

int http_status(const Error& error);
nlohmann::json error_body(const Error& error);

/// Request routing and payload handling, independent of the socket layer.
class Api {
public:
    explicit Api(Workspace& workspace);

    ApiResponse handle(const ApiRequest& request);

private:
    Workspace& workspace_;
};

/// HTTP front end on a background thread.
class Server {
public:
    Server(Workspace& workspace, std::string bind, int port);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    int port() const { return port_; }
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace meter
