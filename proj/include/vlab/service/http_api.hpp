#pragma once

#include "vlab/service/service.hpp"

#include <map>
#include <memory>
#include <string>

namespace vlab::service {

struct HttpRequest {
    std::string method;
    /// Path without query string, e.g. "/api/v1/runs/run-00000003".
    std::string path;
    std::map<std::string, std::string> query;
    /// Raw Authorization header value.
    std::string authorization;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Transport-free request dispatcher for the /api/v1 surface. Errors come
/// back as {"error": {"status", "code", "message", "violations"}}.
class ApiRouter {
public:
    explicit ApiRouter(LabService& service) : svc_(service) {}
    HttpResponse handle(const HttpRequest& request) const;

private:
    LabService& svc_;
};

/// Blocking HTTP server around ApiRouter.
class HttpServer {
public:
    explicit HttpServer(LabService& service);
    ~HttpServer();

    /// Port 0 picks a free port. Returns the bound port or throws.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace vlab::service
