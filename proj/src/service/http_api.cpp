#include "vlab/service/http_api.hpp"

#include <httplib.h>

#include <string_view>
#include <vector>

namespace vlab::service {

using nlohmann::json;

namespace {

constexpr std::string_view prefix = "/api/v1";

HttpResponse json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& code, const std::string& message,
                            const json& violations = json::array())
{
    return json_response(status, {{"error",
                                   {{"status", status},
                                    {"code", code},
                                    {"message", message},
                                    {"violations", violations}}}});
}

std::vector<std::string> split_path(std::string_view p)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < p.size()) {
        const auto j = p.find('/', i);
        const auto end = j == std::string_view::npos ? p.size() : j;
        if (end > i)
            out.emplace_back(p.substr(i, end - i));
        i = end + 1;
    }
    return out;
}

json parse_body(const std::string& body, bool optional)
{
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) {
        if (optional)
            return json::object();
        throw ApiError(422, "invalid_json", "request body is empty",
                       json::array({{{"reason", "invalid_json"}, {"message", "request body is empty"}}}));
    }
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw ApiError(422, "invalid_json", e.what(),
                       json::array({{{"reason", "invalid_json"}, {"message", e.what()}}}));
    }
}

std::string bearer(const std::string& header)
{
    constexpr std::string_view scheme = "Bearer ";
    if (header.size() > scheme.size() && header.compare(0, scheme.size(), scheme) == 0)
        return header.substr(scheme.size());
    return {};
}

std::string query_or_empty(const HttpRequest& r, const std::string& key)
{
    const auto it = r.query.find(key);
    return it == r.query.end() ? std::string() : it->second;
}

} // namespace

HttpResponse ApiRouter::handle(const HttpRequest& req) const
{
    try {
        std::string_view path = req.path;
        if (path == "/health" || path == "/api/v1/health") {
            if (req.method != "GET")
                return error_response(405, "method_not_allowed", "use GET");
            return json_response(200, {{"status", "ok"}, {"tier", to_string(svc_.tier())}});
        }
        if (path.substr(0, prefix.size()) != prefix || (path.size() > prefix.size() && path[prefix.size()] != '/'))
            return error_response(404, "no_route", "no such endpoint");
        const auto seg = split_path(path.substr(prefix.size()));

        // "*" in a pattern binds one path segment
        bool path_known = false;
        auto route = [&](const char* method, std::initializer_list<const char*> pattern, std::vector<std::string>& args) {
            if (seg.size() != pattern.size())
                return false;
            std::vector<std::string> bound;
            std::size_t i = 0;
            for (const char* p : pattern) {
                if (std::string_view(p) == "*")
                    bound.push_back(seg[i]);
                else if (seg[i] != p)
                    return false;
                ++i;
            }
            path_known = true;
            if (req.method != method)
                return false;
            args = std::move(bound);
            return true;
        };
        std::vector<std::string> a;

        if (route("POST", {"session"}, a)) {
            const auto body = parse_body(req.body, false);
            if (!body.is_object() || !body.contains("login") || !body.contains("password") ||
                !body["login"].is_string() || !body["password"].is_string())
                return error_response(422, "invalid_payload", "login and password are required");
            const auto res = svc_.login(body["login"].get<std::string>(), body["password"].get<std::string>());
            return json_response(200, {{"token", res.token}, {"expires_ms", res.expires_ms},
                                       {"user", to_json(*res.user, false)}});
        }

        // Everything below needs a session; unknown routes still answer 404/405 first.
        const auto token = bearer(req.authorization);
        auto caller = [&]() -> UserPtr {
            if (token.empty())
                throw ApiError(401, "unauthenticated", "missing bearer token");
            return svc_.authenticate(token);
        };

        if (route("GET", {"session"}, a))
            return json_response(200, {{"user", to_json(*caller(), false)}});
        if (route("DELETE", {"session"}, a)) {
            caller();
            svc_.logout(token);
            return json_response(200, json::object());
        }
        if (route("GET", {"users"}, a))
            return json_response(200, svc_.list_users(*caller()));
        if (route("POST", {"users"}, a)) {
            const auto u = caller();
            return json_response(201, svc_.create_user(*u, parse_body(req.body, false)));
        }
        if (route("POST", {"users", "*", "deactivate"}, a)) {
            const auto u = caller();
            return json_response(200, svc_.deactivate_user(*u, a[0]));
        }
        if (route("POST", {"users", "*", "access"}, a)) {
            const auto u = caller();
            return json_response(200, svc_.set_access(*u, a[0], parse_body(req.body, false)));
        }
        if (route("GET", {"groups"}, a))
            return json_response(200, svc_.list_groups(*caller()));
        if (route("POST", {"groups"}, a)) {
            const auto u = caller();
            return json_response(201, svc_.create_group(*u, parse_body(req.body, false)));
        }
        if (route("POST", {"groups", "*", "teachers"}, a)) {
            const auto u = caller();
            return json_response(200, svc_.add_group_member(*u, a[0], parse_body(req.body, false), Role::Teacher));
        }
        if (route("POST", {"groups", "*", "students"}, a)) {
            const auto u = caller();
            return json_response(200, svc_.add_group_member(*u, a[0], parse_body(req.body, false), Role::Student));
        }
        if (route("GET", {"templates"}, a)) {
            caller();
            return json_response(200, svc_.list_templates());
        }
        if (route("GET", {"templates", "*"}, a)) {
            caller();
            return json_response(200, svc_.get_template(a[0]));
        }
        if (route("GET", {"assignments"}, a))
            return json_response(200, svc_.list_assignments(*caller(), query_or_empty(req, "group")));
        if (route("POST", {"assignments"}, a)) {
            const auto u = caller();
            return json_response(201, svc_.create_assignment(*u, parse_body(req.body, false)));
        }
        if (route("GET", {"runs"}, a))
            return json_response(200, svc_.list_runs(*caller()));
        if (route("POST", {"runs"}, a)) {
            const auto u = caller();
            return json_response(201, svc_.create_run(*u, parse_body(req.body, false)));
        }
        if (route("GET", {"runs", "*"}, a))
            return json_response(200, svc_.get_run(*caller(), a[0]));
        if (route("GET", {"runs", "*", "result.csv"}, a))
            return {200, "text/csv", svc_.run_csv(*caller(), a[0])};
        if (route("GET", {"submissions"}, a))
            return json_response(200, svc_.list_submissions(*caller(), query_or_empty(req, "assignment")));
        if (route("POST", {"submissions"}, a)) {
            const auto u = caller();
            return json_response(201, svc_.save_submission(*u, parse_body(req.body, false)));
        }
        if (route("GET", {"submissions", "*"}, a))
            return json_response(200, svc_.get_submission(*caller(), a[0]));
        if (route("POST", {"submissions", "*", "submit"}, a)) {
            const auto u = caller();
            parse_body(req.body, true);
            return json_response(200, svc_.submit_submission(*u, a[0]));
        }
        if (route("POST", {"submissions", "*", "review"}, a)) {
            const auto u = caller();
            return json_response(200, svc_.review_submission(*u, a[0], parse_body(req.body, false)));
        }
        if (route("GET", {"reports", "progress"}, a)) {
            const auto u = caller();
            const auto group = query_or_empty(req, "group");
            if (group.empty())
                return error_response(422, "invalid_payload", "query parameter 'group' is required");
            return json_response(200, svc_.progress_report(*u, group));
        }

        if (path_known)
            return error_response(405, "method_not_allowed", "method not allowed on this endpoint");
        return error_response(404, "no_route", "no such endpoint");
    } catch (const ApiError& e) {
        return error_response(e.status(), e.code(), e.what(), e.violations());
    } catch (const std::exception& e) {
        return error_response(500, "internal", e.what());
    }
}

// ---- httplib adapter ----------------------------------------------------------

struct HttpServer::Impl {
    ApiRouter router;
    httplib::Server server;
    explicit Impl(LabService& s) : router(s) {}
};

HttpServer::HttpServer(LabService& service) : impl_(std::make_unique<Impl>(service))
{
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        HttpRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params)
            r.query.emplace(k, v);
        r.authorization = req.get_header_value("Authorization");
        r.body = req.body;
        const auto out = impl_->router.handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    auto& s = impl_->server;
    s.Get(".*", handler);
    s.Post(".*", handler);
    s.Put(".*", handler);
    s.Patch(".*", handler);
    s.Delete(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port)
{
    auto& s = impl_->server;
    if (port == 0) {
        const int p = s.bind_to_any_port(host);
        if (p < 0)
            throw std::runtime_error("cannot bind " + host);
        return p;
    }
    if (!s.bind_to_port(host, port))
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

} // namespace vlab::service
