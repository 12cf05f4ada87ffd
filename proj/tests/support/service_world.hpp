#pragma once

// In-process service plus router, with a seeded cast: one admin, teachers
// t1 (group g1) and t2 (group g2), students s1 (g1) and s2 (g2).

#include "vlab/scheme/config.hpp"
#include "vlab/scheme/template.hpp"
#include "vlab/service/http_api.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

namespace vlab::testing {

using nlohmann::json;

struct Resp {
    int status = 0;
    json body;
    std::string text;
};

inline constexpr std::int64_t kEpochMs = 1'760'000'000'000;

class World {
public:
    std::atomic<std::int64_t> clock{kEpochMs};
    std::unique_ptr<service::LabService> svc;
    std::unique_ptr<service::ApiRouter> api;

    std::string admin, t1, t2, s1, s2;                // tokens
    std::string admin_id, t1_id, t2_id, s1_id, s2_id; // user ids
    std::string g1, g2;

    explicit World(service::ServiceOptions opt = {}, bool populate_cast = true)
    {
        if (opt.pbkdf2_iterations == service::ServiceOptions{}.pbkdf2_iterations)
            opt.pbkdf2_iterations = 1000;
        opt.clock_ms = [this] { return clock.load(); };
        svc = std::make_unique<service::LabService>(std::move(opt));
        api = std::make_unique<service::ApiRouter>(*svc);
        if (populate_cast)
            populate();
    }

    Resp call(const std::string& method, const std::string& target, const std::string& token,
              const json& body = nullptr) const
    {
        service::HttpRequest r;
        r.method = method;
        const auto q = target.find('?');
        r.path = target.substr(0, q);
        if (q != std::string::npos) {
            const auto qs = target.substr(q + 1);
            std::size_t i = 0;
            while (i <= qs.size()) {
                const auto amp = std::min(qs.find('&', i), qs.size());
                const auto kv = qs.substr(i, amp - i);
                const auto eq = kv.find('=');
                if (!kv.empty())
                    r.query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
                i = amp + 1;
            }
        }
        if (!token.empty())
            r.authorization = "Bearer " + token;
        if (!body.is_null())
            r.body = body.dump();
        const auto out = api->handle(r);
        Resp res{out.status, nullptr, out.body};
        if (out.content_type == "application/json")
            res.body = json::parse(out.body);
        return res;
    }

    Resp expect(int status, const std::string& method, const std::string& target, const std::string& token,
                const json& body = nullptr) const
    {
        auto r = call(method, target, token, body);
        if (r.status != status)
            throw std::runtime_error(method + " " + target + ": expected " + std::to_string(status) + ", got " +
                                     std::to_string(r.status) + " " + r.text);
        return r;
    }

    std::string login(const std::string& user, const std::string& password) const
    {
        return expect(200, "POST", "/api/v1/session", "", {{"login", user}, {"password", password}})
            .body["token"]
            .get<std::string>();
    }

    std::string create_user(const std::string& login, const std::string& role) const
    {
        return expect(201, "POST", "/api/v1/users", admin,
                      {{"login", login}, {"password", login + "-pw"}, {"role", role}})
            .body["id"]
            .get<std::string>();
    }

    void populate()
    {
        admin_id = svc->bootstrap_admin("admin", "admin-pw", "Admin")->id;
        admin = login("admin", "admin-pw");
        t1_id = create_user("t1", "Teacher");
        t2_id = create_user("t2", "Teacher");
        s1_id = create_user("s1", "Student");
        s2_id = create_user("s2", "Student");
        g1 = expect(201, "POST", "/api/v1/groups", admin, {{"name", "G1"}}).body["id"].get<std::string>();
        g2 = expect(201, "POST", "/api/v1/groups", admin, {{"name", "G2"}}).body["id"].get<std::string>();
        expect(200, "POST", "/api/v1/groups/" + g1 + "/teachers", admin, {{"user_id", t1_id}});
        expect(200, "POST", "/api/v1/groups/" + g2 + "/teachers", admin, {{"user_id", t2_id}});
        expect(200, "POST", "/api/v1/groups/" + g1 + "/students", admin, {{"user_id", s1_id}});
        expect(200, "POST", "/api/v1/groups/" + g2 + "/students", admin, {{"user_id", s2_id}});
        t1 = login("t1", "t1-pw");
        t2 = login("t2", "t2-pw");
        s1 = login("s1", "s1-pw");
        s2 = login("s2", "s2-pw");
    }

    std::int64_t future_due() const { return clock.load() / 1000 + 7 * 86400; }

    json default_config(const std::string& template_id) const
    {
        const auto* t = svc->find_template(template_id);
        if (!t)
            throw std::runtime_error("no template " + template_id);
        return scheme::config_to_json(scheme::default_config(*t));
    }

    std::string create_assignment(const std::string& teacher, const std::string& group,
                                  const std::string& template_id, json extra = json::object()) const
    {
        json body{{"group_id", group}, {"template_id", template_id}, {"title", "task"}, {"due", future_due()}};
        body.update(extra);
        return expect(201, "POST", "/api/v1/assignments", teacher, body).body["id"].get<std::string>();
    }

    std::string start_run(const std::string& token, const json& config) const
    {
        return expect(201, "POST", "/api/v1/runs", token, config).body["id"].get<std::string>();
    }

    std::string run_and_wait(const std::string& token, const json& config) const
    {
        const auto id = start_run(token, config);
        svc->wait_idle();
        return id;
    }
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("vlab-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace vlab::testing
