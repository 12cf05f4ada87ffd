#include "../support/service_world.hpp"
#include "labctl_app.hpp"

#include "vlab/service/http_api.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <httplib.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <thread>

extern char** environ;

using namespace vlab;
using nlohmann::json;
using vlab::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
    json err_json() const { return json::parse(err.substr(0, err.find('\n'))); }
};

Outcome cli(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = labctl::main(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

json seed(const fs::path& dir)
{
    const auto r = cli({"seed", "--data", dir.string(), "--pbkdf2-iterations", "1000"});
    REQUIRE(r.code == 0);
    return json::parse(r.out);
}

std::string password_of(const json& creds, const std::string& login)
{
    for (const auto& u : creds["users"])
        if (u["login"] == login)
            return u["password"];
    throw std::runtime_error("no " + login);
}

// An ephemeral loopback port that nothing is listening on.
int free_port()
{
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    socklen_t len = sizeof sa;
    ::bind(fd, reinterpret_cast<sockaddr*>(&sa), len);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
    ::close(fd);
    return ntohs(sa.sin_port);
}

// Server on a loopback port, running on its own thread for the test's lifetime.
class LiveServer {
public:
    explicit LiveServer(service::LabService& svc) : server_(svc)
    {
        port_ = server_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { server_.run(); });
    }
    ~LiveServer()
    {
        server_.stop();
        thread_.join();
    }
    std::string addr() const { return "127.0.0.1:" + std::to_string(port_); }

private:
    service::HttpServer server_;
    int port_;
    std::thread thread_;
};

} // namespace

TEST_CASE("run writes deterministic CSV", "[labctl][acc:cli]")
{
    TempDir dir("run");
    const auto a = dir.path() / "a.csv", b = dir.path() / "b.csv";
    REQUIRE(cli({"run", "vacuum_station", "--out", a.string()}).code == 0);
    REQUIRE(cli({"run", "vacuum_station", "--out", b.string()}).code == 0);
    const auto csv = slurp(a);
    CHECK(csv == slurp(b));
    CHECK(csv.substr(0, csv.find('\n')) == "t,fore[Pa],main[Pa]");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 302);

    // a template file and an explicit config give the same bytes
    const auto tpl = dir.path() / "tpl.json";
    std::ofstream(tpl) << scheme::builtin_template_sources()[0];
    const auto cfg = dir.path() / "cfg.json";
    const auto& vac = scheme::builtin_templates()[0];
    std::ofstream(cfg) << scheme::config_to_json(scheme::default_config(vac)).dump();
    const auto via_stdout = cli({"run", tpl.string(), cfg.string()});
    CHECK(via_stdout.code == 0);
    CHECK(via_stdout.out == csv);
    CHECK(via_stdout.err.empty());

    const auto fewer = cli({"run", "measurement_bench", "--samples", "11"});
    CHECK(fewer.code == 0);
    CHECK(std::count(fewer.out.begin(), fewer.out.end(), '\n') == 12);
}

TEST_CASE("exit codes", "[labctl][acc:cli]")
{
    TempDir dir("codes");
    auto cfg = scheme::config_to_json(scheme::default_config(scheme::builtin_templates()[0]));
    cfg["param_values"]["roughing"]["speed"] = 1e4;
    const auto bad = dir.path() / "bad.json";
    std::ofstream(bad) << cfg.dump();

    const auto out_of_range = cli({"run", "vacuum_station", bad.string(), "-o", (dir.path() / "x.csv").string()});
    CHECK(out_of_range.code == 2);
    CHECK(out_of_range.out.empty());
    CHECK(out_of_range.err_json()["violations"][0]["param"] == "speed");
    CHECK(out_of_range.err.find("speed") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.path() / "x.csv"));

    const auto garbled = dir.path() / "garbled.json";
    std::ofstream(garbled) << "{\"template_id\": ";
    CHECK(cli({"run", "vacuum_station", garbled.string()}).code == 2);

    auto tpl = json::parse(scheme::builtin_template_sources()[0]);
    tpl["colour"] = "red";
    const auto odd_tpl = dir.path() / "odd.json";
    std::ofstream(odd_tpl) << tpl.dump();
    CHECK(cli({"run", odd_tpl.string()}).code == 2);

    CHECK(cli({"run", (dir.path() / "missing.json").string()}).code == 1);
    CHECK(cli({"run", "vacuum_station", (dir.path() / "missing.json").string()}).code == 1);
    CHECK(cli({"run", "vacuum_station", "-o", (dir.path() / "no" / "such" / "dir.csv").string()}).code == 1);
    CHECK(cli({"run", "transport_channel", "--samples", "50"}).code == 2);

    const auto unknown_flag = cli({"run", "vacuum_station", "--colour", "red"});
    CHECK(unknown_flag.code == 2);
    CHECK(unknown_flag.err_json()["error"] == "usage");
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"check"}).code == 2);
    CHECK(cli({"--help"}).code == 0);

    // every diagnostic is a single JSON line
    for (const auto& r : {out_of_range, unknown_flag}) {
        CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
        CHECK_NOTHROW(r.err_json());
    }
}

TEST_CASE("seed initializes a deployment once", "[labctl][acc:cli]")
{
    TempDir dir("seed");
    const auto data = dir.path() / "data";
    const auto creds = seed(data);
    CHECK(creds["users"].size() == 4);
    CHECK(creds["assignment_ids"].size() == 4);
    CHECK(creds["templates"] == 4);

    const auto again = cli({"seed", "--data", data.string()});
    CHECK(again.code == 1);
    CHECK(again.err_json()["error"] == "refused");

    service::ServiceOptions opt;
    opt.data_dir = data;
    service::LabService svc(opt);
    CHECK(svc.templates().size() == 4);
    const auto st = svc.state();
    CHECK(st->groups.size() == 1);
    CHECK(st->groups.begin()->second->student_ids.size() == 2);
    CHECK(st->groups.begin()->second->teacher_ids.size() == 1);
    std::set<std::string> tpl_ids;
    for (const auto& [id, a] : st->assignments)
        tpl_ids.insert(a->template_id);
    CHECK(tpl_ids.size() == 4);
    for (const auto& u : creds["users"])
        CHECK_NOTHROW(svc.login(u["login"], u["password"]));
    CHECK(slurp(data / "events.jsonl").find(password_of(creds, "admin")) == std::string::npos);
}

TEST_CASE("check against live services", "[labctl][acc:cli]")
{
    TempDir dir("check");
    const auto data = dir.path() / "data";
    const auto creds = seed(data);
    const auto pw = password_of(creds, "student1");
    service::ServiceOptions opt;
    opt.data_dir = data;
    service::LabService svc(opt);

    SECTION("fresh deployment passes")
    {
        LiveServer live(svc);
        const auto r = cli({"check", "--addr", live.addr(), "--login", "student1", "--password", pw});
        INFO(r.err);
        CHECK(r.code == 0);
        CHECK(json::parse(r.out)["channels"] == json::array({"fore", "main"}));

        ::setenv("LABD_ADDR", live.addr().c_str(), 1);
        const auto from_env = cli({"check", "--login", "student1", "--password", pw});
        ::unsetenv("LABD_ADDR");
        CHECK(from_env.code == 0);

        CHECK(cli({"check", "--addr", live.addr(), "--login", "student1", "--password", "nope"}).code == 1);
    }
    SECTION("unreachable address")
    {
        const int port = free_port();
        const auto r = cli({"check", "--addr", "127.0.0.1:" + std::to_string(port), "--login", "x", "--password", "y"});
        CHECK(r.code == 1);
        CHECK(r.err_json()["error"] == "connection");
    }
    SECTION("tampered service omitting a channel")
    {
        service::ApiRouter router(svc);
        httplib::Server evil;
        auto forward = [&](const httplib::Request& req, httplib::Response& res) {
            service::HttpRequest r{req.method, req.path, {}, req.get_header_value("Authorization"), req.body};
            for (const auto& [k, v] : req.params)
                r.query.emplace(k, v);
            auto out = router.handle(r);
            if (req.method == "GET" && req.path.rfind("/api/v1/runs/", 0) == 0 && out.content_type == "application/json") {
                auto doc = json::parse(out.body);
                if (doc.contains("result") && doc["result"].is_object()) {
                    auto& ch = doc["result"]["channels"];
                    ch.erase(std::remove_if(ch.begin(), ch.end(), [](const json& c) { return c["label"] == "main"; }),
                             ch.end());
                    out.body = doc.dump();
                }
            }
            res.status = out.status;
            res.set_content(out.body, out.content_type);
        };
        evil.Get(".*", forward);
        evil.Post(".*", forward);
        const int port = evil.bind_to_any_port("127.0.0.1");
        std::thread t([&] { evil.listen_after_bind(); });
        const auto r = cli({"check", "--addr", "127.0.0.1:" + std::to_string(port), "--login", "student1",
                               "--password", pw});
        evil.stop();
        t.join();
        CHECK(r.code == 1);
        CHECK(r.err_json()["error"] == "contract");
        CHECK(r.err_json()["message"].get<std::string>().find("'main'") != std::string::npos);
    }
}

TEST_CASE("serve binary runs a seeded deployment until SIGTERM", "[labctl][acc:cli]")
{
    TempDir dir("serve");
    const auto data = dir.path() / "data";
    const auto creds = seed(data);

    const auto addr = "127.0.0.1:" + std::to_string(free_port());

    int pipefd[2];
    REQUIRE(::pipe(pipefd) == 0);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, pipefd[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&fa, pipefd[0]);
    std::vector<std::string> argv_s{LABCTL_PATH, "serve", "--addr", addr, "--data", data.string(), "--workers", "1"};
    std::vector<char*> argv;
    for (auto& s : argv_s)
        argv.push_back(s.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    REQUIRE(posix_spawn(&pid, LABCTL_PATH, &fa, nullptr, argv.data(), environ) == 0);
    posix_spawn_file_actions_destroy(&fa);
    ::close(pipefd[1]);

    // first stdout line announces the bound address
    std::string line;
    char c;
    while (::read(pipefd[0], &c, 1) == 1 && c != '\n')
        line += c;
    ::close(pipefd[0]);
    REQUIRE_FALSE(line.empty());
    CHECK(json::parse(line)["listening"] == addr);

    const auto r = cli({"check", "--addr", addr, "--login", "teacher", "--password", password_of(creds, "teacher")});
    INFO(r.err);
    CHECK(r.code == 0);

    ::kill(pid, SIGTERM);
    int status = 0;
    REQUIRE(::waitpid(pid, &status, 0) == pid);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);

    // state survives the restart
    service::ServiceOptions opt;
    opt.data_dir = data;
    service::LabService reopened(opt);
    bool found = false;
    for (const auto& [id, run] : reopened.state()->runs)
        found = found || run->status == service::RunStatus::Done;
    CHECK(found);
}
