#include "labctl_app.hpp"

#include "vlab/scheme/config.hpp"
#include "vlab/scheme/instantiate.hpp"
#include "vlab/scheme/template.hpp"
#include "vlab/service/http_api.hpp"
#include "vlab/sim/csv.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <pthread.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace vlab::labctl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Carries an exit code and a one-line JSON diagnostic.
struct Failure {
    int code;
    std::string kind;
    std::string message;
    json violations = json::array();
};

void emit(std::ostream& err, const Failure& f)
{
    json j{{"error", f.kind}, {"message", f.message}};
    if (!f.violations.empty())
        j["violations"] = f.violations;
    err << j.dump() << '\n';
}

std::string env_or(const char* name, const std::string& fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

template <class T>
T env_number(const char* name, T fallback)
{
    const char* v = std::getenv(name);
    if (!v || !*v)
        return fallback;
    std::istringstream in(v);
    T value{};
    if (!(in >> value) || !in.eof())
        throw Failure{ValidationFailure, "usage", std::string(name) + " is not a number: '" + v + "'"};
    return value;
}

struct HostPort {
    std::string host;
    int port = 0;
};

HostPort split_addr(const std::string& addr)
{
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
        throw Failure{ValidationFailure, "usage", "address must be host:port, got '" + addr + "'"};
    HostPort hp;
    hp.host = addr.substr(0, colon);
    if (hp.host.size() > 2 && hp.host.front() == '[' && hp.host.back() == ']')
        hp.host = hp.host.substr(1, hp.host.size() - 2);
    try {
        std::size_t used = 0;
        hp.port = std::stoi(addr.substr(colon + 1), &used);
        if (used != addr.size() - colon - 1 || hp.port < 0 || hp.port > 65535)
            throw std::invalid_argument("port");
    } catch (const std::exception&) {
        throw Failure{ValidationFailure, "usage", "invalid port in '" + addr + "'"};
    }
    return hp;
}

std::string read_text(const fs::path& p, const std::string& what)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Failure{RuntimeFailure, "io", "cannot read " + what + " " + p.string()};
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---- run ---------------------------------------------------------------------

struct RunArgs {
    std::string template_ref;
    std::string config_path;
    std::string out_path;
    std::optional<std::size_t> samples;
};

scheme::SchemeTemplate resolve_template(const std::string& ref)
{
    if (!fs::exists(ref)) {
        for (const auto& t : scheme::builtin_templates())
            if (t.template_id == ref)
                return t;
        throw Failure{RuntimeFailure, "io", "no template file or built-in template named '" + ref + "'"};
    }
    const auto text = read_text(ref, "template");
    try {
        auto tpl = scheme::template_from_json(json::parse(text));
        scheme::check_template(tpl);
        return tpl;
    } catch (const json::parse_error& e) {
        throw Failure{ValidationFailure, "invalid_template", ref + ": " + e.what()};
    } catch (const scheme::TemplateError& e) {
        throw Failure{ValidationFailure, "invalid_template", e.what()};
    }
}

int do_run(const RunArgs& a, std::ostream& out)
{
    const auto tpl = resolve_template(a.template_ref);
    auto config = scheme::default_config(tpl);
    if (!a.config_path.empty()) {
        const auto text = read_text(a.config_path, "config");
        try {
            config = scheme::config_from_json(json::parse(text));
        } catch (const json::parse_error& e) {
            throw Failure{ValidationFailure, "invalid_config", a.config_path + ": " + e.what()};
        } catch (const scheme::ConfigError& e) {
            throw Failure{ValidationFailure, "invalid_config", e.what()};
        }
    }
    if (a.samples)
        config.n_samples = *a.samples;

    scheme::ValidationReport report;
    try {
        report = scheme::validate_config(tpl, config);
    } catch (const scheme::ConfigError& e) {
        throw Failure{ValidationFailure, "invalid_config", e.what()};
    }
    if (!report.empty()) {
        std::string names;
        for (const auto& v : report)
            names += (names.empty() ? "" : ", ") + v.slot + (v.param.empty() ? "" : "." + v.param);
        throw Failure{ValidationFailure, "validation", "config violates the template: " + names,
                      scheme::report_to_json(report)};
    }

    std::string csv;
    try {
        csv = sim::to_csv(scheme::run_config(tpl, config));
    } catch (const std::exception& e) {
        throw Failure{RuntimeFailure, "simulation", e.what()};
    }
    if (a.out_path.empty()) {
        out << csv;
        return Ok;
    }
    std::ofstream f(a.out_path, std::ios::binary | std::ios::trunc);
    if (!(f << csv) || !f.flush())
        throw Failure{RuntimeFailure, "io", "cannot write " + a.out_path};
    return Ok;
}

// ---- serve -------------------------------------------------------------------

struct ServeArgs {
    std::string addr;
    std::string data;
    std::string templates;
    std::size_t workers = 2;
    double ttl_h = 12.0;
    int iterations = 200000;
};

int do_serve(const ServeArgs& a, std::ostream& out, std::ostream& err)
{
    const auto hp = split_addr(a.addr);
    if (a.workers == 0)
        throw Failure{ValidationFailure, "usage", "workers must be at least 1"};
    if (!(a.ttl_h > 0))
        throw Failure{ValidationFailure, "usage", "session lifetime must be positive"};

    // Signals are taken synchronously by the main thread; workers inherit the mask.
    sigset_t stop_set;
    sigemptyset(&stop_set);
    sigaddset(&stop_set, SIGINT);
    sigaddset(&stop_set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_set, nullptr);

    service::ServiceOptions opt;
    if (!a.data.empty())
        opt.data_dir = a.data;
    if (!a.templates.empty())
        opt.templates_dir = a.templates;
    opt.workers = a.workers;
    opt.session_ttl_hours = a.ttl_h;
    opt.pbkdf2_iterations = a.iterations;
    opt.bind_host = hp.host;

    std::unique_ptr<service::LabService> svc;
    try {
        svc = std::make_unique<service::LabService>(opt);
    } catch (const std::exception& e) {
        throw Failure{RuntimeFailure, "startup", e.what()};
    }
    if (svc->state()->users.empty())
        emit(err, {Ok, "warning", "no accounts exist; run 'labctl seed' on the data directory first"});

    service::HttpServer server(*svc);
    int port;
    try {
        port = server.bind(hp.host, hp.port);
    } catch (const std::exception& e) {
        throw Failure{RuntimeFailure, "bind", e.what()};
    }
    out << json{{"listening", hp.host + ":" + std::to_string(port)},
                {"tier", service::to_string(svc->tier())},
                {"persistent", opt.data_dir.has_value()}}
               .dump()
        << std::endl;

    std::thread http([&] { server.run(); });
    int sig = 0;
    sigwait(&stop_set, &sig);
    server.stop();
    http.join();
    svc->wait_idle();
    return Ok;
}

// ---- seed --------------------------------------------------------------------

struct SeedArgs {
    std::string data;
    int iterations = 200000;
};

int do_seed(const SeedArgs& a, std::ostream& out)
{
    if (a.data.empty())
        throw Failure{ValidationFailure, "usage", "a data directory is required (--data or LABD_DATA)"};
    const fs::path dir = a.data;
    if (fs::exists(dir) && (!fs::is_directory(dir) || !fs::is_empty(dir)))
        throw Failure{RuntimeFailure, "refused", "data directory " + dir.string() + " is not empty"};

    fs::create_directories(dir / "templates");
    const auto& sources = scheme::builtin_template_sources();
    const auto& builtins = scheme::builtin_templates();
    for (std::size_t i = 0; i < builtins.size(); ++i) {
        std::ofstream f(dir / "templates" / (builtins[i].template_id + ".json"), std::ios::binary);
        if (!(f << sources[i]))
            throw Failure{RuntimeFailure, "io", "cannot write templates into " + dir.string()};
    }

    service::ServiceOptions opt;
    opt.data_dir = dir;
    opt.workers = 1;
    opt.pbkdf2_iterations = a.iterations;
    service::LabService svc(opt);

    json users = json::array();
    auto password = [] { return service::random_hex(9); };
    const auto admin_pw = password();
    const auto admin = svc.bootstrap_admin("admin", admin_pw, "Administrator");
    users.push_back({{"login", "admin"}, {"password", admin_pw}, {"role", "Administrator"}, {"id", admin->id}});

    auto add_user = [&](const std::string& login, const std::string& role, const std::string& name) {
        const auto pw = password();
        const auto u = svc.create_user(*admin, {{"login", login}, {"password", pw}, {"role", role}, {"display_name", name}});
        users.push_back({{"login", login}, {"password", pw}, {"role", role}, {"id", u["id"]}});
        return u["id"].get<std::string>();
    };
    const auto teacher = add_user("teacher", "Teacher", "Course teacher");
    const auto s1 = add_user("student1", "Student", "First student");
    const auto s2 = add_user("student2", "Student", "Second student");

    const auto group = svc.create_group(*admin, {{"name", "Accelerator physics"}})["id"].get<std::string>();
    svc.add_group_member(*admin, group, {{"user_id", teacher}}, service::Role::Teacher);
    svc.add_group_member(*admin, group, {{"user_id", s1}}, service::Role::Student);
    svc.add_group_member(*admin, group, {{"user_id", s2}}, service::Role::Student);

    const auto teacher_acc = svc.state()->users.at(teacher);
    const auto due = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count() +
                     90LL * 86400;
    json assignments = json::array();
    for (const auto& t : svc.templates()) {
        const auto created = svc.create_assignment(
            *teacher_acc, {{"group_id", group},
                           {"template_id", t.template_id},
                           {"title", t.title},
                           {"instructions", "Explore the circuit, save a run you can explain and submit it."},
                           {"references", json::array({"Lecture notes for " + t.title})},
                           {"due", due}});
        assignments.push_back(created["id"]);
    }

    out << json{{"data_dir", fs::absolute(dir).string()},
                {"users", users},
                {"group_id", group},
                {"assignment_ids", assignments},
                {"templates", svc.templates().size()}}
               .dump(2)
        << '\n';
    return Ok;
}

// ---- check -------------------------------------------------------------------

struct CheckArgs {
    std::string addr;
    std::string login;
    std::string password;
    double timeout_s = 60.0;
};

std::string describe(const httplib::Result& r)
{
    if (!r)
        return httplib::to_string(r.error());
    return "HTTP " + std::to_string(r->status) + " " + r->body.substr(0, 300);
}

int do_check(const CheckArgs& a, std::ostream& out)
{
    const auto hp = split_addr(a.addr);
    httplib::Client cli(hp.host, hp.port);
    cli.set_connection_timeout(5);
    cli.set_read_timeout(30);

    const auto health = cli.Get("/health");
    if (!health || health->status != 200)
        throw Failure{RuntimeFailure, "connection", "cannot reach " + a.addr + ": " + describe(health)};

    const auto login = cli.Post("/api/v1/session", json{{"login", a.login}, {"password", a.password}}.dump(),
                                "application/json");
    if (!login || login->status != 200)
        throw Failure{RuntimeFailure, "auth", "login failed: " + describe(login)};
    const httplib::Headers auth{{"Authorization", "Bearer " + json::parse(login->body).at("token").get<std::string>()}};

    const auto tres = cli.Get("/api/v1/templates/vacuum_station", auth);
    if (!tres || tres->status != 200)
        throw Failure{RuntimeFailure, "contract", "vacuum_station template unavailable: " + describe(tres)};
    scheme::SchemeTemplate tpl;
    try {
        tpl = scheme::template_from_json(json::parse(tres->body));
    } catch (const std::exception& e) {
        throw Failure{RuntimeFailure, "contract", std::string("template document rejected: ") + e.what()};
    }
    const auto config = scheme::default_config(tpl);

    const auto created = cli.Post("/api/v1/runs", auth, scheme::config_to_json(config).dump(), "application/json");
    if (!created || created->status != 201)
        throw Failure{RuntimeFailure, "contract", "run not accepted: " + describe(created)};
    const auto run_id = json::parse(created->body).at("id").get<std::string>();

    json run;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.timeout_s);
    for (;;) {
        const auto r = cli.Get("/api/v1/runs/" + run_id, auth);
        if (!r || r->status != 200)
            throw Failure{RuntimeFailure, "contract", "polling run " + run_id + " failed: " + describe(r)};
        run = json::parse(r->body);
        const auto status = run.value("status", "");
        if (status == "Done")
            break;
        if (status == "Failed")
            throw Failure{RuntimeFailure, "run_failed", run.value("error", json("")).dump()};
        if (std::chrono::steady_clock::now() > deadline)
            throw Failure{RuntimeFailure, "timeout", "run " + run_id + " still " + status};
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }

    const auto& result = run.at("result");
    const auto n = scheme::effective_directives(tpl, config).n_samples;
    const auto& t = result.at("t");
    if (t.size() != n)
        throw Failure{RuntimeFailure, "contract",
                      "expected " + std::to_string(n) + " samples, got " + std::to_string(t.size())};
    std::vector<std::string> got;
    for (const auto& ch : result.at("channels"))
        got.push_back(ch.at("label").get<std::string>());
    for (const auto& want : tpl.output_channels)
        if (std::find(got.begin(), got.end(), want.label) == got.end())
            throw Failure{RuntimeFailure, "contract", "missing channel '" + want.label + "'"};
    if (got.size() != tpl.output_channels.size())
        throw Failure{RuntimeFailure, "contract", "result has undeclared channels"};
    sim::TimeSeries header_only;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const auto& ch = result.at("channels")[i];
        const auto& want = tpl.output_channels[i];
        if (got[i] != want.label || ch.at("unit") != want.unit)
            throw Failure{RuntimeFailure, "contract", "channel " + std::to_string(i) + " should be '" + want.label +
                                                          "' [" + want.unit + "]"};
        const auto& values = ch.at("values");
        if (values.size() != n)
            throw Failure{RuntimeFailure, "contract", "channel '" + want.label + "' has the wrong length"};
        for (const auto& v : values)
            if (!v.is_number() || !std::isfinite(v.get<double>()))
                throw Failure{RuntimeFailure, "contract", "channel '" + want.label + "' has non-finite values"};
        header_only.add_channel(want.label, want.unit, {});
    }

    const auto csv = cli.Get("/api/v1/runs/" + run_id + "/result.csv", auth);
    if (!csv || csv->status != 200)
        throw Failure{RuntimeFailure, "contract", "CSV export failed: " + describe(csv)};
    const auto header = sim::to_csv(header_only);
    if (csv->body.compare(0, header.size(), header) != 0)
        throw Failure{RuntimeFailure, "contract", "CSV header mismatch"};

    out << json{{"status", "ok"}, {"addr", a.addr}, {"run_id", run_id}, {"channels", got}, {"samples", n}}.dump()
        << '\n';
    return Ok;
}

} // namespace

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    try {
        CLI::App app{"Virtual laboratory control tool", "labctl"};
        app.require_subcommand(1, 1);
        app.set_help_all_flag("--help-all");

        RunArgs ra;
        auto* run = app.add_subcommand("run", "Run a scheme config headlessly and write CSV");
        run->add_option("template", ra.template_ref, "Template file or built-in template id")->required();
        run->add_option("config", ra.config_path, "Config file; template defaults when omitted");
        run->add_option("--out,-o", ra.out_path, "CSV output path; stdout when omitted");
        run->add_option("--samples", ra.samples, "Override the number of samples");

        ServeArgs sa;
        sa.addr = env_or("LABD_ADDR", "127.0.0.1:8080");
        sa.data = env_or("LABD_DATA", "");
        sa.workers = env_number<std::size_t>("LABD_WORKERS", 2);
        sa.ttl_h = env_number<double>("LABD_SESSION_TTL_H", 12.0);
        auto* serve = app.add_subcommand("serve", "Run the lab service");
        serve->add_option("--addr", sa.addr, "Bind address host:port (LABD_ADDR)");
        serve->add_option("--data", sa.data, "Data directory (LABD_DATA); memory only when empty");
        serve->add_option("--templates", sa.templates, "Template directory; data/templates or built-ins by default");
        serve->add_option("--workers", sa.workers, "Simulation worker threads (LABD_WORKERS)");
        serve->add_option("--session-ttl-h", sa.ttl_h, "Session lifetime in hours (LABD_SESSION_TTL_H)");
        serve->add_option("--pbkdf2-iterations", sa.iterations, "Password hashing cost for new accounts");

        SeedArgs da;
        da.data = sa.data;
        auto* seed = app.add_subcommand("seed", "Initialize a data directory with demo accounts");
        seed->add_option("--data", da.data, "Data directory (LABD_DATA); must be empty or absent");
        seed->add_option("--pbkdf2-iterations", da.iterations, "Password hashing cost");

        CheckArgs ca;
        ca.addr = sa.addr;
        auto* check = app.add_subcommand("check", "Smoke-test a running service");
        check->add_option("--addr", ca.addr, "Service address host:port (LABD_ADDR)");
        check->add_option("--login", ca.login, "Account login")->required();
        check->add_option("--password", ca.password, "Account password")->required();
        check->add_option("--timeout-s", ca.timeout_s, "Seconds to wait for the run");

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return Ok;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return Ok;
        } catch (const CLI::ParseError& e) {
            emit(err, {ValidationFailure, "usage", e.what()});
            return ValidationFailure;
        }

        if (run->parsed())
            return do_run(ra, out);
        if (serve->parsed())
            return do_serve(sa, out, err);
        if (seed->parsed())
            return do_seed(da, out);
        return do_check(ca, out);
    } catch (const Failure& f) {
        emit(err, f);
        return f.code;
    } catch (const std::exception& e) {
        emit(err, {RuntimeFailure, "internal", e.what()});
        return RuntimeFailure;
    }
}

} // namespace vlab::labctl
