#include "vlab/service/service.hpp"

#include "../scheme/json_fields.hpp"
#include "vlab/scheme/instantiate.hpp"
#include "vlab/service/grading.hpp"
#include "vlab/sim/csv.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

namespace vlab::service {

using nlohmann::json;
namespace fs = std::filesystem;

ApiError::ApiError(int status, std::string code, const std::string& message, json violations)
    : std::runtime_error(message), status_(status), code_(std::move(code)), violations_(std::move(violations))
{
}

namespace {

class PayloadError : public ApiError {
public:
    explicit PayloadError(const std::string& message)
        : ApiError(422, "invalid_payload", message, json::array({{{"reason", "invalid_payload"}, {"message", message}}}))
    {
    }
};

using Fields = scheme::detail::Fields<PayloadError>;

[[noreturn]] void forbidden(const std::string& msg) { throw ApiError(403, "forbidden", msg); }
[[noreturn]] void not_found(const std::string& what, const std::string& id)
{
    throw ApiError(404, "not_found", "unknown " + what + " '" + id + "'");
}
[[noreturn]] void conflict(const std::string& msg) { throw ApiError(409, "conflict", msg); }
[[noreturn]] void invalid(const std::string& field, const std::string& reason, const std::string& msg)
{
    throw ApiError(422, "validation_failed", msg,
                   json::array({{{"field", field}, {"reason", reason}, {"message", msg}}}));
}

void require_admin(const UserAccount& c)
{
    if (c.role != Role::Administrator)
        forbidden("administrator role required");
}

int rank(AccessLevel a) { return static_cast<int>(a); }

json event(const char* type) { return json{{"type", type}}; }

std::vector<int> parse_answers(const json& arr, const Assignment& a)
{
    std::vector<int> out;
    if (arr.size() > a.quiz.size())
        invalid("quiz_answers", "too_many_answers", "more answers than quiz questions");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& v = arr[i];
        const auto field = "quiz_answers[" + std::to_string(i) + "]";
        if (!v.is_number_integer())
            invalid(field, "not_integer", field + " must be an integer");
        const auto k = v.get<std::int64_t>();
        if (k < 0 || k >= static_cast<std::int64_t>(a.quiz[i].choices.size()))
            invalid(field, "out_of_range", field + " is not a valid choice");
        out.push_back(static_cast<int>(k));
    }
    return out;
}

scheme::SchemeConfig parse_config(const json& j)
{
    try {
        return scheme::config_from_json(j);
    } catch (const scheme::ConfigError& e) {
        throw PayloadError(std::string("config: ") + e.what());
    }
}

} // namespace

AccessLevel tier_for_address(const std::string& host)
{
    if (host == "localhost")
        return AccessLevel::Standalone;
    in_addr a4{};
    if (::inet_pton(AF_INET, host.c_str(), &a4) == 1) {
        const std::uint32_t ip = ntohl(a4.s_addr);
        if ((ip >> 24) == 127)
            return AccessLevel::Standalone;
        if ((ip >> 24) == 10 || (ip >> 20) == 0xAC1 || (ip >> 16) == 0xC0A8)
            return AccessLevel::Corporate;
        return AccessLevel::Global;
    }
    in6_addr a6{};
    if (::inet_pton(AF_INET6, host.c_str(), &a6) == 1) {
        if (IN6_IS_ADDR_LOOPBACK(&a6))
            return AccessLevel::Standalone;
        if ((a6.s6_addr[0] & 0xFE) == 0xFC) // unique local fc00::/7
            return AccessLevel::Corporate;
    }
    return AccessLevel::Global;
}

// ---- lifecycle --------------------------------------------------------------

LabService::LabService(ServiceOptions options) : opt_(std::move(options)), tier_(tier_for_address(opt_.bind_host))
{
    if (!opt_.clock_ms)
        opt_.clock_ms = [] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                .count();
        };

    std::optional<fs::path> tdir = opt_.templates_dir;
    if (!tdir && opt_.data_dir && fs::is_directory(*opt_.data_dir / "templates"))
        tdir = *opt_.data_dir / "templates";
    if (tdir) {
        templates_ = scheme::load_template_dir(*tdir);
        for (const auto& t : templates_)
            scheme::check_template(t);
    } else {
        templates_ = scheme::builtin_templates();
    }

    State initial;
    if (opt_.data_dir) {
        log_ = std::make_unique<EventLog>(*opt_.data_dir, opt_.durable);
        initial = log_->load().state;
    }
    state_ = std::make_shared<const State>(std::move(initial));
    pool_ = std::make_unique<WorkerPool>(std::max<std::size_t>(1, opt_.workers));
    recover();
}

LabService::~LabService()
{
    pool_->stop();
}

std::int64_t LabService::now_ms() const { return opt_.clock_ms(); }

std::shared_ptr<const State> LabService::state() const { return std::atomic_load(&state_); }

std::optional<fs::path> LabService::log_path() const
{
    if (!log_)
        return std::nullopt;
    return log_->log_path();
}

const scheme::SchemeTemplate* LabService::find_template(const std::string& id) const
{
    for (const auto& t : templates_)
        if (t.template_id == id)
            return &t;
    return nullptr;
}

std::string LabService::mint_id(const State& st, const char* prefix) const
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s-%08llu", prefix, static_cast<unsigned long long>(st.next_id));
    return buf;
}

void LabService::commit(json ev, const std::string& actor)
{
    const auto cur = current();
    ev["seq"] = cur->seq + 1;
    ev["ts"] = now_ms();
    ev["actor"] = actor;
    auto next = std::make_shared<State>(*cur);
    apply_event(*next, ev);
    if (log_)
        log_->append(ev);
    std::atomic_store(&state_, std::shared_ptr<const State>(std::move(next)));
    if (log_ && opt_.snapshot_every > 0 && ++since_snapshot_ >= opt_.snapshot_every) {
        log_->write_snapshot(*current());
        since_snapshot_ = 0;
    }
}

void LabService::recover()
{
    std::vector<std::string> runs, grades;
    {
        std::lock_guard lk(write_mu_);
        const auto st = current();
        for (const auto& [id, r] : st->runs) {
            if (r->status == RunStatus::Pending || r->status == RunStatus::Running) {
                if (r->status == RunStatus::Running) {
                    auto ev = event("run_requeued");
                    ev["run_id"] = id;
                    commit(std::move(ev), "system");
                }
                runs.push_back(id);
            }
        }
        for (const auto& [id, s] : st->submissions)
            if (s->status >= SubmissionStatus::Submitted && !s->auto_score)
                grades.push_back(id);
    }
    for (const auto& id : runs)
        enqueue_run(id);
    for (const auto& id : grades)
        enqueue_grading(id);
}

void LabService::wait_idle() { pool_->wait_idle(); }

// ---- sessions ---------------------------------------------------------------

UserPtr LabService::bootstrap_admin(const std::string& login, const std::string& password,
                                    const std::string& display_name)
{
    if (login.empty() || password.empty())
        throw PayloadError("login and password must be non-empty");
    std::lock_guard lk(write_mu_);
    const auto st = current();
    if (!st->users.empty())
        conflict("users already exist");
    UserAccount u;
    u.id = mint_id(*st, "u");
    u.login = login;
    u.password = hash_password(password, opt_.pbkdf2_iterations);
    u.role = Role::Administrator;
    u.display_name = display_name;
    u.created_ms = now_ms();
    auto ev = event("user_created");
    ev["user"] = to_json(u, true);
    commit(std::move(ev), "system");
    return current()->users.at(u.id);
}

LoginResult LabService::login(const std::string& login, const std::string& password)
{
    const auto st = state();
    const UserAccount* u = st->user_by_login(login);
    if (!u) {
        // same work as a real check so timing does not reveal the login
        static const PasswordHash dummy = hash_password("x", 1);
        PasswordHash probe = dummy;
        probe.iterations = opt_.pbkdf2_iterations;
        verify_password(password, probe);
        throw ApiError(401, "invalid_credentials", "invalid login or password");
    }
    if (!verify_password(password, u->password))
        throw ApiError(401, "invalid_credentials", "invalid login or password");
    if (!u->active)
        throw ApiError(403, "account_inactive", "account is deactivated");
    if (rank(u->access) < rank(tier_))
        throw ApiError(403, "access_denied", "account is not allowed on a " + to_string(tier_) + " deployment");

    LoginResult res;
    res.token = random_hex(32);
    res.expires_ms = now_ms() + static_cast<std::int64_t>(opt_.session_ttl_hours * 3600.0 * 1000.0);
    res.user = st->users.at(u->id);
    std::lock_guard lk(session_mu_);
    sessions_[res.token] = {u->id, res.expires_ms};
    return res;
}

void LabService::logout(const std::string& token)
{
    std::lock_guard lk(session_mu_);
    sessions_.erase(token);
}

UserPtr LabService::authenticate(const std::string& token) const
{
    std::string user_id;
    {
        std::lock_guard lk(session_mu_);
        const auto it = sessions_.find(token);
        if (it == sessions_.end())
            throw ApiError(401, "unauthenticated", "missing or unknown session token");
        if (now_ms() >= it->second.expires_ms) {
            sessions_.erase(it);
            throw ApiError(401, "unauthenticated", "session expired");
        }
        user_id = it->second.user_id;
    }
    const auto st = state();
    const auto it = st->users.find(user_id);
    if (it == st->users.end() || !it->second->active)
        throw ApiError(401, "unauthenticated", "account is no longer active");
    return it->second;
}

// ---- administration ---------------------------------------------------------

json LabService::create_user(const UserAccount& caller, const json& body)
{
    require_admin(caller);
    const Fields f(body, "user", {"login", "password", "role", "display_name", "access"});
    UserAccount u;
    u.login = f.str("login");
    const auto password = f.str("password");
    if (u.login.empty())
        invalid("login", "empty", "login must be non-empty");
    if (password.empty())
        invalid("password", "empty", "password must be non-empty");
    try {
        u.role = role_from_string(f.str("role"));
        if (f.has("access"))
            u.access = access_from_string(f.str("access"));
    } catch (const std::invalid_argument& e) {
        throw PayloadError(e.what());
    }
    u.display_name = f.str_or("display_name", u.login);
    // hash outside the writer lock; it is deliberately slow
    u.password = hash_password(password, opt_.pbkdf2_iterations);

    std::lock_guard lk(write_mu_);
    const auto st = current();
    if (st->user_by_login(u.login))
        conflict("login '" + u.login + "' is taken");
    u.id = mint_id(*st, "u");
    u.created_ms = now_ms();
    auto ev = event("user_created");
    ev["user"] = to_json(u, true);
    commit(std::move(ev), caller.id);
    return to_json(u, false);
}

json LabService::list_users(const UserAccount& caller) const
{
    require_admin(caller);
    json out = json::array();
    for (const auto& [id, u] : state()->users)
        out.push_back(to_json(*u, false));
    return out;
}

json LabService::deactivate_user(const UserAccount& caller, const std::string& user_id)
{
    require_admin(caller);
    std::lock_guard lk(write_mu_);
    const auto st = current();
    const auto* u = State::find(st->users, user_id);
    if (!u)
        not_found("user", user_id);
    if (u->id == caller.id)
        conflict("cannot deactivate your own account");
    if (u->active) {
        auto ev = event("user_deactivated");
        ev["user_id"] = user_id;
        commit(std::move(ev), caller.id);
    }
    return to_json(*current()->users.at(user_id), false);
}

json LabService::set_access(const UserAccount& caller, const std::string& user_id, const json& body)
{
    require_admin(caller);
    const Fields f(body, "access", {"access"});
    AccessLevel level;
    try {
        level = access_from_string(f.str("access"));
    } catch (const std::invalid_argument& e) {
        throw PayloadError(e.what());
    }
    std::lock_guard lk(write_mu_);
    if (!State::find(current()->users, user_id))
        not_found("user", user_id);
    auto ev = event("user_access_set");
    ev["user_id"] = user_id;
    ev["access"] = to_string(level);
    commit(std::move(ev), caller.id);
    return to_json(*current()->users.at(user_id), false);
}

json LabService::create_group(const UserAccount& caller, const json& body)
{
    require_admin(caller);
    const Fields f(body, "group", {"name"});
    StudentGroup g;
    g.name = f.str("name");
    if (g.name.empty())
        invalid("name", "empty", "group name must be non-empty");
    std::lock_guard lk(write_mu_);
    g.id = mint_id(*current(), "g");
    auto ev = event("group_created");
    ev["group"] = to_json(g);
    commit(std::move(ev), caller.id);
    return to_json(g);
}

json LabService::add_group_member(const UserAccount& caller, const std::string& group_id, const json& body,
                                  Role role)
{
    require_admin(caller);
    const Fields f(body, "member", {"user_id"});
    const auto user_id = f.str("user_id");
    std::lock_guard lk(write_mu_);
    const auto st = current();
    const auto* g = State::find(st->groups, group_id);
    if (!g)
        not_found("group", group_id);
    const auto* u = State::find(st->users, user_id);
    if (!u)
        invalid("user_id", "unknown_user", "unknown user '" + user_id + "'");
    if (u->role != role)
        invalid("user_id", "wrong_role", "user '" + user_id + "' is a " + to_string(u->role) + ", not a " +
                                             to_string(role));
    const bool teacher = role == Role::Teacher;
    if (!(teacher ? g->has_teacher(user_id) : g->has_student(user_id))) {
        auto ev = event(teacher ? "group_teacher_added" : "group_student_added");
        ev["group_id"] = group_id;
        ev["user_id"] = user_id;
        commit(std::move(ev), caller.id);
    }
    return to_json(*current()->groups.at(group_id));
}

json LabService::list_groups(const UserAccount& caller) const
{
    json out = json::array();
    for (const auto& [id, g] : state()->groups) {
        const bool visible = caller.role == Role::Administrator ||
                             (caller.role == Role::Teacher && g->has_teacher(caller.id)) ||
                             (caller.role == Role::Student && g->has_student(caller.id));
        if (visible)
            out.push_back(to_json(*g));
    }
    return out;
}

// ---- templates --------------------------------------------------------------

json LabService::list_templates() const
{
    json out = json::array();
    for (const auto& t : templates_)
        out.push_back(scheme::template_to_json(t));
    return out;
}

json LabService::get_template(const std::string& id) const
{
    const auto* t = find_template(id);
    if (!t)
        not_found("template", id);
    return scheme::template_to_json(*t);
}

// ---- assignments ------------------------------------------------------------

namespace {

json assignment_view(const Assignment& a, const UserAccount& viewer)
{
    json j = to_json(a);
    if (viewer.role == Role::Student)
        for (auto& q : j["quiz"])
            q.erase("correct_index");
    return j;
}

GradeCriteria parse_criteria(const json& body, const scheme::SchemeTemplate& tpl)
{
    const Fields f(body, "criteria", {"checks", "properties"});
    GradeCriteria c;
    auto channel_ok = [&](const std::string& ch, const std::string& field) {
        for (const auto& oc : tpl.output_channels)
            if (oc.label == ch)
                return;
        invalid(field, "unknown_channel", "channel '" + ch + "' is not an output of template '" + tpl.template_id + "'");
    };
    if (f.has("checks")) {
        const auto& arr = f.array("checks");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto where = "criteria.checks[" + std::to_string(i) + "]";
            const Fields k(arr[i], where, {"channel", "probe", "expected", "rel_tol"});
            GradeCheck g{k.str("channel"), k.num("probe"), k.num("expected"), k.num("rel_tol")};
            channel_ok(g.channel, where + ".channel");
            if (!(g.rel_tol > 0))
                invalid(where + ".rel_tol", "out_of_range", "rel_tol must be positive");
            c.checks.push_back(g);
        }
    }
    if (f.has("properties")) {
        const auto& arr = f.array("properties");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto where = "criteria.properties[" + std::to_string(i) + "]";
            const Fields k(arr[i], where, {"channel", "property", "threshold"});
            PropertyCheck p;
            p.channel = k.str("channel");
            const auto prop = k.str("property");
            if (prop == "final_value_below")
                p.property = PropertyCheck::Kind::FinalValueBelow;
            else if (prop == "final_value_above")
                p.property = PropertyCheck::Kind::FinalValueAbove;
            else
                invalid(where + ".property", "unknown_property", "unknown property '" + prop + "'");
            p.threshold = k.num("threshold");
            channel_ok(p.channel, where + ".channel");
            c.properties.push_back(p);
        }
    }
    return c;
}

std::vector<QuizQuestion> parse_quiz(const json& arr)
{
    std::vector<QuizQuestion> out;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto where = "quiz[" + std::to_string(i) + "]";
        const Fields k(arr[i], where, {"question_id", "text", "choices", "correct_index"});
        QuizQuestion q;
        q.question_id = k.str("question_id");
        q.text = k.str("text");
        for (const auto& c : k.array("choices")) {
            if (!c.is_string())
                invalid(where + ".choices", "not_string", "choices must be strings");
            q.choices.push_back(c.get<std::string>());
        }
        const auto& ci = k.raw("correct_index");
        if (!ci.is_number_integer())
            invalid(where + ".correct_index", "not_integer", "correct_index must be an integer");
        if (q.choices.size() < 2)
            invalid(where + ".choices", "too_few_choices", "a question needs at least two choices");
        const auto idx = ci.get<std::int64_t>();
        if (idx < 0 || idx >= static_cast<std::int64_t>(q.choices.size()))
            invalid(where + ".correct_index", "out_of_range", "correct_index is not a valid choice");
        q.correct_index = static_cast<int>(idx);
        if (q.question_id.empty() || !ids.insert(q.question_id).second)
            invalid(where + ".question_id", "duplicate", "question ids must be unique and non-empty");
        out.push_back(std::move(q));
    }
    return out;
}

} // namespace

json LabService::create_assignment(const UserAccount& caller, const json& body)
{
    if (caller.role != Role::Teacher)
        forbidden("only teachers create assignments");
    const Fields f(body, "assignment",
                   {"group_id", "template_id", "title", "instructions", "references", "due", "criteria", "quiz"});
    Assignment a;
    a.group_id = f.str("group_id");
    a.template_id = f.str("template_id");
    a.title = f.str_or("title", "");
    a.instructions = f.str_or("instructions", "");
    if (f.has("references"))
        for (const auto& r : f.array("references")) {
            if (!r.is_string())
                invalid("references", "not_string", "references must be strings");
            a.references.push_back(r.get<std::string>());
        }
    const auto& due = f.raw("due");
    if (!due.is_number_integer())
        invalid("due", "not_integer", "due must be an integer unix time in seconds");
    a.due = due.get<std::int64_t>();

    const auto st = state();
    const auto* g = State::find(st->groups, a.group_id);
    if (!g)
        not_found("group", a.group_id);
    if (!g->has_teacher(caller.id))
        forbidden("caller does not teach group '" + a.group_id + "'");
    const auto* tpl = find_template(a.template_id);
    if (!tpl)
        invalid("template_id", "unknown_template", "unknown template '" + a.template_id + "'");
    if (a.due * 1000 <= now_ms())
        invalid("due", "in_past", "due must be in the future");
    if (f.has("criteria"))
        a.criteria = parse_criteria(f.raw("criteria"), *tpl);
    if (f.has("quiz"))
        a.quiz = parse_quiz(f.array("quiz"));

    std::lock_guard lk(write_mu_);
    const auto cur = current();
    if (!State::find(cur->groups, a.group_id))
        not_found("group", a.group_id);
    a.id = mint_id(*cur, "a");
    a.created_by = caller.id;
    a.created_ms = now_ms();
    auto ev = event("assignment_created");
    ev["assignment"] = to_json(a);
    commit(std::move(ev), caller.id);
    return to_json(a);
}

json LabService::list_assignments(const UserAccount& caller, const std::string& group_id) const
{
    const auto st = state();
    auto member = [&](const StudentGroup& g) {
        return caller.role == Role::Administrator || g.has_teacher(caller.id) || g.has_student(caller.id);
    };
    if (!group_id.empty()) {
        const auto* g = State::find(st->groups, group_id);
        if (!g)
            not_found("group", group_id);
        if (!member(*g))
            forbidden("caller is not a member of group '" + group_id + "'");
    }
    json out = json::array();
    for (const auto& [id, a] : st->assignments) {
        if (!group_id.empty() ? a->group_id == group_id : member(*st->groups.at(a->group_id)))
            out.push_back(assignment_view(*a, caller));
    }
    return out;
}

// ---- runs -------------------------------------------------------------------

json LabService::create_run(const UserAccount& caller, const json& body)
{
    const auto config = parse_config(body);
    const auto* tpl = find_template(config.template_id);
    if (!tpl)
        invalid("template_id", "unknown_template", "unknown template '" + config.template_id + "'");
    const auto report = scheme::validate_config(*tpl, config);
    if (!report.empty())
        throw ApiError(422, "invalid_config", "config violates the template", scheme::report_to_json(report));

    RunRecord r;
    {
        std::lock_guard lk(write_mu_);
        r.id = mint_id(*current(), "run");
        r.owner_id = caller.id;
        r.template_id = config.template_id;
        r.config = config;
        r.created_ms = now_ms();
        auto ev = event("run_created");
        ev["run"] = to_json(r, false);
        commit(std::move(ev), caller.id);
    }
    enqueue_run(r.id);
    return to_json(r, false);
}

namespace {

const RunRecord& readable_run(const State& st, const UserAccount& caller, const std::string& run_id)
{
    const auto* r = State::find(st.runs, run_id);
    if (!r)
        not_found("run", run_id);
    const bool ok = r->owner_id == caller.id || caller.role == Role::Administrator ||
                    (caller.role == Role::Teacher && st.teaches_student(caller.id, r->owner_id));
    if (!ok)
        forbidden("run '" + run_id + "' belongs to another user");
    return *r;
}

} // namespace

json LabService::get_run(const UserAccount& caller, const std::string& run_id) const
{
    const auto st = state();
    return to_json(readable_run(*st, caller, run_id), true);
}

std::string LabService::run_csv(const UserAccount& caller, const std::string& run_id) const
{
    const auto st = state();
    const auto& r = readable_run(*st, caller, run_id);
    if (r.status != RunStatus::Done)
        conflict("run '" + run_id + "' is " + to_string(r.status));
    return sim::to_csv(*r.result);
}

json LabService::list_runs(const UserAccount& caller) const
{
    json out = json::array();
    for (const auto& [id, r] : state()->runs)
        if (r->owner_id == caller.id)
            out.push_back(to_json(*r, false));
    return out;
}

void LabService::enqueue_run(const std::string& run_id)
{
    pool_->post([this, run_id] { execute_run(run_id); });
}

void LabService::execute_run(const std::string& run_id)
{
    scheme::SchemeConfig config;
    {
        std::lock_guard lk(write_mu_);
        const auto* r = State::find(current()->runs, run_id);
        if (!r || r->status != RunStatus::Pending)
            return;
        config = r->config;
        auto ev = event("run_started");
        ev["run_id"] = run_id;
        commit(std::move(ev), "system");
    }

    auto ev = event("run_finished");
    ev["run_id"] = run_id;
    try {
        const auto* tpl = find_template(config.template_id);
        if (!tpl)
            throw std::runtime_error("template '" + config.template_id + "' is not installed");
        const auto ts = scheme::run_config(*tpl, config);
        ev["status"] = to_string(RunStatus::Done);
        ev["result"] = to_json(ts);
        ev["checksum"] = sha256_hex(sim::to_csv(ts));
    } catch (const std::exception& e) {
        ev["status"] = to_string(RunStatus::Failed);
        ev["error"] = e.what();
    }

    std::vector<std::string> to_grade;
    {
        std::lock_guard lk(write_mu_);
        const auto* r = State::find(current()->runs, run_id);
        if (!r)
            return;
        const auto owner = r->owner_id;
        commit(std::move(ev), "system");
        for (const auto& [id, s] : current()->submissions)
            if (s->run_id == run_id && s->status >= SubmissionStatus::Submitted && !s->auto_score)
                to_grade.push_back(id);
        enforce_retention(owner);
    }
    for (const auto& id : to_grade)
        enqueue_grading(id);
}

void LabService::enforce_retention(const std::string& owner_id)
{
    const auto st = current();
    std::set<std::string> pinned;
    for (const auto& [id, s] : st->submissions)
        if (!s->run_id.empty())
            pinned.insert(s->run_id);
    std::vector<std::string> owned;
    for (const auto& [id, r] : st->runs)
        if (r->owner_id == owner_id)
            owned.push_back(id);
    // ids are zero padded, so map order is creation order
    std::size_t excess = owned.size() > opt_.runs_kept_per_user ? owned.size() - opt_.runs_kept_per_user : 0;
    for (const auto& id : owned) {
        if (excess == 0)
            break;
        const auto& r = *st->runs.at(id);
        if (pinned.count(id) || r.status == RunStatus::Pending || r.status == RunStatus::Running)
            continue;
        auto ev = event("run_evicted");
        ev["run_id"] = id;
        commit(std::move(ev), "system");
        --excess;
    }
}

// ---- submissions ------------------------------------------------------------

json LabService::save_submission(const UserAccount& caller, const json& body)
{
    if (caller.role != Role::Student)
        forbidden("only students save submissions");
    const Fields f(body, "submission", {"assignment_id", "config", "run_id", "quiz_answers"});
    const auto assignment_id = f.str("assignment_id");
    const auto run_id = f.str_or("run_id", "");
    std::optional<scheme::SchemeConfig> config;
    if (f.has("config"))
        config = parse_config(f.raw("config"));

    std::lock_guard lk(write_mu_);
    const auto st = current();
    const auto* a = State::find(st->assignments, assignment_id);
    if (!a)
        not_found("assignment", assignment_id);
    if (!st->groups.at(a->group_id)->has_student(caller.id))
        forbidden("caller is not a student of the assignment's group");
    const auto* existing = st->submission_for(assignment_id, caller.id);
    if (existing && existing->status != SubmissionStatus::Saved)
        conflict("submission is already " + to_string(existing->status));

    const auto* tpl = find_template(a->template_id);
    if (config) {
        if (config->template_id != a->template_id)
            invalid("config.template_id", "template_mismatch", "config is for another template");
        if (!tpl)
            invalid("config.template_id", "unknown_template", "template is not installed");
        const auto report = scheme::validate_config(*tpl, *config);
        if (!report.empty())
            throw ApiError(422, "invalid_config", "config violates the template", scheme::report_to_json(report));
    }
    if (!run_id.empty()) {
        const auto* r = State::find(st->runs, run_id);
        if (!r)
            not_found("run", run_id);
        if (r->owner_id != caller.id)
            invalid("run_id", "run_not_owned", "run belongs to another user");
        if (r->template_id != a->template_id)
            invalid("run_id", "template_mismatch", "run used template '" + r->template_id + "'");
        if (config && !(*config == r->config))
            invalid("config", "config_mismatch", "config differs from the run's config");
        if (!config)
            config = r->config;
    }

    Submission s;
    s.id = existing ? existing->id : mint_id(*st, "sub");
    s.assignment_id = assignment_id;
    s.student_id = caller.id;
    s.config = config;
    s.run_id = run_id;
    if (f.has("quiz_answers"))
        s.quiz_answers = parse_answers(f.array("quiz_answers"), *a);
    s.status = SubmissionStatus::Saved;
    s.updated_ms = now_ms();
    auto ev = event("submission_saved");
    ev["submission"] = to_json(s);
    commit(std::move(ev), caller.id);
    return to_json(*current()->submissions.at(s.id));
}

json LabService::submit_submission(const UserAccount& caller, const std::string& submission_id)
{
    {
        std::lock_guard lk(write_mu_);
        const auto st = current();
        const auto* s = State::find(st->submissions, submission_id);
        if (!s)
            not_found("submission", submission_id);
        if (s->student_id != caller.id)
            forbidden("only the author submits a submission");
        if (s->status != SubmissionStatus::Saved)
            conflict("submission is already " + to_string(s->status));
        if (s->run_id.empty())
            invalid("run_id", "run_required", "a run is required to submit");
        auto ev = event("submission_submitted");
        ev["submission_id"] = submission_id;
        commit(std::move(ev), caller.id);
    }
    enqueue_grading(submission_id);
    return to_json(*state()->submissions.at(submission_id));
}

void LabService::enqueue_grading(const std::string& submission_id)
{
    pool_->post([this, submission_id] { grade(submission_id); });
}

void LabService::grade(const std::string& submission_id)
{
    std::lock_guard lk(write_mu_);
    const auto st = current();
    const auto* s = State::find(st->submissions, submission_id);
    if (!s || s->status < SubmissionStatus::Submitted || s->auto_score)
        return;
    const auto* r = State::find(st->runs, s->run_id);
    if (!r || r->status == RunStatus::Pending || r->status == RunStatus::Running)
        return; // deferred until the run finishes
    const auto outcome = auto_grade(*st->assignments.at(s->assignment_id), *r, s->quiz_answers);
    auto ev = event("submission_graded");
    ev["submission_id"] = submission_id;
    ev["score"] = outcome.score;
    ev["report"] = outcome.report;
    commit(std::move(ev), "system");
}

json LabService::review_submission(const UserAccount& caller, const std::string& submission_id, const json& body)
{
    if (caller.role != Role::Teacher)
        forbidden("only teachers review submissions");
    std::lock_guard lk(write_mu_);
    const auto st = current();
    const auto* s = State::find(st->submissions, submission_id);
    if (!s)
        not_found("submission", submission_id);
    const auto& a = *st->assignments.at(s->assignment_id);
    if (!st->groups.at(a.group_id)->has_teacher(caller.id))
        forbidden("caller does not teach the submission's group");
    const Fields f(body, "review", {"verdict", "comment"});
    const auto verdict = f.str("verdict");
    SubmissionStatus target;
    if (verdict == "checked")
        target = SubmissionStatus::TutorChecked;
    else if (verdict == "certify")
        target = SubmissionStatus::Certified;
    else
        invalid("verdict", "unknown_verdict", "verdict must be 'checked' or 'certify'");
    if (s->status < SubmissionStatus::Submitted || target <= s->status)
        conflict("cannot move a " + to_string(s->status) + " submission to " + to_string(target));
    auto ev = event("submission_reviewed");
    ev["submission_id"] = submission_id;
    ev["status"] = to_string(target);
    ev["comment"] = f.str_or("comment", "");
    ev["reviewer_id"] = caller.id;
    commit(std::move(ev), caller.id);
    return to_json(*current()->submissions.at(submission_id));
}

json LabService::get_submission(const UserAccount& caller, const std::string& submission_id) const
{
    const auto st = state();
    const auto* s = State::find(st->submissions, submission_id);
    if (!s)
        not_found("submission", submission_id);
    const auto& g = *st->groups.at(st->assignments.at(s->assignment_id)->group_id);
    if (!(s->student_id == caller.id || caller.role == Role::Administrator || g.has_teacher(caller.id)))
        forbidden("submission belongs to another student");
    return to_json(*s);
}

json LabService::list_submissions(const UserAccount& caller, const std::string& assignment_id) const
{
    const auto st = state();
    if (!assignment_id.empty()) {
        const auto* a = State::find(st->assignments, assignment_id);
        if (!a)
            not_found("assignment", assignment_id);
        const auto& g = *st->groups.at(a->group_id);
        if (!(caller.role == Role::Administrator || g.has_teacher(caller.id) || g.has_student(caller.id)))
            forbidden("caller is not a member of the assignment's group");
    }
    json out = json::array();
    for (const auto& [id, s] : st->submissions) {
        if (!assignment_id.empty() && s->assignment_id != assignment_id)
            continue;
        const auto& g = *st->groups.at(st->assignments.at(s->assignment_id)->group_id);
        if (s->student_id == caller.id || caller.role == Role::Administrator || g.has_teacher(caller.id))
            out.push_back(to_json(*s));
    }
    return out;
}

json LabService::progress_report(const UserAccount& caller, const std::string& group_id) const
{
    const auto st = state();
    const auto* g = State::find(st->groups, group_id);
    if (!g)
        not_found("group", group_id);
    if (!(caller.role == Role::Administrator || g->has_teacher(caller.id)))
        forbidden("only administrators and the group's teachers see its progress");
    json rows = json::array();
    for (const auto& student : g->student_ids) {
        const auto* u = State::find(st->users, student);
        for (const auto& [aid, a] : st->assignments) {
            if (a->group_id != group_id)
                continue;
            const auto* s = st->submission_for(aid, student);
            rows.push_back({{"student_id", student},
                            {"login", u ? json(u->login) : json()},
                            {"display_name", u ? json(u->display_name) : json()},
                            {"assignment_id", aid},
                            {"title", a->title},
                            {"submission_id", s ? json(s->id) : json()},
                            {"status", s ? json(to_string(s->status)) : json()},
                            {"auto_score", s && s->auto_score ? json(*s->auto_score) : json()},
                            {"certified", s && s->status == SubmissionStatus::Certified}});
        }
    }
    return {{"group_id", group_id}, {"rows", std::move(rows)}};
}

} // namespace vlab::service
