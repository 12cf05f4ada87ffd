#include "vlab/service/state.hpp"

#include <algorithm>

namespace vlab::service {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw StateError(what); }

template <class T>
std::shared_ptr<const T> share(T v)
{
    return std::make_shared<const T>(std::move(v));
}

// Keyed by id; the key is copied before the value is moved away.
template <class T>
void put(Table<T>& table, T v)
{
    auto id = v.id;
    table[std::move(id)] = share(std::move(v));
}

template <class T>
T require(const Table<T>& table, const std::string& id, const char* what)
{
    const auto it = table.find(id);
    if (it == table.end())
        bad(std::string("event refers to unknown ") + what + " '" + id + "'");
    return *it->second;
}

json opt_string(const std::string& s) { return s.empty() ? json() : json(s); }
std::string string_or_empty(const json& j, const char* key)
{
    return j.contains(key) && j.at(key).is_string() ? j.at(key).get<std::string>() : std::string();
}

} // namespace

std::string to_string(Role r)
{
    switch (r) {
    case Role::Administrator: return "Administrator";
    case Role::Teacher: return "Teacher";
    case Role::Student: return "Student";
    }
    return "?";
}

Role role_from_string(const std::string& s)
{
    for (auto r : {Role::Administrator, Role::Teacher, Role::Student})
        if (to_string(r) == s)
            return r;
    throw std::invalid_argument("unknown role '" + s + "'");
}

std::string to_string(AccessLevel a)
{
    switch (a) {
    case AccessLevel::Standalone: return "standalone";
    case AccessLevel::Corporate: return "corporate";
    case AccessLevel::Global: return "global";
    }
    return "?";
}

AccessLevel access_from_string(const std::string& s)
{
    for (auto a : {AccessLevel::Standalone, AccessLevel::Corporate, AccessLevel::Global})
        if (to_string(a) == s)
            return a;
    throw std::invalid_argument("unknown access level '" + s + "'");
}

std::string to_string(SubmissionStatus s)
{
    switch (s) {
    case SubmissionStatus::Saved: return "Saved";
    case SubmissionStatus::Submitted: return "Submitted";
    case SubmissionStatus::AutoChecked: return "AutoChecked";
    case SubmissionStatus::TutorChecked: return "TutorChecked";
    case SubmissionStatus::Certified: return "Certified";
    }
    return "?";
}

SubmissionStatus submission_status_from_string(const std::string& s)
{
    for (auto v : {SubmissionStatus::Saved, SubmissionStatus::Submitted, SubmissionStatus::AutoChecked,
                   SubmissionStatus::TutorChecked, SubmissionStatus::Certified})
        if (to_string(v) == s)
            return v;
    throw std::invalid_argument("unknown submission status '" + s + "'");
}

std::string to_string(RunStatus s)
{
    switch (s) {
    case RunStatus::Pending: return "Pending";
    case RunStatus::Running: return "Running";
    case RunStatus::Done: return "Done";
    case RunStatus::Failed: return "Failed";
    }
    return "?";
}

RunStatus run_status_from_string(const std::string& s)
{
    for (auto v : {RunStatus::Pending, RunStatus::Running, RunStatus::Done, RunStatus::Failed})
        if (to_string(v) == s)
            return v;
    throw std::invalid_argument("unknown run status '" + s + "'");
}

bool StudentGroup::has_teacher(const std::string& user) const
{
    return std::find(teacher_ids.begin(), teacher_ids.end(), user) != teacher_ids.end();
}

bool StudentGroup::has_student(const std::string& user) const
{
    return std::find(student_ids.begin(), student_ids.end(), user) != student_ids.end();
}

const UserAccount* State::user_by_login(const std::string& login) const
{
    for (const auto& [id, u] : users)
        if (u->login == login)
            return u.get();
    return nullptr;
}

const Submission* State::submission_for(const std::string& assignment_id, const std::string& student_id) const
{
    for (const auto& [id, s] : submissions)
        if (s->assignment_id == assignment_id && s->student_id == student_id)
            return s.get();
    return nullptr;
}

bool State::teaches_student(const std::string& teacher_id, const std::string& student_id) const
{
    return std::any_of(groups.begin(), groups.end(), [&](const auto& g) {
        return g.second->has_teacher(teacher_id) && g.second->has_student(student_id);
    });
}

// ---- JSON forms -----------------------------------------------------------

json to_json(const UserAccount& u, bool with_secret)
{
    json j{{"id", u.id},
           {"login", u.login},
           {"role", to_string(u.role)},
           {"display_name", u.display_name},
           {"active", u.active},
           {"access", to_string(u.access)},
           {"created_ms", u.created_ms}};
    if (with_secret)
        j["password"] = to_json(u.password);
    return j;
}

UserAccount user_from_json(const json& j)
{
    UserAccount u;
    u.id = j.at("id").get<std::string>();
    u.login = j.at("login").get<std::string>();
    u.role = role_from_string(j.at("role").get<std::string>());
    u.display_name = j.at("display_name").get<std::string>();
    u.active = j.at("active").get<bool>();
    u.access = access_from_string(j.at("access").get<std::string>());
    u.created_ms = j.at("created_ms").get<std::int64_t>();
    u.password = password_hash_from_json(j.at("password"));
    return u;
}

json to_json(const StudentGroup& g)
{
    return {{"id", g.id}, {"name", g.name}, {"teacher_ids", g.teacher_ids}, {"student_ids", g.student_ids}};
}

StudentGroup group_from_json(const json& j)
{
    return {j.at("id").get<std::string>(), j.at("name").get<std::string>(),
            j.at("teacher_ids").get<std::vector<std::string>>(), j.at("student_ids").get<std::vector<std::string>>()};
}

json to_json(const GradeCriteria& c)
{
    json checks = json::array(), props = json::array();
    for (const auto& k : c.checks)
        checks.push_back({{"channel", k.channel}, {"probe", k.probe}, {"expected", k.expected}, {"rel_tol", k.rel_tol}});
    for (const auto& p : c.properties)
        props.push_back({{"channel", p.channel},
                         {"property", p.property == PropertyCheck::Kind::FinalValueBelow ? "final_value_below"
                                                                                         : "final_value_above"},
                         {"threshold", p.threshold}});
    return {{"checks", checks}, {"properties", props}};
}

GradeCriteria criteria_from_json(const json& j)
{
    GradeCriteria c;
    for (const auto& k : j.at("checks"))
        c.checks.push_back({k.at("channel").get<std::string>(), k.at("probe").get<double>(),
                            k.at("expected").get<double>(), k.at("rel_tol").get<double>()});
    for (const auto& p : j.at("properties")) {
        const auto prop = p.at("property").get<std::string>();
        PropertyCheck pc;
        pc.channel = p.at("channel").get<std::string>();
        if (prop == "final_value_below")
            pc.property = PropertyCheck::Kind::FinalValueBelow;
        else if (prop == "final_value_above")
            pc.property = PropertyCheck::Kind::FinalValueAbove;
        else
            throw std::invalid_argument("unknown property '" + prop + "'");
        pc.threshold = p.at("threshold").get<double>();
        c.properties.push_back(pc);
    }
    return c;
}

json to_json(const QuizQuestion& q)
{
    return {{"question_id", q.question_id}, {"text", q.text}, {"choices", q.choices}, {"correct_index", q.correct_index}};
}

QuizQuestion quiz_question_from_json(const json& j)
{
    return {j.at("question_id").get<std::string>(), j.at("text").get<std::string>(),
            j.at("choices").get<std::vector<std::string>>(), j.at("correct_index").get<int>()};
}

json to_json(const Assignment& a)
{
    json quiz = json::array();
    for (const auto& q : a.quiz)
        quiz.push_back(to_json(q));
    return {{"id", a.id},
            {"group_id", a.group_id},
            {"template_id", a.template_id},
            {"title", a.title},
            {"instructions", a.instructions},
            {"references", a.references},
            {"due", a.due},
            {"criteria", to_json(a.criteria)},
            {"quiz", quiz},
            {"created_by", a.created_by},
            {"created_ms", a.created_ms}};
}

Assignment assignment_from_json(const json& j)
{
    Assignment a;
    a.id = j.at("id").get<std::string>();
    a.group_id = j.at("group_id").get<std::string>();
    a.template_id = j.at("template_id").get<std::string>();
    a.title = j.at("title").get<std::string>();
    a.instructions = j.at("instructions").get<std::string>();
    a.references = j.at("references").get<std::vector<std::string>>();
    a.due = j.at("due").get<std::int64_t>();
    a.criteria = criteria_from_json(j.at("criteria"));
    for (const auto& q : j.at("quiz"))
        a.quiz.push_back(quiz_question_from_json(q));
    a.created_by = j.at("created_by").get<std::string>();
    a.created_ms = j.at("created_ms").get<std::int64_t>();
    return a;
}

json to_json(const Submission& s)
{
    return {{"id", s.id},
            {"assignment_id", s.assignment_id},
            {"student_id", s.student_id},
            {"config", s.config ? scheme::config_to_json(*s.config) : json()},
            {"run_id", opt_string(s.run_id)},
            {"quiz_answers", s.quiz_answers},
            {"status", to_string(s.status)},
            {"auto_score", s.auto_score ? json(*s.auto_score) : json()},
            {"grade_report", s.grade_report},
            {"tutor_comment", opt_string(s.tutor_comment)},
            {"reviewer_id", opt_string(s.reviewer_id)},
            {"updated_ms", s.updated_ms}};
}

Submission submission_from_json(const json& j)
{
    Submission s;
    s.id = j.at("id").get<std::string>();
    s.assignment_id = j.at("assignment_id").get<std::string>();
    s.student_id = j.at("student_id").get<std::string>();
    if (!j.at("config").is_null())
        s.config = scheme::config_from_json(j.at("config"));
    s.run_id = string_or_empty(j, "run_id");
    s.quiz_answers = j.at("quiz_answers").get<std::vector<int>>();
    s.status = submission_status_from_string(j.at("status").get<std::string>());
    if (!j.at("auto_score").is_null())
        s.auto_score = j.at("auto_score").get<double>();
    s.grade_report = j.at("grade_report");
    s.tutor_comment = string_or_empty(j, "tutor_comment");
    s.reviewer_id = string_or_empty(j, "reviewer_id");
    s.updated_ms = j.at("updated_ms").get<std::int64_t>();
    return s;
}

json to_json(const sim::TimeSeries& ts)
{
    json channels = json::array();
    for (const auto& c : ts.channels())
        channels.push_back({{"label", c.label}, {"unit", c.unit}, {"values", c.values}});
    return {{"t", ts.times()}, {"channels", channels}};
}

sim::TimeSeries time_series_from_json(const json& j)
{
    sim::TimeSeries ts(j.at("t").get<std::vector<double>>());
    for (const auto& c : j.at("channels"))
        ts.add_channel(c.at("label").get<std::string>(), c.at("unit").get<std::string>(),
                       c.at("values").get<std::vector<double>>());
    return ts;
}

json to_json(const RunRecord& r, bool with_result)
{
    json j{{"id", r.id},
           {"owner_id", r.owner_id},
           {"template_id", r.template_id},
           {"config", scheme::config_to_json(r.config)},
           {"status", to_string(r.status)},
           {"error", opt_string(r.error)},
           {"checksum", opt_string(r.checksum)},
           {"created_ms", r.created_ms},
           {"finished_ms", r.finished_ms}};
    if (with_result)
        j["result"] = r.result ? to_json(*r.result) : json();
    return j;
}

RunRecord run_from_json(const json& j)
{
    RunRecord r;
    r.id = j.at("id").get<std::string>();
    r.owner_id = j.at("owner_id").get<std::string>();
    r.template_id = j.at("template_id").get<std::string>();
    r.config = scheme::config_from_json(j.at("config"));
    r.status = run_status_from_string(j.at("status").get<std::string>());
    r.error = string_or_empty(j, "error");
    r.checksum = string_or_empty(j, "checksum");
    r.created_ms = j.at("created_ms").get<std::int64_t>();
    r.finished_ms = j.at("finished_ms").get<std::int64_t>();
    if (j.contains("result") && !j.at("result").is_null())
        r.result = time_series_from_json(j.at("result"));
    return r;
}

// ---- events ---------------------------------------------------------------

void apply_event(State& st, const json& ev)
{
    const auto seq = ev.at("seq").get<std::uint64_t>();
    if (seq != st.seq + 1)
        bad("event seq " + std::to_string(seq) + " does not follow " + std::to_string(st.seq));
    const auto type = ev.at("type").get<std::string>();
    const auto ts = ev.at("ts").get<std::int64_t>();

    try {
        if (type == "user_created") {
            auto u = user_from_json(ev.at("user"));
            if (st.users.count(u.id) || st.user_by_login(u.login))
                bad("duplicate user");
            put(st.users, std::move(u));
            ++st.next_id;
        } else if (type == "user_deactivated") {
            auto u = require(st.users, ev.at("user_id").get<std::string>(), "user");
            u.active = false;
            put(st.users, std::move(u));
        } else if (type == "user_access_set") {
            auto u = require(st.users, ev.at("user_id").get<std::string>(), "user");
            u.access = access_from_string(ev.at("access").get<std::string>());
            put(st.users, std::move(u));
        } else if (type == "group_created") {
            auto g = group_from_json(ev.at("group"));
            if (st.groups.count(g.id))
                bad("duplicate group");
            put(st.groups, std::move(g));
            ++st.next_id;
        } else if (type == "group_teacher_added" || type == "group_student_added") {
            auto g = require(st.groups, ev.at("group_id").get<std::string>(), "group");
            const auto user = ev.at("user_id").get<std::string>();
            require(st.users, user, "user");
            auto& list = type == "group_teacher_added" ? g.teacher_ids : g.student_ids;
            if (std::find(list.begin(), list.end(), user) == list.end())
                list.push_back(user);
            put(st.groups, std::move(g));
        } else if (type == "assignment_created") {
            auto a = assignment_from_json(ev.at("assignment"));
            require(st.groups, a.group_id, "group");
            put(st.assignments, std::move(a));
            ++st.next_id;
        } else if (type == "run_created") {
            auto r = run_from_json(ev.at("run"));
            if (st.runs.count(r.id))
                bad("duplicate run");
            put(st.runs, std::move(r));
            ++st.next_id;
        } else if (type == "run_started" || type == "run_requeued") {
            auto r = require(st.runs, ev.at("run_id").get<std::string>(), "run");
            r.status = type == "run_started" ? RunStatus::Running : RunStatus::Pending;
            put(st.runs, std::move(r));
        } else if (type == "run_finished") {
            auto r = require(st.runs, ev.at("run_id").get<std::string>(), "run");
            r.status = run_status_from_string(ev.at("status").get<std::string>());
            if (r.status == RunStatus::Done)
                r.result = time_series_from_json(ev.at("result"));
            else
                r.error = ev.at("error").get<std::string>();
            r.checksum = string_or_empty(ev, "checksum");
            r.finished_ms = ts;
            put(st.runs, std::move(r));
        } else if (type == "run_evicted") {
            const auto id = ev.at("run_id").get<std::string>();
            require(st.runs, id, "run");
            st.runs.erase(id);
        } else if (type == "submission_saved") {
            auto s = submission_from_json(ev.at("submission"));
            if (!st.submissions.count(s.id))
                ++st.next_id;
            put(st.submissions, std::move(s));
        } else if (type == "submission_submitted") {
            auto s = require(st.submissions, ev.at("submission_id").get<std::string>(), "submission");
            s.status = SubmissionStatus::Submitted;
            s.updated_ms = ts;
            put(st.submissions, std::move(s));
        } else if (type == "submission_graded") {
            auto s = require(st.submissions, ev.at("submission_id").get<std::string>(), "submission");
            s.auto_score = ev.at("score").get<double>();
            s.grade_report = ev.at("report");
            if (s.status == SubmissionStatus::Submitted)
                s.status = SubmissionStatus::AutoChecked;
            s.updated_ms = ts;
            put(st.submissions, std::move(s));
        } else if (type == "submission_reviewed") {
            auto s = require(st.submissions, ev.at("submission_id").get<std::string>(), "submission");
            s.status = submission_status_from_string(ev.at("status").get<std::string>());
            s.tutor_comment = ev.at("comment").get<std::string>();
            s.reviewer_id = ev.at("reviewer_id").get<std::string>();
            s.updated_ms = ts;
            put(st.submissions, std::move(s));
        } else {
            bad("unknown event type '" + type + "'");
        }
    } catch (const StateError&) {
        throw;
    } catch (const std::exception& e) {
        bad("malformed " + type + " event: " + e.what());
    }
    st.seq = seq;
}

json state_to_json(const State& st)
{
    json users = json::object(), groups = json::object(), assignments = json::object(), submissions = json::object(),
         runs = json::object();
    for (const auto& [id, u] : st.users)
        users[id] = to_json(*u, true);
    for (const auto& [id, g] : st.groups)
        groups[id] = to_json(*g);
    for (const auto& [id, a] : st.assignments)
        assignments[id] = to_json(*a);
    for (const auto& [id, s] : st.submissions)
        submissions[id] = to_json(*s);
    for (const auto& [id, r] : st.runs)
        runs[id] = to_json(*r, true);
    return {{"seq", st.seq},         {"next_id", st.next_id},         {"users", users},
            {"groups", groups},      {"assignments", assignments},     {"submissions", submissions},
            {"runs", runs}};
}

State state_from_json(const json& doc)
{
    State st;
    try {
        st.seq = doc.at("seq").get<std::uint64_t>();
        st.next_id = doc.at("next_id").get<std::uint64_t>();
        for (const auto& [id, u] : doc.at("users").items())
            st.users[id] = share(user_from_json(u));
        for (const auto& [id, g] : doc.at("groups").items())
            st.groups[id] = share(group_from_json(g));
        for (const auto& [id, a] : doc.at("assignments").items())
            st.assignments[id] = share(assignment_from_json(a));
        for (const auto& [id, s] : doc.at("submissions").items())
            st.submissions[id] = share(submission_from_json(s));
        for (const auto& [id, r] : doc.at("runs").items())
            st.runs[id] = share(run_from_json(r));
    } catch (const std::exception& e) {
        bad(std::string("malformed snapshot: ") + e.what());
    }
    return st;
}

} // namespace vlab::service
