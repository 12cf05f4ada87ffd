#pragma once

#include "vlab/scheme/config.hpp"
#include "vlab/service/crypto.hpp"
#include "vlab/sim/time_series.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Service domain state. The state is rebuilt by applying events in order;
// every entity is immutable once published and shared between snapshots.
namespace vlab::service {

enum class Role { Administrator, Teacher, Student };
std::string to_string(Role r);
Role role_from_string(const std::string& s);

/// Deployment tier a user may reach; ordered standalone < corporate < global.
enum class AccessLevel { Standalone, Corporate, Global };
std::string to_string(AccessLevel a);
AccessLevel access_from_string(const std::string& s);

struct UserAccount {
    std::string id;
    std::string login;
    PasswordHash password;
    Role role = Role::Student;
    std::string display_name;
    bool active = true;
    AccessLevel access = AccessLevel::Global;
    std::int64_t created_ms = 0;
};

struct StudentGroup {
    std::string id;
    std::string name;
    std::vector<std::string> teacher_ids;
    std::vector<std::string> student_ids;

    bool has_teacher(const std::string& user) const;
    bool has_student(const std::string& user) const;
};

struct GradeCheck {
    std::string channel;
    double probe = 0.0;
    double expected = 0.0;
    double rel_tol = 0.01;
};

struct PropertyCheck {
    enum class Kind { FinalValueBelow, FinalValueAbove };
    std::string channel;
    Kind property = Kind::FinalValueBelow;
    double threshold = 0.0;
};

struct GradeCriteria {
    std::vector<GradeCheck> checks;
    std::vector<PropertyCheck> properties;
};

struct QuizQuestion {
    std::string question_id;
    std::string text;
    std::vector<std::string> choices;
    int correct_index = 0;
};

struct Assignment {
    std::string id;
    std::string group_id;
    std::string template_id;
    std::string title;
    std::string instructions;
    std::vector<std::string> references;
    /// Unix seconds.
    std::int64_t due = 0;
    GradeCriteria criteria;
    std::vector<QuizQuestion> quiz;
    std::string created_by;
    std::int64_t created_ms = 0;
};

enum class SubmissionStatus { Saved, Submitted, AutoChecked, TutorChecked, Certified };
std::string to_string(SubmissionStatus s);
SubmissionStatus submission_status_from_string(const std::string& s);

struct Submission {
    std::string id;
    std::string assignment_id;
    std::string student_id;
    std::optional<scheme::SchemeConfig> config;
    std::string run_id;
    std::vector<int> quiz_answers;
    SubmissionStatus status = SubmissionStatus::Saved;
    std::optional<double> auto_score;
    nlohmann::json grade_report; // null until graded
    std::string tutor_comment;
    std::string reviewer_id;
    std::int64_t updated_ms = 0;
};

enum class RunStatus { Pending, Running, Done, Failed };
std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

struct RunRecord {
    std::string id;
    std::string owner_id;
    std::string template_id;
    scheme::SchemeConfig config;
    RunStatus status = RunStatus::Pending;
    std::optional<sim::TimeSeries> result;
    std::string error;
    /// SHA-256 of the CSV export of the result.
    std::string checksum;
    std::int64_t created_ms = 0;
    std::int64_t finished_ms = 0;
};

template <class T>
using Table = std::map<std::string, std::shared_ptr<const T>>;

struct State {
    std::uint64_t seq = 0;
    std::uint64_t next_id = 1;
    Table<UserAccount> users;
    Table<StudentGroup> groups;
    Table<Assignment> assignments;
    Table<Submission> submissions;
    Table<RunRecord> runs;

    const UserAccount* user_by_login(const std::string& login) const;
    template <class T>
    static const T* find(const Table<T>& t, const std::string& id)
    {
        const auto it = t.find(id);
        return it == t.end() ? nullptr : it->second.get();
    }
    /// Submission of a student for an assignment, if any.
    const Submission* submission_for(const std::string& assignment_id, const std::string& student_id) const;
    /// True when the caller teaches some group the student belongs to.
    bool teaches_student(const std::string& teacher_id, const std::string& student_id) const;
};

/// Inconsistent event or snapshot.
class StateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Applies one event (which carries its own seq). Throws StateError when the
/// event does not fit the state.
void apply_event(State& state, const nlohmann::json& event);

/// Canonical form: sorted keys, shortest round-trip numbers.
nlohmann::json state_to_json(const State& state);
State state_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const UserAccount& u, bool with_secret);
nlohmann::json to_json(const StudentGroup& g);
nlohmann::json to_json(const Assignment& a);
nlohmann::json to_json(const Submission& s);
nlohmann::json to_json(const RunRecord& r, bool with_result);
nlohmann::json to_json(const sim::TimeSeries& ts);
nlohmann::json to_json(const GradeCriteria& c);
nlohmann::json to_json(const QuizQuestion& q);

UserAccount user_from_json(const nlohmann::json& j);
StudentGroup group_from_json(const nlohmann::json& j);
Assignment assignment_from_json(const nlohmann::json& j);
Submission submission_from_json(const nlohmann::json& j);
RunRecord run_from_json(const nlohmann::json& j);
sim::TimeSeries time_series_from_json(const nlohmann::json& j);
GradeCriteria criteria_from_json(const nlohmann::json& j);
QuizQuestion quiz_question_from_json(const nlohmann::json& j);

} // namespace vlab::service
