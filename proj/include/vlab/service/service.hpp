#pragma once

#include "vlab/scheme/template.hpp"
#include "vlab/service/event_log.hpp"
#include "vlab/service/state.hpp"
#include "vlab/service/worker_pool.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

namespace vlab::service {

/// Failure carrying the HTTP status it maps to. `violations` is a JSON array
/// (possibly empty) of structured validation problems.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& message,
             nlohmann::json violations = nlohmann::json::array());
    int status() const { return status_; }
    const std::string& code() const { return code_; }
    const nlohmann::json& violations() const { return violations_; }

private:
    int status_;
    std::string code_;
    nlohmann::json violations_;
};

/// loopback → standalone, RFC 1918 → corporate, anything else → global.
AccessLevel tier_for_address(const std::string& host);

struct ServiceOptions {
    /// No directory: state lives in memory only.
    std::optional<std::filesystem::path> data_dir;
    /// Defaults to data_dir/templates when it exists, else the built-ins.
    std::optional<std::filesystem::path> templates_dir;
    std::size_t workers = 2;
    double session_ttl_hours = 12.0;
    int pbkdf2_iterations = 200000;
    /// Snapshot after this many events since the last one; 0 disables.
    std::uint64_t snapshot_every = 100;
    bool durable = true;
    std::size_t runs_kept_per_user = 20;
    /// Host part of the bind address; selects the access tier.
    std::string bind_host = "127.0.0.1";
    std::function<std::int64_t()> clock_ms;
};

struct LoginResult {
    std::string token;
    std::int64_t expires_ms = 0;
    std::shared_ptr<const UserAccount> user;
};

using UserPtr = std::shared_ptr<const UserAccount>;

/// Teaching service core. Mutations are serialized and logged as events;
/// reads work on an immutable published state.
class LabService {
public:
    explicit LabService(ServiceOptions options);
    ~LabService();
    LabService(const LabService&) = delete;
    LabService& operator=(const LabService&) = delete;

    std::shared_ptr<const State> state() const;
    AccessLevel tier() const { return tier_; }
    const std::vector<scheme::SchemeTemplate>& templates() const { return templates_; }
    const scheme::SchemeTemplate* find_template(const std::string& id) const;

    /// Creates the first administrator; refused once any user exists.
    UserPtr bootstrap_admin(const std::string& login, const std::string& password,
                            const std::string& display_name);

    LoginResult login(const std::string& login, const std::string& password);
    void logout(const std::string& token);
    /// Resolves a token to an active user; throws 401 otherwise.
    UserPtr authenticate(const std::string& token) const;

    // Administration
    nlohmann::json create_user(const UserAccount& caller, const nlohmann::json& body);
    nlohmann::json list_users(const UserAccount& caller) const;
    nlohmann::json deactivate_user(const UserAccount& caller, const std::string& user_id);
    nlohmann::json set_access(const UserAccount& caller, const std::string& user_id, const nlohmann::json& body);
    nlohmann::json create_group(const UserAccount& caller, const nlohmann::json& body);
    nlohmann::json add_group_member(const UserAccount& caller, const std::string& group_id,
                                    const nlohmann::json& body, Role role);
    nlohmann::json list_groups(const UserAccount& caller) const;

    nlohmann::json list_templates() const;
    nlohmann::json get_template(const std::string& id) const;

    nlohmann::json create_assignment(const UserAccount& caller, const nlohmann::json& body);
    /// Empty group: every assignment visible to the caller.
    nlohmann::json list_assignments(const UserAccount& caller, const std::string& group_id) const;

    nlohmann::json create_run(const UserAccount& caller, const nlohmann::json& config);
    nlohmann::json get_run(const UserAccount& caller, const std::string& run_id) const;
    std::string run_csv(const UserAccount& caller, const std::string& run_id) const;
    nlohmann::json list_runs(const UserAccount& caller) const;

    nlohmann::json save_submission(const UserAccount& caller, const nlohmann::json& body);
    nlohmann::json submit_submission(const UserAccount& caller, const std::string& submission_id);
    nlohmann::json review_submission(const UserAccount& caller, const std::string& submission_id,
                                     const nlohmann::json& body);
    nlohmann::json get_submission(const UserAccount& caller, const std::string& submission_id) const;
    nlohmann::json list_submissions(const UserAccount& caller, const std::string& assignment_id) const;

    nlohmann::json progress_report(const UserAccount& caller, const std::string& group_id) const;

    /// Blocks until no run or grading job is queued or executing.
    void wait_idle();

    /// Path of the event log, if persistent.
    std::optional<std::filesystem::path> log_path() const;

private:
    ServiceOptions opt_;
    AccessLevel tier_;
    std::vector<scheme::SchemeTemplate> templates_;
    std::unique_ptr<EventLog> log_;

    mutable std::mutex write_mu_;
    std::shared_ptr<const State> state_;
    std::uint64_t since_snapshot_ = 0;

    struct Session {
        std::string user_id;
        std::int64_t expires_ms;
    };
    mutable std::mutex session_mu_;
    mutable std::map<std::string, Session> sessions_;

    std::unique_ptr<WorkerPool> pool_;

    std::int64_t now_ms() const;
    std::string mint_id(const State& st, const char* prefix) const;
    /// Caller holds write_mu_. Applies, persists and publishes one event.
    void commit(nlohmann::json event, const std::string& actor);
    std::shared_ptr<const State> current() const { return state_; }

    void enqueue_run(const std::string& run_id);
    void execute_run(const std::string& run_id);
    void enqueue_grading(const std::string& submission_id);
    void grade(const std::string& submission_id);
    void enforce_retention(const std::string& owner_id);
    void recover();
};

} // namespace vlab::service
