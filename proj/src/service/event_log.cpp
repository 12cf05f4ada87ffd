#include "vlab/service/event_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vlab::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

[[noreturn]] void io_error(const std::string& what)
{
    throw std::runtime_error(what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const fs::path& p)
{
    const char* ptr = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const auto n = ::write(fd, ptr, left);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            io_error("write " + p.string());
        }
        ptr += n;
        left -= static_cast<std::size_t>(n);
    }
}

// Complete lines of the log and the byte length they cover.
struct Lines {
    std::vector<std::string> lines;
    std::size_t complete_bytes = 0;
    bool torn = false;
};

Lines split_log(const std::string& text)
{
    Lines out;
    std::size_t start = 0;
    for (;;) {
        const auto nl = text.find('\n', start);
        if (nl == std::string::npos)
            break;
        if (nl > start)
            out.lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    out.complete_bytes = start;
    out.torn = start < text.size();
    return out;
}

} // namespace

EventLog::EventLog(fs::path dir, bool durable) : dir_(std::move(dir)), durable_(durable)
{
    fs::create_directories(dir_);
}

EventLog::~EventLog()
{
    if (fd_ >= 0)
        ::close(fd_);
}

void EventLog::open_for_append()
{
    if (fd_ >= 0)
        return;
    fd_ = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0)
        io_error("open " + log_path().string());
}

EventLog::Loaded EventLog::load()
{
    Loaded res;
    if (fs::exists(snapshot_path())) {
        try {
            res.state = state_from_json(json::parse(read_file(snapshot_path())).at("state"));
        } catch (const json::exception& e) {
            throw StateError("unreadable snapshot: " + std::string(e.what()));
        }
    }
    const std::uint64_t snap_seq = res.state.seq;

    if (fs::exists(log_path())) {
        const auto text = read_file(log_path());
        auto lines = split_log(text);
        if (lines.torn) {
            // crash mid-append: drop the partial line
            res.torn_tail = true;
            fs::resize_file(log_path(), lines.complete_bytes);
        }
        for (const auto& line : lines.lines) {
            json ev;
            try {
                ev = json::parse(line);
            } catch (const json::parse_error& e) {
                throw StateError("corrupt event log line: " + std::string(e.what()));
            }
            ++res.events_read;
            if (ev.at("seq").get<std::uint64_t>() <= snap_seq)
                continue;
            apply_event(res.state, ev);
        }
    }
    if (res.state.seq < snap_seq)
        throw StateError("snapshot is ahead of the event log");
    return res;
}

State EventLog::replay_all() const
{
    State st;
    if (!fs::exists(log_path()))
        return st;
    for (const auto& line : split_log(read_file(log_path())).lines)
        apply_event(st, json::parse(line));
    return st;
}

void EventLog::append(const json& event)
{
    open_for_append();
    const auto line = event.dump() + "\n";
    // one write per event so a crash leaves at most one torn line
    write_all(fd_, line, log_path());
    if (durable_ && ::fsync(fd_) != 0)
        io_error("fsync " + log_path().string());
}

void EventLog::write_snapshot(const State& state)
{
    const auto tmp = dir_ / "snapshot.json.tmp";
    const json doc{{"seq", state.seq}, {"state", state_to_json(state)}};
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0)
        io_error("open " + tmp.string());
    try {
        write_all(fd, doc.dump(), tmp);
        if (durable_ && ::fsync(fd) != 0)
            io_error("fsync " + tmp.string());
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    fs::rename(tmp, snapshot_path());
}

} // namespace vlab::service
